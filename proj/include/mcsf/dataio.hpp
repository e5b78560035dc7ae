#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mcsf {

// I/O failure: file missing or unreadable. Maps to exit code 1 in the CLI.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Data is present but wrong: byte-length mismatch, malformed JSON, invariant
// violation. Maps to exit code 2 in the CLI.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Source { objects, places };

const char* to_string(Source s);
Source source_from_string(const std::string& s);

// One feature matrix for one video from one source. Stored on disk as raw
// little-endian f32, promoted to f64 in memory.
struct SourceStream {
  Source tag = Source::objects;
  Eigen::MatrixXd values;  // n_steps x dim

  int n_steps() const { return static_cast<int>(values.rows()); }
  int dim() const { return static_cast<int>(values.cols()); }
};

// Per-user binary reference summaries at original-frame resolution.
struct ReferenceSummaries {
  std::vector<std::vector<std::uint8_t>> masks;  // n_users x n_frames

  int n_users() const { return static_cast<int>(masks.size()); }
};

using FrameSpan = std::pair<std::int64_t, std::int64_t>;  // [start, end)

struct VideoRecord {
  std::string id;
  std::int64_t n_frames = 0;
  std::vector<std::int64_t> picks;  // original-frame index per step
  std::map<Source, SourceStream> streams;
  ReferenceSummaries references;
  std::optional<std::vector<FrameSpan>> change_points;

  int n_steps() const { return static_cast<int>(picks.size()); }
};

struct Dataset {
  std::string name;
  std::vector<VideoRecord> videos;

  const VideoRecord* find(const std::string& id) const;
  std::vector<std::string> keys() const;
};

// One invariant violation. Violations are data, not failures.
struct Violation {
  std::string video_id;
  std::string field;
  std::string message;

  std::string str() const;
};

// Returns every violated invariant of the record, not just the first.
std::vector<Violation> validate_record(const VideoRecord& record);

// Loads manifest.json plus all referenced feature/summary files. Throws
// IoError on missing files, ValidationError on byte-length mismatches,
// malformed manifests, or invariant violations.
Dataset load_dataset(const std::filesystem::path& root);

// Writes manifest.json and all raw files. Feature values are cast to f32.
void save_dataset(const std::filesystem::path& root, const Dataset& dataset);

struct SynthConfig {
  int n_videos = 4;
  std::int64_t n_frames = 300;
  std::map<Source, int> dims = {{Source::objects, 8}, {Source::places, 12}};
  int n_users = 3;
  std::uint64_t seed = 7;
};

// Deterministic synthetic dataset: piecewise-constant segment means plus
// bounded noise, picks every 15th frame (2 steps/s of 30 fps video), user
// masks covering 12-18% of frames biased toward two planted event segments.
// Identical config yields byte-identical output.
Dataset generate_synthetic_dataset(const std::filesystem::path& root, const SynthConfig& config);

}  // namespace mcsf
