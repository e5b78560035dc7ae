#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mcsf/dataio.hpp"
#include "mcsf/rng.hpp"

namespace testutil {

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Recursive byte comparison of two directory trees.
inline bool trees_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::vector<std::filesystem::path> rel_a, rel_b;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel_a.push_back(std::filesystem::relative(e.path(), a));
  for (const auto& e : std::filesystem::recursive_directory_iterator(b))
    if (e.is_regular_file()) rel_b.push_back(std::filesystem::relative(e.path(), b));
  std::sort(rel_a.begin(), rel_a.end());
  std::sort(rel_b.begin(), rel_b.end());
  if (rel_a != rel_b) return false;
  for (const auto& rel : rel_a)
    if (read_text(a / rel) != read_text(b / rel)) return false;
  return true;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0;; ++i) {
      auto candidate = base / ("mcsf_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                               std::to_string(i));
      if (std::filesystem::create_directories(candidate)) {
        path_ = candidate;
        break;
      }
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Random record with both feature sources, picks every 15th frame.
inline mcsf::VideoRecord make_record(int n_steps, int dim_objects, int dim_places,
                                     std::uint64_t seed, int n_users = 2) {
  mcsf::Rng rng(seed);
  mcsf::VideoRecord rec;
  rec.id = "test_video";
  rec.n_frames = static_cast<std::int64_t>(n_steps) * 15;
  for (int t = 0; t < n_steps; ++t) rec.picks.push_back(t * 15);

  auto make_stream = [&](mcsf::Source tag, int dim) {
    mcsf::SourceStream s;
    s.tag = tag;
    s.values.resize(n_steps, dim);
    for (int t = 0; t < n_steps; ++t)
      for (int j = 0; j < dim; ++j) s.values(t, j) = rng.uniform(-1.0, 1.0);
    rec.streams.emplace(tag, std::move(s));
  };
  make_stream(mcsf::Source::objects, dim_objects);
  make_stream(mcsf::Source::places, dim_places);

  rec.references.masks.resize(n_users);
  for (auto& mask : rec.references.masks) {
    mask.assign(static_cast<std::size_t>(rec.n_frames), 0);
    for (auto& v : mask) v = rng.uniform() < 0.15 ? 1 : 0;
  }
  return rec;
}

}  // namespace testutil
