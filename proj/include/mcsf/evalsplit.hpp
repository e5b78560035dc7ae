#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mcsf/dataio.hpp"
#include "mcsf/model.hpp"

namespace mcsf {

struct Fold {
  std::vector<std::string> train_keys;
  std::vector<std::string> test_keys;
};

struct SplitSet {
  std::vector<Fold> folds;
};

enum class AggregationMode { avg, max };
const char* to_string(AggregationMode m);
AggregationMode mode_from_string(const std::string& s);

// F1 of two binary masks: precision/recall from the overlap, each 0 when its
// denominator is 0; F1 = 0 when P + R = 0.
double f1_single(const std::vector<std::uint8_t>& machine, const std::vector<std::uint8_t>& user);

struct VideoEval {
  std::vector<double> per_user_f1;
  double aggregated = 0.0;
  AggregationMode mode = AggregationMode::avg;
};

VideoEval evaluate_video(const std::vector<std::uint8_t>& machine_mask,
                         const ReferenceSummaries& refs, AggregationMode mode);

struct FoldVideoEval {
  std::size_t fold = 0;
  std::string video_id;
  VideoEval eval;
};

struct EvalResult {
  std::vector<FoldVideoEval> per_video;
  std::vector<double> per_fold;  // mean over that fold's test videos
  double overall = 0.0;          // mean over folds
  AggregationMode mode = AggregationMode::avg;
};

// For each fold, scores that fold's test videos with the provided scorer,
// summarizes, and evaluates against the references. Each test occurrence is
// weighted once within its fold.
EvalResult cross_validate(const Dataset& dataset, const SplitSet& splits,
                          const std::function<const ScorerParams&(std::size_t fold)>& scorer_for_fold,
                          AggregationMode mode, int m, double budget_fraction = 0.15);

// Fold aggregation over precomputed per-video results (shared by the CLI
// path where summaries come from files).
EvalResult aggregate_evaluations(const SplitSet& splits,
                                 const std::function<VideoEval(std::size_t fold, const std::string& id)>& eval_one,
                                 AggregationMode mode);

struct AuditReport {
  std::size_t universe_size = 0;
  std::vector<std::string> missing_from_test;                 // sorted
  std::vector<std::pair<std::string, int>> duplicated_in_test;  // sorted, with multiplicity
  std::vector<std::string> unknown_keys;                      // in splits but not universe
  double missing_fraction = 0.0;
  double duplicated_fraction = 0.0;
};

// Counts each key's test-set multiplicity across folds: 0 = missing,
// >= 2 = duplicated.
AuditReport audit_splits(const SplitSet& splits, const std::vector<std::string>& universe);

// Seeded shuffle, k test folds with sizes differing by at most one, train =
// universe minus test. Always audits clean.
SplitSet generate_splits(const std::vector<std::string>& universe, int k, std::uint64_t seed);

// JSON list of {train_keys, test_keys}; a {"splits": [...]} wrapper is also
// accepted.
SplitSet load_splits(const std::filesystem::path& path);
void save_splits(const std::filesystem::path& path, const SplitSet& splits);

std::string audit_table(const AuditReport& report);
std::string audit_json(const AuditReport& report);

}  // namespace mcsf
