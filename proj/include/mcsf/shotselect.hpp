#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "mcsf/dataio.hpp"

namespace mcsf {

// Contiguous partition of [0, n_frames) into shots.
struct ShotBoundaries {
  std::vector<FrameSpan> segments;
};

struct MachineSummary {
  std::vector<std::uint8_t> mask;  // length n_frames
  std::vector<int> selected_shots;
  std::int64_t budget_frames = 0;
  ShotBoundaries boundaries;
  bool used_provided_change_points = false;
};

struct KnapsackResult {
  std::vector<int> chosen;
  double total_value = 0.0;
  std::int64_t total_weight = 0;
};

// Step-function expansion of per-step scores to original frames: frame f
// takes p_i for the unique i with picks[i] <= f < picks[i+1]; the last step
// covers through n_frames-1 and frames before picks[0] take p_0.
Eigen::VectorXd upsample_scores(const Eigen::VectorXd& p, const std::vector<std::int64_t>& picks,
                                std::int64_t n_frames);

struct StepSegmentation {
  std::vector<std::pair<int, int>> segments;  // [start, end) over steps
  double cost = 0.0;
};

// Kernel temporal segmentation over steps: dynamic program minimizing the
// total within-segment squared deviation from each segment's mean.
StepSegmentation kts_segment_steps(const Eigen::MatrixXd& features, int target_segments);

// Step-level KTS mapped to original-frame boundaries at the picks of the
// boundary steps. target absent: max(1, round(n_steps/20)) segments.
ShotBoundaries kts_segment(const Eigen::MatrixXd& features, std::optional<int> target_segments,
                           const std::vector<std::int64_t>& picks, std::int64_t n_frames);

// Per shot: value = mean frame score, weight = frame count.
void shot_values(const Eigen::VectorXd& frame_scores, const ShotBoundaries& boundaries,
                 std::vector<double>& values, std::vector<std::int64_t>& weights);

// Exact 0/1 knapsack over capacity. Ties prefer excluding the
// higher-indexed shot.
KnapsackResult knapsack_select(const std::vector<double>& values,
                               const std::vector<std::int64_t>& weights, std::int64_t capacity);

// upsample -> shot boundaries (provided change points unless absent or
// force_kts) -> shot values -> knapsack at floor(budget_fraction * n_frames).
MachineSummary summarize(const VideoRecord& record, const Eigen::VectorXd& p,
                         double budget_fraction = 0.15,
                         std::optional<int> kts_target = std::nullopt, bool force_kts = false);

}  // namespace mcsf
