#include "mcsf/shotselect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mcsf {

Eigen::VectorXd upsample_scores(const Eigen::VectorXd& p, const std::vector<std::int64_t>& picks,
                                std::int64_t n_frames) {
  if (static_cast<std::size_t>(p.size()) != picks.size())
    throw std::invalid_argument("score/picks length mismatch");
  if (picks.empty() || picks.back() >= n_frames || picks.front() < 0)
    throw std::invalid_argument("picks inconsistent with n_frames");

  Eigen::VectorXd out(n_frames);
  std::size_t i = 0;
  for (std::int64_t f = 0; f < n_frames; ++f) {
    while (i + 1 < picks.size() && picks[i + 1] <= f) ++i;
    out(f) = p(static_cast<Eigen::Index>(i));
  }
  return out;
}

StepSegmentation kts_segment_steps(const Eigen::MatrixXd& features, int target_segments) {
  const int T = static_cast<int>(features.rows());
  const int K = target_segments;
  if (K < 1 || K > T)
    throw std::invalid_argument("target segment count " + std::to_string(K) + " out of range [1, " +
                                std::to_string(T) + "]");

  // Prefix sums make each segment cost O(1):
  // cost(a,b) = sum_{t in [a,b)} |x_t|^2 - |sum x_t|^2 / (b-a).
  const int D = static_cast<int>(features.cols());
  Eigen::MatrixXd psum = Eigen::MatrixXd::Zero(T + 1, D);
  Eigen::VectorXd psq = Eigen::VectorXd::Zero(T + 1);
  for (int t = 0; t < T; ++t) {
    psum.row(t + 1) = psum.row(t) + features.row(t);
    psq(t + 1) = psq(t) + features.row(t).squaredNorm();
  }
  auto seg_cost = [&](int a, int b) {
    const Eigen::RowVectorXd s = psum.row(b) - psum.row(a);
    return (psq(b) - psq(a)) - s.squaredNorm() / static_cast<double>(b - a);
  };

  constexpr double inf = std::numeric_limits<double>::infinity();
  // dp[k][t]: best cost of splitting the first t steps into k segments.
  std::vector<std::vector<double>> dp(K + 1, std::vector<double>(T + 1, inf));
  std::vector<std::vector<int>> prev(K + 1, std::vector<int>(T + 1, -1));
  dp[0][0] = 0.0;
  for (int k = 1; k <= K; ++k) {
    for (int t = k; t <= T; ++t) {
      for (int a = k - 1; a < t; ++a) {
        if (dp[k - 1][a] == inf) continue;
        const double c = dp[k - 1][a] + seg_cost(a, t);
        if (c < dp[k][t]) {
          dp[k][t] = c;
          prev[k][t] = a;
        }
      }
    }
  }

  StepSegmentation result;
  result.cost = dp[K][T];
  std::vector<int> bounds = {T};
  for (int k = K, t = T; k >= 1; --k) {
    t = prev[k][t];
    bounds.push_back(t);
  }
  std::reverse(bounds.begin(), bounds.end());
  for (int k = 0; k < K; ++k) result.segments.emplace_back(bounds[k], bounds[k + 1]);
  return result;
}

ShotBoundaries kts_segment(const Eigen::MatrixXd& features, std::optional<int> target_segments,
                           const std::vector<std::int64_t>& picks, std::int64_t n_frames) {
  const int T = static_cast<int>(features.rows());
  const int target = target_segments
                         ? *target_segments
                         : std::max(1, static_cast<int>(std::lround(T / 20.0)));
  const StepSegmentation steps = kts_segment_steps(features, target);

  ShotBoundaries out;
  std::int64_t start = 0;
  for (std::size_t k = 1; k < steps.segments.size(); ++k) {
    const std::int64_t frame = picks[steps.segments[k].first];
    out.segments.emplace_back(start, frame);
    start = frame;
  }
  out.segments.emplace_back(start, n_frames);
  return out;
}

void shot_values(const Eigen::VectorXd& frame_scores, const ShotBoundaries& boundaries,
                 std::vector<double>& values, std::vector<std::int64_t>& weights) {
  values.clear();
  weights.clear();
  for (const auto& [s, e] : boundaries.segments) {
    const Eigen::Index len = static_cast<Eigen::Index>(e - s);
    values.push_back(frame_scores.segment(s, len).mean());
    weights.push_back(e - s);
  }
}

KnapsackResult knapsack_select(const std::vector<double>& values,
                               const std::vector<std::int64_t>& weights, std::int64_t capacity) {
  const std::size_t n = values.size();
  if (weights.size() != n) throw std::invalid_argument("values/weights size mismatch");
  for (auto w : weights)
    if (w <= 0) throw std::invalid_argument("weights must be positive");
  if (capacity < 0) throw std::invalid_argument("capacity must be >= 0");

  const std::size_t W = static_cast<std::size_t>(capacity);
  std::vector<double> best(W + 1, 0.0);
  std::vector<std::vector<std::uint8_t>> take(n, std::vector<std::uint8_t>(W + 1, 0));

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t w = static_cast<std::size_t>(weights[i]);
    if (w > W) continue;
    // descending capacity keeps the row usable as "first i items"
    for (std::size_t c = W; c >= w; --c) {
      const double with = best[c - w] + values[i];
      if (with > best[c]) {  // strict: ties exclude the higher-indexed shot
        best[c] = with;
        take[i][c] = 1;
      }
      if (c == w) break;
    }
  }

  KnapsackResult result;
  result.total_value = best[W];
  std::size_t c = W;
  for (std::size_t i = n; i-- > 0;) {
    if (take[i][c]) {
      result.chosen.push_back(static_cast<int>(i));
      result.total_weight += weights[i];
      c -= static_cast<std::size_t>(weights[i]);
    }
  }
  std::reverse(result.chosen.begin(), result.chosen.end());
  return result;
}

MachineSummary summarize(const VideoRecord& record, const Eigen::VectorXd& p,
                         double budget_fraction, std::optional<int> kts_target, bool force_kts) {
  const Eigen::VectorXd frame_scores = upsample_scores(p, record.picks, record.n_frames);

  MachineSummary summary;
  if (record.change_points && !force_kts) {
    summary.boundaries.segments = *record.change_points;
    summary.used_provided_change_points = true;
  } else {
    const auto it = record.streams.count(Source::objects) ? record.streams.find(Source::objects)
                                                          : record.streams.begin();
    if (it == record.streams.end())
      throw std::invalid_argument("record '" + record.id + "' has no streams to segment");
    summary.boundaries = kts_segment(it->second.values, kts_target, record.picks, record.n_frames);
  }

  std::vector<double> values;
  std::vector<std::int64_t> weights;
  shot_values(frame_scores, summary.boundaries, values, weights);

  summary.budget_frames =
      static_cast<std::int64_t>(std::floor(budget_fraction * static_cast<double>(record.n_frames)));
  const KnapsackResult chosen = knapsack_select(values, weights, summary.budget_frames);
  summary.selected_shots = chosen.chosen;

  summary.mask.assign(static_cast<std::size_t>(record.n_frames), 0);
  for (int k : chosen.chosen) {
    const auto& [s, e] = summary.boundaries.segments[static_cast<std::size_t>(k)];
    for (std::int64_t f = s; f < e; ++f) summary.mask[static_cast<std::size_t>(f)] = 1;
  }
  return summary;
}

}  // namespace mcsf
