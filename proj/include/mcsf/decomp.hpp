#pragma once

#include <Eigen/Core>
#include <map>
#include <utility>
#include <vector>

#include "mcsf/dataio.hpp"

namespace mcsf {

enum class Branch { chunk, stride };

// Dual decomposition of step indices {0..n_steps-1}: chunks are maximal runs
// of consecutive steps (local view), strides take every m-th step starting at
// k (global view). Both partition the step range with segment sizes differing
// by at most one.
struct Decomposition {
  int n_steps = 0;
  int m = 0;
  std::vector<std::vector<int>> chunks;
  std::vector<std::vector<int>> strides;
  std::vector<std::pair<int, int>> chunk_pos;   // step -> (segment, offset)
  std::vector<std::pair<int, int>> stride_pos;  // step -> (segment, offset)

  const std::vector<std::vector<int>>& segments(Branch b) const {
    return b == Branch::chunk ? chunks : strides;
  }
};

// Default segment count: ceil(sqrt(n_steps)).
int default_segment_count(int n_steps);

// Splits {0..n_steps-1} into m chunks and m strides. The first
// (n_steps mod m) chunks get one extra element; stride k has
// ceil((n_steps-k)/m) elements. Throws std::invalid_argument for m out
// of [1, n_steps].
Decomposition decompose(int n_steps, int m);

// Gathers a per-step vector into per-segment value lists (the scatter that
// reassemble inverts).
std::vector<Eigen::VectorXd> split_by_segments(const Decomposition& d, Branch b,
                                               const Eigen::VectorXd& values);

// Restores per-segment per-position scalars to temporal order. Exact inverse
// of split_by_segments.
Eigen::VectorXd reassemble(const Decomposition& d, Branch b,
                           const std::vector<Eigen::VectorXd>& segment_values);

// Per difference distance delta: a linear map from |x_t - x_{t-delta}| to a
// scalar (weight vector over the feature dim plus bias).
struct AttentionParams {
  std::vector<int> deltas;
  std::vector<Eigen::VectorXd> weights;  // one per delta, length dim
  Eigen::VectorXd biases;                // one per delta

  int dim() const { return weights.empty() ? 0 : static_cast<int>(weights[0].size()); }
};

// d_t = sum_delta ( w_delta . |x_t - x_{max(t-delta,0)}| + b_delta ).
// The left boundary clamps to x_0, so the t=0 difference is exactly zero.
Eigen::VectorXd difference_attention(const Eigen::MatrixXd& features, const AttentionParams& params);
Eigen::VectorXd difference_attention(const SourceStream& stream, const AttentionParams& params);

// Elementwise sum of per-source attention scores. Key sets must coincide.
Eigen::VectorXd multi_source_attention(const std::map<Source, SourceStream>& streams,
                                       const std::map<Source, AttentionParams>& params);

}  // namespace mcsf
