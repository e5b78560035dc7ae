#include "mcsf/decomp.hpp"

#include <cmath>
#include <stdexcept>

namespace mcsf {

int default_segment_count(int n_steps) {
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_steps))));
}

Decomposition decompose(int n_steps, int m) {
  if (n_steps < 1) throw std::invalid_argument("n_steps must be positive");
  if (m < 1 || m > n_steps)
    throw std::invalid_argument("segment count m=" + std::to_string(m) +
                                " out of range [1, " + std::to_string(n_steps) + "]");

  Decomposition d;
  d.n_steps = n_steps;
  d.m = m;
  d.chunk_pos.resize(n_steps);
  d.stride_pos.resize(n_steps);

  // Chunks: consecutive runs, the first (n_steps mod m) chunks one longer.
  const int base = n_steps / m;
  const int extra = n_steps % m;
  int next = 0;
  for (int k = 0; k < m; ++k) {
    const int len = base + (k < extra ? 1 : 0);
    std::vector<int> seg(len);
    for (int j = 0; j < len; ++j) {
      seg[j] = next;
      d.chunk_pos[next] = {k, j};
      ++next;
    }
    d.chunks.push_back(std::move(seg));
  }

  // Strides: k, k+m, k+2m, ...
  for (int k = 0; k < m; ++k) {
    std::vector<int> seg;
    for (int t = k; t < n_steps; t += m) {
      d.stride_pos[t] = {k, static_cast<int>(seg.size())};
      seg.push_back(t);
    }
    d.strides.push_back(std::move(seg));
  }

  return d;
}

std::vector<Eigen::VectorXd> split_by_segments(const Decomposition& d, Branch b,
                                               const Eigen::VectorXd& values) {
  if (values.size() != d.n_steps)
    throw std::invalid_argument("value length does not match decomposition n_steps");
  const auto& segs = d.segments(b);
  std::vector<Eigen::VectorXd> out(segs.size());
  for (std::size_t k = 0; k < segs.size(); ++k) {
    out[k].resize(static_cast<Eigen::Index>(segs[k].size()));
    for (std::size_t j = 0; j < segs[k].size(); ++j) out[k](j) = values(segs[k][j]);
  }
  return out;
}

Eigen::VectorXd reassemble(const Decomposition& d, Branch b,
                           const std::vector<Eigen::VectorXd>& segment_values) {
  const auto& segs = d.segments(b);
  if (segment_values.size() != segs.size())
    throw std::invalid_argument("segment count mismatch in reassemble");
  Eigen::VectorXd out(d.n_steps);
  for (std::size_t k = 0; k < segs.size(); ++k) {
    if (segment_values[k].size() != static_cast<Eigen::Index>(segs[k].size()))
      throw std::invalid_argument("segment " + std::to_string(k) + " length mismatch in reassemble");
    for (std::size_t j = 0; j < segs[k].size(); ++j) out(segs[k][j]) = segment_values[k](j);
  }
  return out;
}

Eigen::VectorXd difference_attention(const Eigen::MatrixXd& features, const AttentionParams& params) {
  const int n_steps = static_cast<int>(features.rows());
  const int dim = static_cast<int>(features.cols());
  if (params.deltas.size() != params.weights.size() ||
      static_cast<Eigen::Index>(params.deltas.size()) != params.biases.size())
    throw std::invalid_argument("attention parameter arity mismatch");
  for (const auto& w : params.weights)
    if (w.size() != dim)
      throw std::invalid_argument("attention weight dim " + std::to_string(w.size()) +
                                  " != feature dim " + std::to_string(dim));

  Eigen::VectorXd d = Eigen::VectorXd::Zero(n_steps);
  for (std::size_t i = 0; i < params.deltas.size(); ++i) {
    const int delta = params.deltas[i];
    for (int t = 0; t < n_steps; ++t) {
      const int prev = std::max(t - delta, 0);
      const Eigen::VectorXd absdiff = (features.row(t) - features.row(prev)).cwiseAbs().transpose();
      d(t) += params.weights[i].dot(absdiff) + params.biases(i);
    }
  }
  return d;
}

Eigen::VectorXd difference_attention(const SourceStream& stream, const AttentionParams& params) {
  return difference_attention(stream.values, params);
}

Eigen::VectorXd multi_source_attention(const std::map<Source, SourceStream>& streams,
                                       const std::map<Source, AttentionParams>& params) {
  if (streams.size() != params.size())
    throw std::invalid_argument("stream/parameter key sets differ");
  Eigen::VectorXd total;
  for (const auto& [tag, stream] : streams) {
    const auto it = params.find(tag);
    if (it == params.end())
      throw std::invalid_argument(std::string("no attention parameters for source ") + to_string(tag));
    const Eigen::VectorXd d = difference_attention(stream, it->second);
    if (total.size() == 0)
      total = d;
    else if (total.size() != d.size())
      throw std::invalid_argument("streams disagree on n_steps");
    else
      total += d;
  }
  return total;
}

}  // namespace mcsf
