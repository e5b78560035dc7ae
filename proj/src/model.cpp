#include "mcsf/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mcsf/rng.hpp"

namespace mcsf {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const char* to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::single_source: return "single_source";
    case FusionStrategy::early: return "early";
    case FusionStrategy::intermediate: return "intermediate";
    case FusionStrategy::late: return "late";
  }
  return "?";
}

FusionStrategy strategy_from_string(const std::string& s) {
  if (s == "single_source") return FusionStrategy::single_source;
  if (s == "early") return FusionStrategy::early;
  if (s == "intermediate") return FusionStrategy::intermediate;
  if (s == "late") return FusionStrategy::late;
  throw std::invalid_argument("unknown fusion strategy '" + s + "'");
}

const char* to_string(LateFusionSpace s) {
  return s == LateFusionSpace::logit ? "logit" : "probability";
}

LateFusionSpace late_space_from_string(const std::string& s) {
  if (s == "logit") return LateFusionSpace::logit;
  if (s == "probability") return LateFusionSpace::probability;
  throw std::invalid_argument("unknown late fusion space '" + s + "'");
}

std::vector<Source> ScorerConfig::required_sources() const {
  if (strategy == FusionStrategy::single_source) return {single_src};
  std::vector<Source> out;
  for (const auto& [tag, _] : dims) out.push_back(tag);
  return out;
}

int ScorerConfig::resolved_fused_dim() const {
  if (fused_dim > 0) return fused_dim;
  int d = 0;
  for (const auto& [_, dim] : dims) d = (d == 0) ? dim : std::min(d, dim);
  return d;
}

// ---------------------------------------------------------------------------
// LSTM primitives
// ---------------------------------------------------------------------------

std::vector<Eigen::VectorXd> lstm_forward(const LstmDirectionParams& params,
                                          const std::vector<Eigen::VectorXd>& inputs,
                                          LstmSeqCache* cache) {
  const int h = params.hidden();
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
  std::vector<Eigen::VectorXd> outputs;
  outputs.reserve(inputs.size());
  if (cache) cache->steps.clear();

  for (const auto& x : inputs) {
    const Eigen::VectorXd z = params.w_input * x + params.w_recur * h_prev + params.bias;
    LstmStepCache s;
    s.x = x;
    s.i = z.head(h).unaryExpr([](double v) { return sigmoid(v); });
    s.f = z.segment(h, h).unaryExpr([](double v) { return sigmoid(v); });
    s.g = z.segment(2 * h, h).array().tanh();
    s.o = z.tail(h).unaryExpr([](double v) { return sigmoid(v); });
    s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g);
    s.tc = s.c.array().tanh();
    s.h = s.o.cwiseProduct(s.tc);
    h_prev = s.h;
    c_prev = s.c;
    outputs.push_back(s.h);
    if (cache) cache->steps.push_back(std::move(s));
  }
  return outputs;
}

void lstm_backward(const LstmDirectionParams& params, const LstmSeqCache& cache,
                   const std::vector<Eigen::VectorXd>& dh_upstream,
                   LstmDirectionParams& grads, std::vector<Eigen::VectorXd>* dx) {
  const int h = params.hidden();
  const int L = static_cast<int>(cache.steps.size());
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(h);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(h);

  for (int t = L - 1; t >= 0; --t) {
    const auto& s = cache.steps[t];
    const Eigen::VectorXd& c_prev = (t > 0) ? cache.steps[t - 1].c : zero;
    const Eigen::VectorXd& h_prev = (t > 0) ? cache.steps[t - 1].h : zero;

    const Eigen::VectorXd dh = dh_upstream[t] + dh_next;
    const Eigen::VectorXd do_ = dh.cwiseProduct(s.tc);
    const Eigen::VectorXd dc =
        dc_next + dh.cwiseProduct(s.o).cwiseProduct(
                      (1.0 - s.tc.array().square()).matrix());
    const Eigen::VectorXd df = dc.cwiseProduct(c_prev);
    const Eigen::VectorXd di = dc.cwiseProduct(s.g);
    const Eigen::VectorXd dg = dc.cwiseProduct(s.i);
    dc_next = dc.cwiseProduct(s.f);

    Eigen::VectorXd dz(4 * h);
    dz.head(h) = di.array() * s.i.array() * (1.0 - s.i.array());
    dz.segment(h, h) = df.array() * s.f.array() * (1.0 - s.f.array());
    dz.segment(2 * h, h) = dg.array() * (1.0 - s.g.array().square());
    dz.tail(h) = do_.array() * s.o.array() * (1.0 - s.o.array());

    grads.w_input.noalias() += dz * s.x.transpose();
    grads.w_recur.noalias() += dz * h_prev.transpose();
    grads.bias += dz;

    dh_next.noalias() = params.w_recur.transpose() * dz;
    if (dx) (*dx)[t] += params.w_input.transpose() * dz;
  }
}

std::vector<Eigen::VectorXd> bilstm_forward(const RecurrentParams& params,
                                            const Eigen::MatrixXd& features,
                                            const std::vector<int>& indices,
                                            BiSegCache* cache) {
  const std::size_t L = indices.size();
  std::vector<Eigen::VectorXd> fwd_in(L), bwd_in(L);
  for (std::size_t j = 0; j < L; ++j) {
    fwd_in[j] = features.row(indices[j]).transpose();
    bwd_in[j] = features.row(indices[L - 1 - j]).transpose();
  }
  const auto h_fwd = lstm_forward(params.fwd, fwd_in, cache ? &cache->fwd : nullptr);
  const auto h_bwd = lstm_forward(params.bwd, bwd_in, cache ? &cache->bwd : nullptr);

  const int h = params.hidden();
  std::vector<Eigen::VectorXd> concat(L);
  for (std::size_t j = 0; j < L; ++j) {
    concat[j].resize(2 * h);
    concat[j].head(h) = h_fwd[j];
    concat[j].tail(h) = h_bwd[L - 1 - j];
  }
  return concat;
}

void bilstm_backward(const RecurrentParams& params, const BiSegCache& cache,
                     const std::vector<Eigen::VectorXd>& dconcat,
                     RecurrentParams& grads, Eigen::MatrixXd* dfeatures,
                     const std::vector<int>& indices) {
  const std::size_t L = indices.size();
  const int h = params.hidden();
  std::vector<Eigen::VectorXd> dh_fwd(L), dh_bwd(L);
  for (std::size_t j = 0; j < L; ++j) {
    dh_fwd[j] = dconcat[j].head(h);
    dh_bwd[L - 1 - j] = dconcat[j].tail(h);
  }

  std::vector<Eigen::VectorXd> dx_fwd, dx_bwd;
  std::vector<Eigen::VectorXd>* pdx_fwd = nullptr;
  std::vector<Eigen::VectorXd>* pdx_bwd = nullptr;
  if (dfeatures) {
    dx_fwd.assign(L, Eigen::VectorXd::Zero(params.fwd.input_dim()));
    dx_bwd.assign(L, Eigen::VectorXd::Zero(params.bwd.input_dim()));
    pdx_fwd = &dx_fwd;
    pdx_bwd = &dx_bwd;
  }
  lstm_backward(params.fwd, cache.fwd, dh_fwd, grads.fwd, pdx_fwd);
  lstm_backward(params.bwd, cache.bwd, dh_bwd, grads.bwd, pdx_bwd);

  if (dfeatures) {
    for (std::size_t j = 0; j < L; ++j) {
      dfeatures->row(indices[j]) += dx_fwd[j].transpose();
      dfeatures->row(indices[L - 1 - j]) += dx_bwd[j].transpose();
    }
  }
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace {

LstmDirectionParams lstm_direction_shapes(int h, int d_in) {
  LstmDirectionParams p;
  p.w_input = Eigen::MatrixXd::Zero(4 * h, d_in);
  p.w_recur = Eigen::MatrixXd::Zero(4 * h, h);
  p.bias = Eigen::VectorXd::Zero(4 * h);
  return p;
}

StreamParams stream_shapes(int h, int dim, const std::vector<int>& deltas) {
  StreamParams sp;
  sp.chunk_rnn = {lstm_direction_shapes(h, dim), lstm_direction_shapes(h, dim)};
  sp.stride_rnn = {lstm_direction_shapes(h, dim), lstm_direction_shapes(h, dim)};
  sp.chunk_head = {Eigen::MatrixXd::Zero(1, 2 * h), Eigen::VectorXd::Zero(1)};
  sp.stride_head = {Eigen::MatrixXd::Zero(1, 2 * h), Eigen::VectorXd::Zero(1)};
  sp.attention.deltas = deltas;
  sp.attention.weights.assign(deltas.size(), Eigen::VectorXd::Zero(dim));
  sp.attention.biases = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(deltas.size()));
  return sp;
}

void collect_direction(LstmDirectionParams& p, const std::string& prefix,
                       std::vector<TensorView>& out) {
  out.push_back({prefix + ".w_input", p.w_input.data(), p.w_input.rows(), p.w_input.cols()});
  out.push_back({prefix + ".w_recur", p.w_recur.data(), p.w_recur.rows(), p.w_recur.cols()});
  out.push_back({prefix + ".bias", p.bias.data(), p.bias.rows(), 1});
}

void collect_linear(Linear& l, const std::string& prefix, std::vector<TensorView>& out) {
  out.push_back({prefix + ".weight", l.weight.data(), l.weight.rows(), l.weight.cols()});
  out.push_back({prefix + ".bias", l.bias.data(), l.bias.rows(), 1});
}

void collect_stream(StreamParams& sp, const std::string& prefix, std::vector<TensorView>& out) {
  collect_direction(sp.chunk_rnn.fwd, prefix + ".chunk_rnn.fwd", out);
  collect_direction(sp.chunk_rnn.bwd, prefix + ".chunk_rnn.bwd", out);
  collect_direction(sp.stride_rnn.fwd, prefix + ".stride_rnn.fwd", out);
  collect_direction(sp.stride_rnn.bwd, prefix + ".stride_rnn.bwd", out);
  collect_linear(sp.chunk_head, prefix + ".chunk_head", out);
  collect_linear(sp.stride_head, prefix + ".stride_head", out);
  for (std::size_t i = 0; i < sp.attention.weights.size(); ++i)
    out.push_back({prefix + ".attention.w" + std::to_string(sp.attention.deltas[i]),
                   sp.attention.weights[i].data(), sp.attention.weights[i].rows(), 1});
  out.push_back({prefix + ".attention.bias", sp.attention.biases.data(),
                 sp.attention.biases.rows(), 1});
}

bool is_bias(const TensorView& t) { return t.name.find("bias") != std::string::npos; }

void set_forget_bias(StreamParams& sp, double value) {
  const int h = sp.chunk_rnn.hidden();
  for (auto* rnn : {&sp.chunk_rnn, &sp.stride_rnn}) {
    rnn->fwd.bias.segment(h, h).setConstant(value);
    rnn->bwd.bias.segment(h, h).setConstant(value);
  }
}

}  // namespace

std::vector<TensorView> collect_tensors(ScorerParams& params) {
  std::vector<TensorView> out;
  for (auto& [tag, sp] : params.streams)
    collect_stream(sp, std::string("streams.") + to_string(tag), out);
  for (auto& [tag, proj] : params.projections)
    collect_linear(proj, std::string("projections.") + to_string(tag), out);
  if (params.config.strategy == FusionStrategy::early)
    collect_stream(params.fused, "fused", out);
  return out;
}

ScorerParams zeros_like(const ScorerParams& params) {
  ScorerParams z = params;
  for (auto& t : collect_tensors(z)) std::fill(t.data, t.data + t.size(), 0.0);
  return z;
}

ScorerParams init_params(const ScorerConfig& config) {
  if (config.hidden < 1) throw std::invalid_argument("hidden size must be >= 1");
  if (config.deltas.empty()) throw std::invalid_argument("deltas must be non-empty");
  for (const auto& [tag, dim] : config.dims)
    if (dim < 1)
      throw std::invalid_argument(std::string("dim of source ") + to_string(tag) +
                                  " must be positive");

  ScorerParams params;
  params.config = config;
  const int h = config.hidden;

  switch (config.strategy) {
    case FusionStrategy::single_source: {
      const auto it = config.dims.find(config.single_src);
      if (it == config.dims.end())
        throw std::invalid_argument(std::string("single_source strategy needs dims for ") +
                                    to_string(config.single_src));
      params.streams.emplace(config.single_src, stream_shapes(h, it->second, config.deltas));
      break;
    }
    case FusionStrategy::intermediate:
    case FusionStrategy::late: {
      if (config.dims.size() != 2)
        throw std::invalid_argument(std::string(to_string(config.strategy)) +
                                    " fusion needs exactly two sources, got " +
                                    std::to_string(config.dims.size()));
      for (const auto& [tag, dim] : config.dims)
        params.streams.emplace(tag, stream_shapes(h, dim, config.deltas));
      break;
    }
    case FusionStrategy::early: {
      if (config.dims.size() != 2)
        throw std::invalid_argument("early fusion needs exactly two sources, got " +
                                    std::to_string(config.dims.size()));
      const int d_c = config.resolved_fused_dim();
      for (const auto& [tag, dim] : config.dims)
        params.projections.emplace(
            tag, Linear{Eigen::MatrixXd::Zero(d_c, dim), Eigen::VectorXd::Zero(d_c)});
      params.fused = stream_shapes(h, d_c, config.deltas);
      break;
    }
  }

  Rng rng(config.seed);
  for (auto& t : collect_tensors(params)) {
    if (is_bias(t)) continue;  // biases stay zero (forget gates fixed below)
    const Eigen::Index fan_in = (t.cols > 1) ? t.cols : t.rows;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(-bound, bound);
  }
  for (auto& [_, sp] : params.streams) set_forget_bias(sp, 1.0);
  if (config.strategy == FusionStrategy::early) set_forget_bias(params.fused, 1.0);

  return params;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {

void check_stream_shapes(const Eigen::MatrixXd& features, const StreamParams& params) {
  const int dim = static_cast<int>(features.cols());
  const int h = params.chunk_rnn.hidden();
  if (params.chunk_rnn.fwd.input_dim() != dim || params.stride_rnn.fwd.input_dim() != dim)
    throw std::invalid_argument("stream parameter input dim " +
                                std::to_string(params.chunk_rnn.fwd.input_dim()) +
                                " != feature dim " + std::to_string(dim));
  if (params.chunk_head.weight.cols() != 2 * h || params.stride_head.weight.cols() != 2 * h)
    throw std::invalid_argument("head input size must be 2h");
  if (params.attention.dim() != dim)
    throw std::invalid_argument("attention dim != feature dim");
}

// One branch: encode each segment, map to scalars, restore temporal order.
Eigen::VectorXd branch_scores(const Eigen::MatrixXd& features, const RecurrentParams& rnn,
                              const Linear& head, const Decomposition& decomp, Branch branch,
                              BranchCache* cache) {
  const auto& segs = decomp.segments(branch);
  std::vector<Eigen::VectorXd> seg_values(segs.size());
  if (cache) {
    cache->segments.resize(segs.size());
    cache->concat.resize(segs.size());
  }
  for (std::size_t k = 0; k < segs.size(); ++k) {
    auto concat = bilstm_forward(rnn, features, segs[k], cache ? &cache->segments[k] : nullptr);
    seg_values[k].resize(static_cast<Eigen::Index>(concat.size()));
    for (std::size_t j = 0; j < concat.size(); ++j)
      seg_values[k](j) = head.weight.row(0).dot(concat[j]) + head.bias(0);
    if (cache) cache->concat[k] = std::move(concat);
  }
  return reassemble(decomp, branch, seg_values);
}

// Signed clamped differences x_t - x_{max(t-delta,0)} per delta; feeds both
// the attention value (via abs) and its backward pass (via sign).
std::vector<Eigen::MatrixXd> signed_diffs(const Eigen::MatrixXd& features,
                                          const std::vector<int>& deltas) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(deltas.size());
  for (int delta : deltas) {
    Eigen::MatrixXd d(features.rows(), features.cols());
    for (Eigen::Index t = 0; t < features.rows(); ++t) {
      const Eigen::Index prev = std::max<Eigen::Index>(t - delta, 0);
      d.row(t) = features.row(t) - features.row(prev);
    }
    out.push_back(std::move(d));
  }
  return out;
}

Eigen::MatrixXd project_features(const std::map<Source, Eigen::MatrixXd>& raw,
                                 const std::map<Source, Linear>& projections) {
  Eigen::MatrixXd fused;
  for (const auto& [tag, X] : raw) {
    const Linear& proj = projections.at(tag);
    Eigen::MatrixXd y = X * proj.weight.transpose();
    y.rowwise() += proj.bias.transpose();
    if (fused.size() == 0)
      fused = std::move(y);
    else
      fused += y;
  }
  return fused;
}

const Eigen::MatrixXd& record_features(const VideoRecord& record, Source tag, int expected_dim) {
  const auto it = record.streams.find(tag);
  if (it == record.streams.end())
    throw std::invalid_argument("record '" + record.id + "' has no stream " + to_string(tag));
  if (expected_dim > 0 && it->second.dim() != expected_dim)
    throw std::invalid_argument("record '" + record.id + "' stream " + to_string(tag) + " dim " +
                                std::to_string(it->second.dim()) + " != expected " +
                                std::to_string(expected_dim));
  return it->second.values;
}

}  // namespace

Eigen::VectorXd stream_raw_scores(const Eigen::MatrixXd& features, const StreamParams& params,
                                  const Decomposition& decomp, StreamForward* cache) {
  check_stream_shapes(features, params);
  StreamForward local;
  StreamForward& fw = cache ? *cache : local;
  fw.features = features;
  fw.chunk_scores = branch_scores(features, params.chunk_rnn, params.chunk_head, decomp,
                                  Branch::chunk, cache ? &fw.chunk : nullptr);
  fw.stride_scores = branch_scores(features, params.stride_rnn, params.stride_head, decomp,
                                   Branch::stride, cache ? &fw.stride : nullptr);
  fw.diffs = signed_diffs(features, params.attention.deltas);
  fw.attention = Eigen::VectorXd::Zero(features.rows());
  for (std::size_t i = 0; i < fw.diffs.size(); ++i)
    fw.attention += (fw.diffs[i].cwiseAbs() * params.attention.weights[i]).eval() +
                    Eigen::VectorXd::Constant(features.rows(), params.attention.biases(i));
  fw.raw = fw.chunk_scores + fw.stride_scores + fw.attention;
  return fw.raw;
}

Eigen::VectorXd stream_raw_scores(const SourceStream& stream, const StreamParams& params, int m,
                                  StreamForward* cache) {
  const int T = stream.n_steps();
  const int m_eff = (m > 0) ? m : default_segment_count(T);
  const Decomposition decomp = decompose(T, m_eff);
  return stream_raw_scores(stream.values, params, decomp, cache);
}

Eigen::VectorXd scorer_forward(const VideoRecord& record, const ScorerParams& params, int m,
                               ScorerForward* cache) {
  const auto& config = params.config;
  const int T = record.n_steps();
  const int m_eff = (m > 0) ? m : default_segment_count(T);

  ScorerForward local;
  ScorerForward& fw = cache ? *cache : local;
  fw.decomp = decompose(T, m_eff);

  switch (config.strategy) {
    case FusionStrategy::single_source: {
      const auto& X = record_features(record, config.single_src,
                                      config.dims.count(config.single_src)
                                          ? config.dims.at(config.single_src)
                                          : 0);
      fw.presigmoid =
          stream_raw_scores(X, params.streams.at(config.single_src), fw.decomp,
                            &fw.streams[config.single_src]);
      break;
    }
    case FusionStrategy::intermediate:
    case FusionStrategy::late: {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(T);
      for (const auto& [tag, sp] : params.streams) {
        const auto& X = record_features(record, tag, config.dims.at(tag));
        const Eigen::VectorXd r = stream_raw_scores(X, sp, fw.decomp, &fw.streams[tag]);
        if (config.strategy == FusionStrategy::late &&
            config.late_space == LateFusionSpace::probability)
          acc += r.unaryExpr([](double v) { return sigmoid(v); });
        else
          acc += r;
      }
      fw.presigmoid = acc;
      break;
    }
    case FusionStrategy::early: {
      for (const auto& [tag, dim] : config.dims)
        fw.raw_features[tag] = record_features(record, tag, dim);
      const Eigen::MatrixXd fused = project_features(fw.raw_features, params.projections);
      fw.presigmoid = stream_raw_scores(fused, params.fused, fw.decomp, &fw.fused);
      break;
    }
  }

  fw.p = fw.presigmoid.unaryExpr([](double v) { return sigmoid(v); });
  return fw.p;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace {

void branch_backward(const RecurrentParams& rnn, const Linear& head, const Decomposition& decomp,
                     Branch branch, const BranchCache& cache, const Eigen::VectorXd& dscores,
                     RecurrentParams& rnn_grads, Linear& head_grads, Eigen::MatrixXd* dfeatures) {
  const auto& segs = decomp.segments(branch);
  const auto dvals = split_by_segments(decomp, branch, dscores);
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const std::size_t L = segs[k].size();
    std::vector<Eigen::VectorXd> dconcat(L);
    for (std::size_t j = 0; j < L; ++j) {
      const double dy = dvals[k](static_cast<Eigen::Index>(j));
      head_grads.weight.row(0) += dy * cache.concat[k][j].transpose();
      head_grads.bias(0) += dy;
      dconcat[j] = dy * head.weight.row(0).transpose();
    }
    bilstm_backward(rnn, cache.segments[k], dconcat, rnn_grads, dfeatures, segs[k]);
  }
}

void attention_backward(const AttentionParams& params, const StreamForward& fwd,
                        const Eigen::VectorXd& dd, AttentionParams& grads,
                        Eigen::MatrixXd* dfeatures) {
  for (std::size_t i = 0; i < params.deltas.size(); ++i) {
    const Eigen::MatrixXd& diff = fwd.diffs[i];
    grads.weights[i] += diff.cwiseAbs().transpose() * dd;
    grads.biases(i) += dd.sum();
    if (dfeatures) {
      const int delta = params.deltas[i];
      for (Eigen::Index t = 0; t < diff.rows(); ++t) {
        const Eigen::Index prev = std::max<Eigen::Index>(t - delta, 0);
        const Eigen::RowVectorXd v =
            dd(t) * params.weights[i].transpose().cwiseProduct(
                        diff.row(t).unaryExpr([](double x) {
                          return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                        }));
        dfeatures->row(t) += v;
        dfeatures->row(prev) -= v;
      }
    }
  }
}

void stream_backward(const StreamParams& params, const StreamForward& fwd,
                     const Decomposition& decomp, const Eigen::VectorXd& draw,
                     StreamParams& grads, Eigen::MatrixXd* dfeatures) {
  // r = c' + s' + d: the upstream gradient fans out to all three.
  branch_backward(params.chunk_rnn, params.chunk_head, decomp, Branch::chunk, fwd.chunk, draw,
                  grads.chunk_rnn, grads.chunk_head, dfeatures);
  branch_backward(params.stride_rnn, params.stride_head, decomp, Branch::stride, fwd.stride, draw,
                  grads.stride_rnn, grads.stride_head, dfeatures);
  attention_backward(params.attention, fwd, draw, grads.attention, dfeatures);
}

}  // namespace

void scorer_backward(const ScorerParams& params, const ScorerForward& fwd,
                     const Eigen::VectorXd& dp, const Eigen::MatrixXd* dfused_extra,
                     ScorerParams& grads) {
  const auto& config = params.config;
  const Eigen::VectorXd da =
      dp.cwiseProduct(fwd.p.cwiseProduct((1.0 - fwd.p.array()).matrix()));

  switch (config.strategy) {
    case FusionStrategy::single_source: {
      stream_backward(params.streams.at(config.single_src), fwd.streams.at(config.single_src),
                      fwd.decomp, da, grads.streams.at(config.single_src), nullptr);
      break;
    }
    case FusionStrategy::intermediate:
    case FusionStrategy::late: {
      for (const auto& [tag, sp] : params.streams) {
        Eigen::VectorXd dr = da;
        if (config.strategy == FusionStrategy::late &&
            config.late_space == LateFusionSpace::probability) {
          const Eigen::VectorXd q =
              fwd.streams.at(tag).raw.unaryExpr([](double v) { return sigmoid(v); });
          dr = da.cwiseProduct(q.cwiseProduct((1.0 - q.array()).matrix()));
        }
        stream_backward(sp, fwd.streams.at(tag), fwd.decomp, dr, grads.streams.at(tag), nullptr);
      }
      break;
    }
    case FusionStrategy::early: {
      Eigen::MatrixXd dfused =
          dfused_extra ? *dfused_extra
                       : Eigen::MatrixXd::Zero(fwd.fused.features.rows(), fwd.fused.features.cols());
      stream_backward(params.fused, fwd.fused, fwd.decomp, da, grads.fused, &dfused);
      for (const auto& [tag, X] : fwd.raw_features) {
        grads.projections.at(tag).weight.noalias() += dfused.transpose() * X;
        grads.projections.at(tag).bias += dfused.colwise().sum().transpose();
      }
      break;
    }
  }
}

}  // namespace mcsf
