#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mcsf/dataio.hpp"
#include "mcsf/decomp.hpp"

namespace mcsf {

// ---------------------------------------------------------------------------
// Recurrent building blocks
// ---------------------------------------------------------------------------

// One LSTM direction. Gate rows are laid out [input; forget; candidate;
// output], h rows each. Zero initial state per run.
struct LstmDirectionParams {
  Eigen::MatrixXd w_input;  // 4h x d_in
  Eigen::MatrixXd w_recur;  // 4h x h
  Eigen::VectorXd bias;     // 4h

  int hidden() const { return static_cast<int>(w_recur.cols()); }
  int input_dim() const { return static_cast<int>(w_input.cols()); }
};

// Independent forward and time-reversed passes; hidden states concatenated
// per step (2h).
struct RecurrentParams {
  LstmDirectionParams fwd;
  LstmDirectionParams bwd;

  int hidden() const { return fwd.hidden(); }
};

struct Linear {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct LstmStepCache {
  Eigen::VectorXd x, i, f, g, o, c, tc, h;
};
struct LstmSeqCache {
  std::vector<LstmStepCache> steps;  // processed order
};
struct BiSegCache {
  LstmSeqCache fwd, bwd;
};

// Runs one direction over the inputs; returns hidden states per step and
// fills the cache when given.
std::vector<Eigen::VectorXd> lstm_forward(const LstmDirectionParams& params,
                                          const std::vector<Eigen::VectorXd>& inputs,
                                          LstmSeqCache* cache = nullptr);

// Backpropagation through time for one direction. dh_upstream is the
// per-step gradient w.r.t. the hidden outputs; parameter gradients
// accumulate into grads; input gradients accumulate into *dx when given.
void lstm_backward(const LstmDirectionParams& params, const LstmSeqCache& cache,
                   const std::vector<Eigen::VectorXd>& dh_upstream,
                   LstmDirectionParams& grads, std::vector<Eigen::VectorXd>* dx = nullptr);

// Bidirectional run over the feature rows named by indices (temporal order).
// Output j is [h_fwd_j ; h_bwd_{L-1-j}].
std::vector<Eigen::VectorXd> bilstm_forward(const RecurrentParams& params,
                                            const Eigen::MatrixXd& features,
                                            const std::vector<int>& indices,
                                            BiSegCache* cache = nullptr);

void bilstm_backward(const RecurrentParams& params, const BiSegCache& cache,
                     const std::vector<Eigen::VectorXd>& dconcat,
                     RecurrentParams& grads, Eigen::MatrixXd* dfeatures,
                     const std::vector<int>& indices);

// ---------------------------------------------------------------------------
// Scorer parameters
// ---------------------------------------------------------------------------

enum class FusionStrategy { single_source, early, intermediate, late };
enum class LateFusionSpace { logit, probability };

const char* to_string(FusionStrategy s);
FusionStrategy strategy_from_string(const std::string& s);
const char* to_string(LateFusionSpace s);
LateFusionSpace late_space_from_string(const std::string& s);

// One scoring lane: chunk and stride recurrences with their scalar heads,
// plus this lane's difference attention.
struct StreamParams {
  RecurrentParams chunk_rnn;
  RecurrentParams stride_rnn;
  Linear chunk_head;   // 1 x 2h
  Linear stride_head;  // 1 x 2h
  AttentionParams attention;
};

struct ScorerConfig {
  FusionStrategy strategy = FusionStrategy::single_source;
  Source single_src = Source::objects;  // single_source only
  std::map<Source, int> dims;           // input dim per source
  int hidden = 32;
  int fused_dim = 0;  // early only; 0 = min of source dims
  std::vector<int> deltas = {1, 2, 4};
  LateFusionSpace late_space = LateFusionSpace::logit;
  std::uint64_t seed = 0;

  std::vector<Source> required_sources() const;
  int resolved_fused_dim() const;
};

// All learnable parameters of the scorer for one fusion strategy.
// single/intermediate/late use `streams`; early uses per-source input
// projections into the common dim plus one fused lane.
struct ScorerParams {
  ScorerConfig config;
  std::map<Source, StreamParams> streams;
  std::map<Source, Linear> projections;  // early only
  StreamParams fused;                    // early only
};

// Weights drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)]; biases
// zero except forget-gate biases set to 1. Deterministic per seed.
ScorerParams init_params(const ScorerConfig& config);

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct BranchCache {
  std::vector<BiSegCache> segments;
  std::vector<std::vector<Eigen::VectorXd>> concat;  // per segment, per position (2h)
};

struct StreamForward {
  Eigen::MatrixXd features;               // lane input, T x dim
  BranchCache chunk, stride;
  std::vector<Eigen::MatrixXd> diffs;     // per delta: signed clamped x_t - x_{t-delta}
  Eigen::VectorXd chunk_scores;           // c'_t
  Eigen::VectorXd stride_scores;          // s'_t
  Eigen::VectorXd attention;              // d_t
  Eigen::VectorXd raw;                    // r_t = c' + s' + d
};

struct ScorerForward {
  Decomposition decomp;
  std::map<Source, StreamForward> streams;        // non-early lanes
  StreamForward fused;                            // early lane
  std::map<Source, Eigen::MatrixXd> raw_features; // early: original per-source inputs
  Eigen::VectorXd presigmoid;
  Eigen::VectorXd p;
};

// r_t = c'_t + s'_t + d_t for one lane.
Eigen::VectorXd stream_raw_scores(const Eigen::MatrixXd& features, const StreamParams& params,
                                  const Decomposition& decomp, StreamForward* cache = nullptr);
Eigen::VectorXd stream_raw_scores(const SourceStream& stream, const StreamParams& params, int m,
                                  StreamForward* cache = nullptr);

// Frame-selection probabilities p_t in (0,1). m = 0 picks
// default_segment_count(n_steps).
Eigen::VectorXd scorer_forward(const VideoRecord& record, const ScorerParams& params, int m,
                               ScorerForward* cache = nullptr);

// Reverse-mode pass: accumulates d(loss)/d(parameters) into grads given
// dp = d(loss)/d(p). dfused_extra carries gradient reaching the fused
// features from outside the scorer (early fusion only, may be null).
void scorer_backward(const ScorerParams& params, const ScorerForward& fwd,
                     const Eigen::VectorXd& dp, const Eigen::MatrixXd* dfused_extra,
                     ScorerParams& grads);

// ---------------------------------------------------------------------------
// Flat tensor access (init order, optimizer state, gradient checking)
// ---------------------------------------------------------------------------

struct TensorView {
  std::string name;
  double* data;
  Eigen::Index rows, cols;

  Eigen::Index size() const { return rows * cols; }
};

std::vector<TensorView> collect_tensors(ScorerParams& params);
ScorerParams zeros_like(const ScorerParams& params);

double sigmoid(double x);

}  // namespace mcsf
