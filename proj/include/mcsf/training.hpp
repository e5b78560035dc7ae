#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mcsf/model.hpp"

namespace mcsf {

// Reconstruction decoder: bidirectional LSTM over the score-weighted
// features, linear head back to the feature dim.
struct DecoderParams {
  RecurrentParams rnn;
  Linear output;  // dim x 2h
};

DecoderParams init_decoder(int dim, int hidden, std::uint64_t seed);
std::vector<TensorView> collect_tensors(DecoderParams& params);
DecoderParams zeros_like(const DecoderParams& params);

struct Objective {
  double total = 0.0;
  double reconstruction = 0.0;
  double sparsity = 0.0;
  double lambda_sparsity = 0.0;
  double sigma_target = 0.0;
};

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 5.0;
  double lambda_sparsity = 1.0;
  double sigma_target = 0.15;
  std::uint64_t seed = 0;
  int m = 0;  // 0 = default_segment_count per video
  // The stream the decoder reconstructs under non-early strategies
  // (early fusion reconstructs the fused sequence).
  Source primary_source = Source::objects;
};

struct Gradients {
  ScorerParams scorer;
  DecoderParams decoder;
};

// total = reconstruction + lambda * sparsity, where reconstruction is the
// mean squared error of decoding p .* x back to x on the designated stream
// and sparsity = (mean(p) - sigma_target)^2.
Objective surrogate_loss(const VideoRecord& record, const ScorerParams& scorer,
                         const DecoderParams& decoder, const TrainConfig& config);

// Exact analytic gradients of Objective.total for every parameter tensor.
Objective backward(const VideoRecord& record, const ScorerParams& scorer,
                   const DecoderParams& decoder, const TrainConfig& config, Gradients& grads);

// Central finite differences (L(t+e) - L(t-e)) / 2e over every scalar
// parameter; the independent oracle for backward.
Gradients finite_difference_gradient(const VideoRecord& record, const ScorerParams& scorer,
                                     const DecoderParams& decoder, const TrainConfig& config,
                                     double epsilon = 1e-5);

struct GradCheckEntry {
  std::string tensor;
  double max_rel_error = 0.0;  // |a - n| / max(|a|, |n|, 1e-8), worst parameter
  Eigen::Index row = 0, col = 0;
  double analytic = 0.0, numeric = 0.0;
  // Same maximum restricted to parameters whose absolute disagreement
  // exceeds the oracle's noise floor. Central differences at eps carry
  // ~eps_machine * |loss| / (2 eps) of cancellation error, so relative
  // error on near-zero gradients measures the oracle, not the gradient.
  double gated_rel_error = 0.0;
};

struct GradCheckReport {
  double epsilon = 0.0;
  double noise_floor = 0.0;
  std::vector<GradCheckEntry> entries;  // one per parameter tensor

  double worst() const;
  double worst_gated() const;
};

GradCheckReport gradient_check(const VideoRecord& record, const ScorerParams& scorer,
                               const DecoderParams& decoder, const TrainConfig& config,
                               double epsilon = 1e-5, double noise_floor = 1e-10);

// Scales all tensors so the global gradient norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(const std::vector<TensorView>& tensors, double max_norm);

struct TrainResult {
  ScorerParams scorer;
  DecoderParams decoder;
  // history[0] is the pre-training evaluation; history[e] the mean
  // per-video objective seen during epoch e.
  std::vector<Objective> history;
};

// Adam with global-norm clipping, one update per video, seeded shuffled
// visit order per epoch. Deterministic per config.
TrainResult train(const std::vector<const VideoRecord*>& videos, const ScorerConfig& scorer_config,
                  const TrainConfig& config);
TrainResult train(const Dataset& dataset, const ScorerConfig& scorer_config,
                  const TrainConfig& config);

std::string history_csv(const std::vector<Objective>& history);

}  // namespace mcsf
