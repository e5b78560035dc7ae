#include "mcsf/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mcsf/rng.hpp"

namespace mcsf {

namespace {

LstmDirectionParams lstm_direction_shapes(int h, int d_in) {
  LstmDirectionParams p;
  p.w_input = Eigen::MatrixXd::Zero(4 * h, d_in);
  p.w_recur = Eigen::MatrixXd::Zero(4 * h, h);
  p.bias = Eigen::VectorXd::Zero(4 * h);
  return p;
}

struct DecoderForward {
  Eigen::MatrixXd inputs;   // p .* x, T x dim
  BiSegCache rnn;
  std::vector<Eigen::VectorXd> concat;
  Eigen::MatrixXd output;   // reconstruction, T x dim
  std::vector<int> indices;
};

Eigen::MatrixXd decoder_forward(const DecoderParams& params, const Eigen::MatrixXd& inputs,
                                DecoderForward* cache) {
  const int T = static_cast<int>(inputs.rows());
  std::vector<int> indices(T);
  std::iota(indices.begin(), indices.end(), 0);

  DecoderForward local;
  DecoderForward& fw = cache ? *cache : local;
  fw.inputs = inputs;
  fw.indices = indices;
  fw.concat = bilstm_forward(params.rnn, inputs, indices, &fw.rnn);
  fw.output.resize(T, params.output.weight.rows());
  for (int t = 0; t < T; ++t)
    fw.output.row(t) = (params.output.weight * fw.concat[t] + params.output.bias).transpose();
  return fw.output;
}

void decoder_backward(const DecoderParams& params, const DecoderForward& fwd,
                      const Eigen::MatrixXd& doutput, DecoderParams& grads,
                      Eigen::MatrixXd& dinputs) {
  const int T = static_cast<int>(fwd.inputs.rows());
  std::vector<Eigen::VectorXd> dconcat(T);
  for (int t = 0; t < T; ++t) {
    const Eigen::VectorXd dy = doutput.row(t).transpose();
    grads.output.weight.noalias() += dy * fwd.concat[t].transpose();
    grads.output.bias += dy;
    dconcat[t] = params.output.weight.transpose() * dy;
  }
  bilstm_backward(params.rnn, fwd.rnn, dconcat, grads.rnn, &dinputs, fwd.indices);
}

// The sequence the decoder reconstructs: the fused features under early
// fusion, otherwise the designated source stream.
const Eigen::MatrixXd& decode_target(const VideoRecord& record, const ScorerParams& scorer,
                                     const ScorerForward& fwd, const TrainConfig& config) {
  if (scorer.config.strategy == FusionStrategy::early) return fwd.fused.features;
  const Source src = (scorer.config.strategy == FusionStrategy::single_source)
                         ? scorer.config.single_src
                         : config.primary_source;
  const auto it = record.streams.find(src);
  if (it == record.streams.end())
    throw std::invalid_argument("record '" + record.id + "' has no stream " + to_string(src) +
                                " to reconstruct");
  return it->second.values;
}

struct LossParts {
  Objective objective;
  ScorerForward scorer_fwd;
  DecoderForward decoder_fwd;
  Eigen::MatrixXd target;  // copy, valid for backward
};

LossParts loss_forward(const VideoRecord& record, const ScorerParams& scorer,
                       const DecoderParams& decoder, const TrainConfig& config) {
  LossParts parts;
  const Eigen::VectorXd p = scorer_forward(record, scorer, config.m, &parts.scorer_fwd);
  parts.target = decode_target(record, scorer, parts.scorer_fwd, config);

  const Eigen::MatrixXd weighted = parts.target.array().colwise() * p.array();
  const Eigen::MatrixXd recon = decoder_forward(decoder, weighted, &parts.decoder_fwd);

  const double T = static_cast<double>(parts.target.rows());
  const double D = static_cast<double>(parts.target.cols());
  const double reconstruction = (recon - parts.target).squaredNorm() / (T * D);
  const double mean_p = p.mean();
  const double sparsity = (mean_p - config.sigma_target) * (mean_p - config.sigma_target);

  parts.objective.reconstruction = reconstruction;
  parts.objective.sparsity = sparsity;
  parts.objective.lambda_sparsity = config.lambda_sparsity;
  parts.objective.sigma_target = config.sigma_target;
  parts.objective.total = reconstruction + config.lambda_sparsity * sparsity;
  return parts;
}

}  // namespace

DecoderParams init_decoder(int dim, int hidden, std::uint64_t seed) {
  if (dim < 1 || hidden < 1) throw std::invalid_argument("decoder dims must be positive");
  DecoderParams p;
  p.rnn = {lstm_direction_shapes(hidden, dim), lstm_direction_shapes(hidden, dim)};
  p.output = {Eigen::MatrixXd::Zero(dim, 2 * hidden), Eigen::VectorXd::Zero(dim)};

  Rng rng(seed);
  for (auto& t : collect_tensors(p)) {
    if (t.name.find("bias") != std::string::npos) continue;
    const Eigen::Index fan_in = (t.cols > 1) ? t.cols : t.rows;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(-bound, bound);
  }
  p.rnn.fwd.bias.segment(hidden, hidden).setOnes();
  p.rnn.bwd.bias.segment(hidden, hidden).setOnes();
  return p;
}

std::vector<TensorView> collect_tensors(DecoderParams& params) {
  std::vector<TensorView> out;
  for (auto* dir : {&params.rnn.fwd, &params.rnn.bwd}) {
    const std::string prefix = (dir == &params.rnn.fwd) ? "decoder.rnn.fwd" : "decoder.rnn.bwd";
    out.push_back({prefix + ".w_input", dir->w_input.data(), dir->w_input.rows(), dir->w_input.cols()});
    out.push_back({prefix + ".w_recur", dir->w_recur.data(), dir->w_recur.rows(), dir->w_recur.cols()});
    out.push_back({prefix + ".bias", dir->bias.data(), dir->bias.rows(), 1});
  }
  out.push_back({"decoder.output.weight", params.output.weight.data(), params.output.weight.rows(),
                 params.output.weight.cols()});
  out.push_back({"decoder.output.bias", params.output.bias.data(), params.output.bias.rows(), 1});
  return out;
}

DecoderParams zeros_like(const DecoderParams& params) {
  DecoderParams z = params;
  for (auto& t : collect_tensors(z)) std::fill(t.data, t.data + t.size(), 0.0);
  return z;
}

Objective surrogate_loss(const VideoRecord& record, const ScorerParams& scorer,
                         const DecoderParams& decoder, const TrainConfig& config) {
  return loss_forward(record, scorer, decoder, config).objective;
}

Objective backward(const VideoRecord& record, const ScorerParams& scorer,
                   const DecoderParams& decoder, const TrainConfig& config, Gradients& grads) {
  LossParts parts = loss_forward(record, scorer, decoder, config);
  const Eigen::VectorXd& p = parts.scorer_fwd.p;
  const Eigen::MatrixXd& X = parts.target;
  const double T = static_cast<double>(X.rows());
  const double D = static_cast<double>(X.cols());

  grads.scorer = zeros_like(scorer);
  grads.decoder = zeros_like(decoder);

  // Reconstruction: d/d(recon output) of mean squared error.
  const Eigen::MatrixXd dout = 2.0 / (T * D) * (parts.decoder_fwd.output - X);

  Eigen::MatrixXd dweighted = Eigen::MatrixXd::Zero(X.rows(), X.cols());
  decoder_backward(decoder, parts.decoder_fwd, dout, grads.decoder, dweighted);

  // weighted = p .* X fans out to p and (under early fusion) to X itself;
  // the reconstruction target contributes -dout to X as well.
  Eigen::VectorXd dp = (dweighted.cwiseProduct(X)).rowwise().sum();
  dp.array() += config.lambda_sparsity * 2.0 * (p.mean() - config.sigma_target) / T;

  const bool early = scorer.config.strategy == FusionStrategy::early;
  Eigen::MatrixXd dfused;
  if (early) {
    dfused = dweighted.array().colwise() * p.array();  // through the decoder input
    dfused -= dout;                                    // through the reconstruction target
  }
  scorer_backward(scorer, parts.scorer_fwd, dp, early ? &dfused : nullptr, grads.scorer);

  return parts.objective;
}

Gradients finite_difference_gradient(const VideoRecord& record, const ScorerParams& scorer,
                                     const DecoderParams& decoder, const TrainConfig& config,
                                     double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
  ScorerParams s = scorer;
  DecoderParams d = decoder;
  Gradients out{zeros_like(scorer), zeros_like(decoder)};

  auto run = [&]() { return surrogate_loss(record, s, d, config).total; };
  auto sweep = [&](const std::vector<TensorView>& params, const std::vector<TensorView>& grads) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (Eigen::Index j = 0; j < params[i].size(); ++j) {
        double& theta = params[i].data[j];
        const double saved = theta;
        theta = saved + epsilon;
        const double plus = run();
        theta = saved - epsilon;
        const double minus = run();
        theta = saved;
        grads[i].data[j] = (plus - minus) / (2.0 * epsilon);
      }
    }
  };

  sweep(collect_tensors(s), collect_tensors(out.scorer));
  sweep(collect_tensors(d), collect_tensors(out.decoder));
  return out;
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

double GradCheckReport::worst_gated() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.gated_rel_error);
  return w;
}

GradCheckReport gradient_check(const VideoRecord& record, const ScorerParams& scorer,
                               const DecoderParams& decoder, const TrainConfig& config,
                               double epsilon, double noise_floor) {
  Gradients analytic;
  backward(record, scorer, decoder, config, analytic);
  Gradients numeric = finite_difference_gradient(record, scorer, decoder, config, epsilon);

  GradCheckReport report;
  report.epsilon = epsilon;
  report.noise_floor = noise_floor;
  auto compare = [&](std::vector<TensorView> a, std::vector<TensorView> n) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      GradCheckEntry entry;
      entry.tensor = a[i].name;
      for (Eigen::Index j = 0; j < a[i].size(); ++j) {
        const double av = a[i].data[j];
        const double nv = n[i].data[j];
        const double rel = std::abs(av - nv) / std::max({std::abs(av), std::abs(nv), 1e-8});
        if (rel >= entry.max_rel_error) {
          entry.max_rel_error = rel;
          entry.row = j % a[i].rows;
          entry.col = j / a[i].rows;
          entry.analytic = av;
          entry.numeric = nv;
        }
        if (std::abs(av - nv) > noise_floor)
          entry.gated_rel_error = std::max(entry.gated_rel_error, rel);
      }
      report.entries.push_back(std::move(entry));
    }
  };
  compare(collect_tensors(analytic.scorer), collect_tensors(numeric.scorer));
  compare(collect_tensors(analytic.decoder), collect_tensors(numeric.decoder));
  return report;
}

double clip_global_norm(const std::vector<TensorView>& tensors, double max_norm) {
  double sq = 0.0;
  for (const auto& t : tensors)
    for (Eigen::Index i = 0; i < t.size(); ++i) sq += t.data[i] * t.data[i];
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const auto& t : tensors)
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] *= scale;
  }
  return norm;
}

namespace {

struct AdamState {
  ScorerParams scorer_m, scorer_v;
  DecoderParams decoder_m, decoder_v;
  long step = 0;
};

void adam_update(const std::vector<TensorView>& params, const std::vector<TensorView>& grads,
                 const std::vector<TensorView>& m, const std::vector<TensorView>& v,
                 const TrainConfig& cfg, long step) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Eigen::Index j = 0; j < params[i].size(); ++j) {
      const double g = grads[i].data[j];
      double& mi = m[i].data[j];
      double& vi = v[i].data[j];
      mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * g;
      vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * g * g;
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      params[i].data[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
    }
  }
}

int decoder_input_dim(const ScorerConfig& sc, const TrainConfig& tc) {
  if (sc.strategy == FusionStrategy::early) return sc.resolved_fused_dim();
  const Source src =
      (sc.strategy == FusionStrategy::single_source) ? sc.single_src : tc.primary_source;
  const auto it = sc.dims.find(src);
  if (it == sc.dims.end())
    throw std::invalid_argument(std::string("no dim configured for decode stream ") +
                                to_string(src));
  return it->second;
}

}  // namespace

TrainResult train(const std::vector<const VideoRecord*>& videos, const ScorerConfig& scorer_config,
                  const TrainConfig& config) {
  if (videos.empty()) throw std::invalid_argument("training set is empty");

  TrainResult result;
  result.scorer = init_params(scorer_config);
  result.decoder =
      init_decoder(decoder_input_dim(scorer_config, config), scorer_config.hidden,
                   scorer_config.seed + 1);

  AdamState adam{zeros_like(result.scorer), zeros_like(result.scorer),
                 zeros_like(result.decoder), zeros_like(result.decoder), 0};

  auto mean_objective = [&](auto&& per_video) {
    Objective mean;
    for (std::size_t i = 0; i < videos.size(); ++i) {
      const Objective o = per_video(i);
      mean.total += o.total;
      mean.reconstruction += o.reconstruction;
      mean.sparsity += o.sparsity;
    }
    const double n = static_cast<double>(videos.size());
    mean.total /= n;
    mean.reconstruction /= n;
    mean.sparsity /= n;
    mean.lambda_sparsity = config.lambda_sparsity;
    mean.sigma_target = config.sigma_target;
    return mean;
  };

  // history[0]: evaluation before any update
  result.history.push_back(mean_objective(
      [&](std::size_t i) { return surrogate_loss(*videos[i], result.scorer, result.decoder, config); }));

  Rng order_rng(config.seed);
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const auto scorer_params = collect_tensors(result.scorer);
  const auto decoder_params = collect_tensors(result.decoder);
  const auto sm = collect_tensors(adam.scorer_m);
  const auto sv = collect_tensors(adam.scorer_v);
  const auto dm = collect_tensors(adam.decoder_m);
  const auto dv = collect_tensors(adam.decoder_v);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order);
    std::vector<Objective> seen(videos.size());
    for (std::size_t idx : order) {
      Gradients grads;
      const Objective obj = backward(*videos[idx], result.scorer, result.decoder, config, grads);
      if (!std::isfinite(obj.total)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", video '" + videos[idx]->id + "'");
      }
      seen[idx] = obj;

      auto gs = collect_tensors(grads.scorer);
      auto gd = collect_tensors(grads.decoder);
      std::vector<TensorView> all = gs;
      all.insert(all.end(), gd.begin(), gd.end());
      clip_global_norm(all, config.clip_norm);

      ++adam.step;
      adam_update(scorer_params, gs, sm, sv, config, adam.step);
      adam_update(decoder_params, gd, dm, dv, config, adam.step);
    }
    result.history.push_back(mean_objective([&](std::size_t i) { return seen[i]; }));
  }

  return result;
}

TrainResult train(const Dataset& dataset, const ScorerConfig& scorer_config,
                  const TrainConfig& config) {
  std::vector<const VideoRecord*> videos;
  for (const auto& v : dataset.videos) videos.push_back(&v);
  return train(videos, scorer_config, config);
}

std::string history_csv(const std::vector<Objective>& history) {
  std::ostringstream out;
  out << "epoch,total,reconstruction,sparsity\n";
  char buf[128];
  for (std::size_t e = 0; e < history.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g\n", e, history[e].total,
                  history[e].reconstruction, history[e].sparsity);
    out << buf;
  }
  return out.str();
}

}  // namespace mcsf
