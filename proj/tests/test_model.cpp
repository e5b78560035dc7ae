#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "helpers.hpp"
#include "mcsf/checkpoint.hpp"
#include "mcsf/model.hpp"

using namespace mcsf;

namespace {

ScorerConfig base_config(FusionStrategy strategy, std::uint64_t seed = 0) {
  ScorerConfig cfg;
  cfg.strategy = strategy;
  cfg.dims = {{Source::objects, 5}, {Source::places, 7}};
  cfg.hidden = 4;
  cfg.seed = seed;
  return cfg;
}

std::vector<double> tensor_bytes(ScorerParams& p) {
  std::vector<double> out;
  for (const auto& t : collect_tensors(p))
    out.insert(out.end(), t.data, t.data + t.size());
  return out;
}

}  // namespace

TEST_CASE("init_params is deterministic per seed") {
  auto a = init_params(base_config(FusionStrategy::late, 5));
  auto b = init_params(base_config(FusionStrategy::late, 5));
  auto c = init_params(base_config(FusionStrategy::late, 6));
  CHECK(tensor_bytes(a) == tensor_bytes(b));
  CHECK(tensor_bytes(a) != tensor_bytes(c));
}

TEST_CASE("init_params draws inside the fan-in bound and pins forget biases") {
  auto params = init_params(base_config(FusionStrategy::single_source, 3));
  const auto& sp = params.streams.at(Source::objects);
  const int h = 4;
  CHECK((sp.chunk_rnn.fwd.bias.segment(h, h).array() == 1.0).all());
  CHECK(sp.chunk_rnn.fwd.bias.head(h).isZero(0.0));
  const double bound = 1.0 / std::sqrt(5.0);
  CHECK(sp.chunk_rnn.fwd.w_input.cwiseAbs().maxCoeff() <= bound);
  CHECK(sp.chunk_rnn.fwd.w_input.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("init_params rejects arity mismatches") {
  auto cfg = base_config(FusionStrategy::late);
  cfg.dims.erase(Source::places);
  CHECK_THROWS_AS(init_params(cfg), std::invalid_argument);

  auto cfg2 = base_config(FusionStrategy::single_source);
  cfg2.single_src = Source::places;
  cfg2.dims.erase(Source::places);
  CHECK_THROWS_AS(init_params(cfg2), std::invalid_argument);
}

TEST_CASE("zero parameters give zero raw scores and p=0.5 for every strategy") {
  const auto rec = testutil::make_record(12, 5, 7, 17);

  // branch outputs, attention, and their sum are all exactly zero
  const auto zeroed = zeros_like(init_params(base_config(FusionStrategy::single_source, 1)));
  StreamForward fwd;
  const Eigen::VectorXd r = stream_raw_scores(rec.streams.at(Source::objects).values,
                                              zeroed.streams.at(Source::objects),
                                              decompose(12, 3), &fwd);
  CHECK(r.isZero(0.0));
  CHECK(fwd.chunk_scores.isZero(0.0));
  CHECK(fwd.stride_scores.isZero(0.0));
  CHECK(fwd.attention.isZero(0.0));

  for (auto strategy : {FusionStrategy::single_source, FusionStrategy::early,
                        FusionStrategy::intermediate, FusionStrategy::late}) {
    auto params = zeros_like(init_params(base_config(strategy, 1)));
    // zeros_like keeps shapes; forget biases were zeroed too, which is fine here
    const Eigen::VectorXd p = scorer_forward(rec, params, 3);
    REQUIRE(p.size() == 12);
    for (int t = 0; t < p.size(); ++t) CHECK(p(t) == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("probabilities stay in (0,1) and match n_steps for random shapes") {
  Rng rng(23);
  for (int trial = 0; trial < 8; ++trial) {
    const int T = static_cast<int>(rng.uniform_int(2, 64));
    const auto rec = testutil::make_record(T, 5, 7, 100 + trial);
    const int m = static_cast<int>(rng.uniform_int(1, T));
    for (auto strategy : {FusionStrategy::single_source, FusionStrategy::early,
                          FusionStrategy::intermediate, FusionStrategy::late}) {
      const auto params = init_params(base_config(strategy, trial));
      const Eigen::VectorXd p = scorer_forward(rec, params, m);
      REQUIRE(p.size() == T);
      for (int t = 0; t < T; ++t) {
        CHECK(p(t) > 0.0);
        CHECK(p(t) < 1.0);
      }
    }
  }
}

TEST_CASE("stream scores are invariant to segment processing order") {
  const auto rec = testutil::make_record(13, 5, 7, 31);
  const auto params = init_params(base_config(FusionStrategy::single_source, 2));
  const auto& sp = params.streams.at(Source::objects);
  const auto& X = rec.streams.at(Source::objects).values;

  Decomposition d = decompose(13, 4);
  const Eigen::VectorXd r0 = stream_raw_scores(X, sp, d);

  // permute the segment lists (keeping index->coordinate maps consistent)
  Decomposition shuffled = d;
  std::swap(shuffled.chunks[0], shuffled.chunks[3]);
  std::swap(shuffled.strides[1], shuffled.strides[2]);
  for (std::size_t k = 0; k < shuffled.chunks.size(); ++k)
    for (std::size_t j = 0; j < shuffled.chunks[k].size(); ++j)
      shuffled.chunk_pos[shuffled.chunks[k][j]] = {static_cast<int>(k), static_cast<int>(j)};
  for (std::size_t k = 0; k < shuffled.strides.size(); ++k)
    for (std::size_t j = 0; j < shuffled.strides[k].size(); ++j)
      shuffled.stride_pos[shuffled.strides[k][j]] = {static_cast<int>(k), static_cast<int>(j)};

  const Eigen::VectorXd r1 = stream_raw_scores(X, sp, shuffled);
  CHECK((r0 - r1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("late fusion with one stream zeroed equals the single-source pipeline") {
  const auto rec = testutil::make_record(14, 5, 7, 41);

  auto late = init_params(base_config(FusionStrategy::late, 9));
  // zero the places lane entirely
  auto zeroed = zeros_like(late);
  late.streams.at(Source::places) = zeroed.streams.at(Source::places);

  auto single_cfg = base_config(FusionStrategy::single_source, 9);
  auto single = init_params(single_cfg);
  single.streams.at(Source::objects) = late.streams.at(Source::objects);

  const Eigen::VectorXd p_late = scorer_forward(rec, late, 3);
  const Eigen::VectorXd p_single = scorer_forward(rec, single, 3);
  CHECK((p_late - p_single).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zeroing one stream's output heads removes its influence in late fusion") {
  // only the scalar output maps (both branch heads + attention) go to zero;
  // the recurrent weights stay random
  const auto rec = testutil::make_record(12, 5, 7, 42);
  auto late = init_params(base_config(FusionStrategy::late, 11));
  auto& lane = late.streams.at(Source::places);
  lane.chunk_head.weight.setZero();
  lane.chunk_head.bias.setZero();
  lane.stride_head.weight.setZero();
  lane.stride_head.bias.setZero();
  for (auto& w : lane.attention.weights) w.setZero();
  lane.attention.biases.setZero();

  auto single = init_params(base_config(FusionStrategy::single_source, 11));
  single.streams.at(Source::objects) = late.streams.at(Source::objects);

  const Eigen::VectorXd p_late = scorer_forward(rec, late, 3);
  const Eigen::VectorXd p_single = scorer_forward(rec, single, 3);
  CHECK((p_late - p_single).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("early fusion with identity projection and zero second source matches single") {
  auto rec = testutil::make_record(11, 5, 5, 43);
  rec.streams.at(Source::places).values.setZero();

  ScorerConfig early_cfg = base_config(FusionStrategy::early, 13);
  early_cfg.dims = {{Source::objects, 5}, {Source::places, 5}};
  early_cfg.fused_dim = 5;
  auto early = init_params(early_cfg);
  early.projections.at(Source::objects).weight = Eigen::MatrixXd::Identity(5, 5);
  early.projections.at(Source::objects).bias.setZero();
  early.projections.at(Source::places).bias.setZero();

  ScorerConfig single_cfg = base_config(FusionStrategy::single_source, 13);
  single_cfg.dims = {{Source::objects, 5}};
  auto single = init_params(single_cfg);
  single.streams.at(Source::objects) = early.fused;

  const Eigen::VectorXd p_early = scorer_forward(rec, early, 4);
  const Eigen::VectorXd p_single = scorer_forward(rec, single, 4);
  CHECK((p_early - p_single).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("intermediate and late fusion commute with a source swap") {
  // swapping the labels together with their parameters leaves p unchanged
  auto rec = testutil::make_record(10, 6, 6, 47);
  ScorerConfig cfg = base_config(FusionStrategy::intermediate, 3);
  cfg.dims = {{Source::objects, 6}, {Source::places, 6}};

  for (auto strategy : {FusionStrategy::intermediate, FusionStrategy::late}) {
    cfg.strategy = strategy;
    auto params = init_params(cfg);
    const Eigen::VectorXd p0 = scorer_forward(rec, params, 2);

    auto swapped = params;
    std::swap(swapped.streams.at(Source::objects), swapped.streams.at(Source::places));
    auto swapped_rec = rec;
    std::swap(swapped_rec.streams.at(Source::objects).values,
              swapped_rec.streams.at(Source::places).values);
    const Eigen::VectorXd p1 = scorer_forward(swapped_rec, swapped, 2);
    CHECK((p0 - p1).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("fusion outputs reconstruct from per-stream raw scores") {
  const auto rec = testutil::make_record(11, 5, 7, 49);
  auto params = init_params(base_config(FusionStrategy::intermediate, 6));
  const Decomposition decomp = decompose(11, 3);

  const Eigen::VectorXd r_obj = stream_raw_scores(rec.streams.at(Source::objects).values,
                                                  params.streams.at(Source::objects), decomp);
  const Eigen::VectorXd r_plc = stream_raw_scores(rec.streams.at(Source::places).values,
                                                  params.streams.at(Source::places), decomp);

  // intermediate: sigmoid of the summed branch outputs plus summed attention
  const Eigen::VectorXd p_inter = scorer_forward(rec, params, 3);
  for (int t = 0; t < 11; ++t)
    CHECK(p_inter(t) == doctest::Approx(sigmoid(r_obj(t) + r_plc(t))).epsilon(1e-15));

  // late/logit: identical formula; late/probability: re-squashed sigmoids
  params.config.strategy = FusionStrategy::late;
  const Eigen::VectorXd p_logit = scorer_forward(rec, params, 3);
  CHECK((p_logit - p_inter).cwiseAbs().maxCoeff() == 0.0);
  params.config.late_space = LateFusionSpace::probability;
  const Eigen::VectorXd p_prob = scorer_forward(rec, params, 3);
  for (int t = 0; t < 11; ++t)
    CHECK(p_prob(t) == doctest::Approx(sigmoid(sigmoid(r_obj(t)) + sigmoid(r_plc(t)))).epsilon(1e-15));
}

TEST_CASE("intermediate fusion equals late fusion in logit space") {
  const auto rec = testutil::make_record(12, 5, 7, 51);
  auto inter = init_params(base_config(FusionStrategy::intermediate, 8));
  auto late = inter;
  late.config.strategy = FusionStrategy::late;
  late.config.late_space = LateFusionSpace::logit;

  const Eigen::VectorXd a = scorer_forward(rec, inter, 3);
  const Eigen::VectorXd b = scorer_forward(rec, late, 3);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("late fusion probability space squashes summed probabilities") {
  const auto rec = testutil::make_record(9, 5, 7, 53);
  auto params = init_params(base_config(FusionStrategy::late, 4));
  params.config.late_space = LateFusionSpace::probability;

  ScorerForward fwd;
  const Eigen::VectorXd p = scorer_forward(rec, params, 3, &fwd);
  const Eigen::VectorXd q1 =
      fwd.streams.at(Source::objects).raw.unaryExpr([](double v) { return sigmoid(v); });
  const Eigen::VectorXd q2 =
      fwd.streams.at(Source::places).raw.unaryExpr([](double v) { return sigmoid(v); });
  for (int t = 0; t < p.size(); ++t)
    CHECK(p(t) == doctest::Approx(sigmoid(q1(t) + q2(t))).epsilon(1e-15));

  // all-zero parameters: sigmoid(0.5 + 0.5), not 0.5
  auto zeroed = zeros_like(params);
  const Eigen::VectorXd pz = scorer_forward(rec, zeroed, 3);
  for (int t = 0; t < pz.size(); ++t)
    CHECK(pz(t) == doctest::Approx(sigmoid(1.0)).epsilon(1e-15));
}

TEST_CASE("forward rejects a record missing a required stream") {
  auto rec = testutil::make_record(10, 5, 7, 57);
  rec.streams.erase(Source::places);
  const auto params = init_params(base_config(FusionStrategy::late, 2));
  CHECK_THROWS_AS(scorer_forward(rec, params, 2), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip preserves forward output") {
  testutil::TempDir tmp("ckpt");
  const auto rec = testutil::make_record(12, 5, 7, 61);

  for (auto strategy : {FusionStrategy::single_source, FusionStrategy::early,
                        FusionStrategy::intermediate, FusionStrategy::late}) {
    auto params = init_params(base_config(strategy, 19));
    const auto path = tmp.path() / (std::string("ck_") + to_string(strategy) + ".bin");
    save_checkpoint(path, params, 3);

    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.m == 3);
    CHECK(loaded.params.config.strategy == strategy);
    CHECK(loaded.params.config.hidden == 4);

    // parameters pass through f32; outputs must match the f32-rounded params
    auto rounded = params;
    for (auto& t : collect_tensors(rounded))
      for (Eigen::Index i = 0; i < t.size(); ++i)
        t.data[i] = static_cast<double>(static_cast<float>(t.data[i]));

    const Eigen::VectorXd p_loaded = scorer_forward(rec, loaded.params, 3);
    const Eigen::VectorXd p_rounded = scorer_forward(rec, rounded, 3);
    CHECK((p_loaded - p_rounded).cwiseAbs().maxCoeff() == 0.0);

    // saving again is byte-stable (f32 rounding is idempotent)
    const auto path2 = tmp.path() / "second.bin";
    save_checkpoint(path2, loaded.params, 3);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
  }
}

TEST_CASE("checkpoint loader rejects garbage") {
  testutil::TempDir tmp("ckptbad");
  const auto path = tmp.path() / "bad.bin";
  std::ofstream(path, std::ios::binary) << "not a checkpoint at all";
  CHECK_THROWS_AS(load_checkpoint(path), ValidationError);
  CHECK_THROWS_AS(load_checkpoint(tmp.path() / "absent.bin"), IoError);
}
