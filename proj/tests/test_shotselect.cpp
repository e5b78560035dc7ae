#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <functional>
#include <limits>

#include "helpers.hpp"
#include "mcsf/shotselect.hpp"

using namespace mcsf;

namespace {

// Brute-force knapsack over all subsets; ties resolved toward excluding the
// higher-indexed item (iterate subsets so that lower-indexed-preferring
// solutions win on equal value).
double knapsack_bruteforce(const std::vector<double>& values,
                           const std::vector<std::int64_t>& weights, std::int64_t capacity,
                           std::vector<int>* chosen = nullptr) {
  const std::size_t n = values.size();
  double best = 0.0;
  unsigned best_mask = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    double value = 0.0;
    std::int64_t weight = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) {
        value += values[i];
        weight += weights[i];
      }
    if (weight <= capacity && value > best) {
      best = value;
      best_mask = mask;
    }
  }
  if (chosen) {
    chosen->clear();
    for (std::size_t i = 0; i < n; ++i)
      if (best_mask & (1u << i)) chosen->push_back(static_cast<int>(i));
  }
  return best;
}

// Brute-force segmentation: minimum within-segment squared deviation over
// all ways to split T steps into exactly K contiguous non-empty segments.
double segmentation_bruteforce(const Eigen::MatrixXd& X, int K) {
  const int T = static_cast<int>(X.rows());
  auto cost = [&](int a, int b) {
    const Eigen::RowVectorXd mean = X.middleRows(a, b - a).colwise().mean();
    double c = 0.0;
    for (int t = a; t < b; ++t) c += (X.row(t) - mean).squaredNorm();
    return c;
  };
  double best = std::numeric_limits<double>::infinity();
  // choose K-1 boundaries from {1..T-1}
  std::vector<int> bounds(K - 1);
  std::function<void(int, int, double)> rec = [&](int idx, int from, double acc) {
    if (idx == K - 1) {
      const int last = (K == 1) ? 0 : bounds[K - 2];
      best = std::min(best, acc + cost(last, T));
      return;
    }
    for (int b = from; b <= T - (K - 1 - idx); ++b) {
      const int prev = (idx == 0) ? 0 : bounds[idx - 1];
      bounds[idx] = b;
      rec(idx + 1, b + 1, acc + cost(prev, b));
    }
  };
  rec(0, 1, 0.0);
  return best;
}

}  // namespace

TEST_CASE("upsample expands steps to frame ranges") {
  Eigen::VectorXd p(3);
  p << 0.2, 0.9, 0.1;
  const auto scores = upsample_scores(p, {0, 15, 30}, 45);
  REQUIRE(scores.size() == 45);
  for (int f = 0; f < 15; ++f) CHECK(scores(f) == 0.2);
  for (int f = 15; f < 30; ++f) CHECK(scores(f) == 0.9);
  for (int f = 30; f < 45; ++f) CHECK(scores(f) == 0.1);
}

TEST_CASE("upsample with a single step is constant") {
  Eigen::VectorXd p(1);
  p << 0.42;
  const auto scores = upsample_scores(p, {5}, 20);
  for (int f = 0; f < 20; ++f) CHECK(scores(f) == 0.42);
}

TEST_CASE("upsample covers frames before the first pick with p0") {
  Eigen::VectorXd p(2);
  p << 0.7, 0.3;
  const auto scores = upsample_scores(p, {5, 10}, 12);
  for (int f = 0; f < 10; ++f) CHECK(scores(f) == 0.7);
  for (int f = 10; f < 12; ++f) CHECK(scores(f) == 0.3);
}

TEST_CASE("upsample validates its inputs") {
  Eigen::VectorXd p(2);
  p << 0.5, 0.5;
  CHECK_THROWS_AS(upsample_scores(p, {0, 15, 30}, 45), std::invalid_argument);
  CHECK_THROWS_AS(upsample_scores(p, {0, 50}, 45), std::invalid_argument);
}

TEST_CASE("segmentation finds the planted boundary") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 1, 1, 1, 5, 5, 5, 5;
  const auto seg = kts_segment_steps(X, 2);
  REQUIRE(seg.segments.size() == 2);
  CHECK(seg.segments[0] == std::make_pair(0, 2));
  CHECK(seg.segments[1] == std::make_pair(2, 4));
  CHECK(seg.cost == doctest::Approx(0.0));
}

TEST_CASE("single-segment cost is the total squared deviation") {
  Rng rng(5);
  Eigen::MatrixXd X(7, 3);
  for (int t = 0; t < 7; ++t)
    for (int j = 0; j < 3; ++j) X(t, j) = rng.uniform(-1, 1);
  const auto seg = kts_segment_steps(X, 1);
  const Eigen::RowVectorXd mean = X.colwise().mean();
  double expect = 0.0;
  for (int t = 0; t < 7; ++t) expect += (X.row(t) - mean).squaredNorm();
  CHECK(seg.cost == doctest::Approx(expect).epsilon(1e-12));
  CHECK(seg.segments == std::vector<std::pair<int, int>>{{0, 7}});
}

TEST_CASE("segmentation DP matches exhaustive search") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = static_cast<int>(rng.uniform_int(3, 16));
    const int K = static_cast<int>(rng.uniform_int(1, 3));
    Eigen::MatrixXd X(T, 2);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < 2; ++j) X(t, j) = rng.uniform(-2, 2);
    const auto seg = kts_segment_steps(X, K);
    const double brute = segmentation_bruteforce(X, K);
    CHECK(seg.cost == doctest::Approx(brute).epsilon(1e-9));
  }
}

TEST_CASE("segmentation rejects out-of-range targets") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(4, 2);
  CHECK_THROWS_AS(kts_segment_steps(X, 0), std::invalid_argument);
  CHECK_THROWS_AS(kts_segment_steps(X, 5), std::invalid_argument);
}

TEST_CASE("frame-level segmentation uses picks of boundary steps") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 1, 1, 1, 5, 5, 5, 5;
  const auto bounds = kts_segment(X, 2, {0, 15, 30, 45}, 60);
  REQUIRE(bounds.segments.size() == 2);
  CHECK(bounds.segments[0] == FrameSpan{0, 30});
  CHECK(bounds.segments[1] == FrameSpan{30, 60});
}

TEST_CASE("frame segments absorb frames before the first pick") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 1, 1, 1, 5, 5, 5, 5;
  // picks start at 5: frames 0..4 belong to the first shot
  const auto bounds = kts_segment(X, 2, {5, 20, 35, 50}, 60);
  REQUIRE(bounds.segments.size() == 2);
  CHECK(bounds.segments[0] == FrameSpan{0, 35});
  CHECK(bounds.segments[1] == FrameSpan{35, 60});
}

TEST_CASE("shot values are mean score and frame count") {
  Eigen::VectorXd scores(4);
  scores << 0.0, 1.0, 0.5, 0.5;
  ShotBoundaries bounds{{{0, 2}, {2, 4}}};
  std::vector<double> values;
  std::vector<std::int64_t> weights;
  shot_values(scores, bounds, values, weights);
  CHECK(values == std::vector<double>{0.5, 0.5});
  CHECK(weights == std::vector<std::int64_t>{2, 2});

  SUBCASE("uniform scores give every shot the same value") {
    Eigen::VectorXd uniform = Eigen::VectorXd::Constant(10, 0.3);
    ShotBoundaries b{{{0, 3}, {3, 7}, {7, 10}}};
    shot_values(uniform, b, values, weights);
    for (double v : values) CHECK(v == doctest::Approx(0.3));
    std::int64_t total = 0;
    for (auto w : weights) total += w;
    CHECK(total == 10);
  }
}

TEST_CASE("knapsack fixed instance") {
  const auto result = knapsack_select({5, 4, 3}, {3, 4, 2}, 5);
  CHECK(result.chosen == std::vector<int>{0, 2});
  CHECK(result.total_value == 8.0);
  CHECK(result.total_weight == 5);
  // confirmed against the exhaustive oracle
  CHECK(knapsack_bruteforce({5, 4, 3}, {3, 4, 2}, 5) == 8.0);
}

TEST_CASE("knapsack boundary capacities") {
  const auto all = knapsack_select({1, 2, 3}, {4, 5, 6}, 100);
  CHECK(all.chosen == std::vector<int>{0, 1, 2});
  const auto none = knapsack_select({1, 2, 3}, {4, 5, 6}, 0);
  CHECK(none.chosen.empty());
  CHECK(none.total_value == 0.0);
}

TEST_CASE("knapsack ties exclude the higher-indexed shot") {
  const auto result = knapsack_select({1, 1}, {1, 1}, 1);
  CHECK(result.chosen == std::vector<int>{0});
}

TEST_CASE("knapsack DP equals brute force on random instances") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 12));
    std::vector<double> values(n);
    std::vector<std::int64_t> weights(n);
    std::int64_t total_weight = 0;
    for (int i = 0; i < n; ++i) {
      values[i] = rng.uniform(0.0, 10.0);
      weights[i] = rng.uniform_int(1, 20);
      total_weight += weights[i];
    }
    const std::int64_t capacity = rng.uniform_int(0, total_weight + 5);
    const auto dp = knapsack_select(values, weights, capacity);
    const double brute = knapsack_bruteforce(values, weights, capacity);
    CHECK(dp.total_value == doctest::Approx(brute).epsilon(1e-12));
    CHECK(dp.total_weight <= capacity);
  }
}

TEST_CASE("knapsack monotonicity: raising a chosen shot's value keeps it chosen") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 10));
    std::vector<double> values(n);
    std::vector<std::int64_t> weights(n);
    std::int64_t total_weight = 0;
    for (int i = 0; i < n; ++i) {
      values[i] = rng.uniform(0.1, 5.0);
      weights[i] = rng.uniform_int(1, 15);
      total_weight += weights[i];
    }
    const std::int64_t capacity = rng.uniform_int(1, total_weight);
    const auto first = knapsack_select(values, weights, capacity);
    if (first.chosen.empty()) continue;

    const int bump = first.chosen[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(first.chosen.size()) - 1))];
    values[static_cast<std::size_t>(bump)] += rng.uniform(0.1, 3.0);
    const auto second = knapsack_select(values, weights, capacity);
    CHECK(std::find(second.chosen.begin(), second.chosen.end(), bump) != second.chosen.end());
  }
}

TEST_CASE("summarize returns the empty summary when no shot fits") {
  // four shots of ten frames, budget 15% of 40 = 6 < 10
  VideoRecord rec;
  rec.id = "flat";
  rec.n_frames = 40;
  for (int t = 0; t < 8; ++t) rec.picks.push_back(t * 5);
  rec.change_points = std::vector<FrameSpan>{{0, 10}, {10, 20}, {20, 30}, {30, 40}};
  Eigen::VectorXd p = Eigen::VectorXd::Constant(8, 0.5);

  const auto summary = summarize(rec, p, 0.15);
  CHECK(summary.budget_frames == 6);
  CHECK(summary.selected_shots.empty());
  CHECK(std::count(summary.mask.begin(), summary.mask.end(), 1) == 0);
  CHECK(summary.mask.size() == 40);
  CHECK(summary.used_provided_change_points);

  // brute force confirms the empty optimum
  CHECK(knapsack_bruteforce({0.5, 0.5, 0.5, 0.5}, {10, 10, 10, 10}, 6) == 0.0);
}

TEST_CASE("summarize picks a small top-scoring shot that fits") {
  VideoRecord rec;
  rec.id = "peak";
  rec.n_frames = 40;
  for (int t = 0; t < 8; ++t) rec.picks.push_back(t * 5);
  rec.change_points = std::vector<FrameSpan>{{0, 15}, {15, 20}, {20, 40}};
  Eigen::VectorXd p(8);
  p << 0.1, 0.1, 0.1, 0.9, 0.1, 0.1, 0.1, 0.1;  // steps 3 covers frames 15..19

  const auto summary = summarize(rec, p, 0.15);  // capacity 6, middle shot weighs 5
  CHECK(summary.selected_shots == std::vector<int>{1});
  std::int64_t marked = 0;
  for (std::size_t f = 0; f < summary.mask.size(); ++f)
    if (summary.mask[f]) {
      ++marked;
      CHECK(f >= 15);
      CHECK(f < 20);
    }
  CHECK(marked == 5);
}

TEST_CASE("segmentation recovers planted boundaries on synthetic features") {
  testutil::TempDir tmp("ktsplant");
  SynthConfig cfg;
  cfg.n_videos = 3;
  cfg.n_frames = 600;
  cfg.n_users = 2;
  cfg.seed = 77;
  const Dataset ds = generate_synthetic_dataset(tmp.path(), cfg);

  for (const auto& rec : ds.videos) {
    const auto& planted = *rec.change_points;
    const auto kts = kts_segment(rec.streams.at(Source::objects).values,
                                 static_cast<int>(planted.size()), rec.picks, rec.n_frames);
    REQUIRE(kts.segments.size() == planted.size());
    // planted boundaries fall between picks; KTS boundaries sit on picks,
    // so allow the 15-frame subsampling quantization
    for (std::size_t k = 1; k < planted.size(); ++k)
      CHECK(std::llabs(kts.segments[k].first - planted[k].first) <= 15);
  }
}

TEST_CASE("summarize falls back to KTS without change points and stays in budget") {
  auto rec = testutil::make_record(20, 4, 6, 23);
  REQUIRE(!rec.change_points);
  Eigen::VectorXd p(20);
  Rng rng(29);
  for (int t = 0; t < 20; ++t) p(t) = rng.uniform(0.0, 1.0);

  const auto summary = summarize(rec, p, 0.15);
  CHECK(!summary.used_provided_change_points);
  CHECK(summary.mask.size() == static_cast<std::size_t>(rec.n_frames));
  std::int64_t marked = 0;
  for (auto v : summary.mask) marked += v;
  CHECK(marked <= summary.budget_frames);

  // mask must be exactly the union of the selected segments
  std::vector<std::uint8_t> expect(summary.mask.size(), 0);
  for (int k : summary.selected_shots) {
    const auto& [s, e] = summary.boundaries.segments[static_cast<std::size_t>(k)];
    for (std::int64_t f = s; f < e; ++f) expect[static_cast<std::size_t>(f)] = 1;
  }
  CHECK(summary.mask == expect);
}
