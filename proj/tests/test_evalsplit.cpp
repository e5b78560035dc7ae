#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <set>

#include "helpers.hpp"
#include "mcsf/evalsplit.hpp"

using namespace mcsf;

namespace {

std::vector<std::uint8_t> mask(std::initializer_list<int> bits) {
  std::vector<std::uint8_t> out;
  for (int b : bits) out.push_back(static_cast<std::uint8_t>(b));
  return out;
}

}  // namespace

TEST_CASE("f1 hand-computed fixture") {
  const double f1 = f1_single(mask({1, 1, 0, 0}), mask({1, 0, 1, 0}));
  // P = 1/2, R = 1/2, F1 = 1/2
  CHECK(f1 == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("f1 edge cases") {
  CHECK(f1_single(mask({1, 0, 1}), mask({1, 0, 1})) == 1.0);
  CHECK(f1_single(mask({0, 0, 0}), mask({1, 0, 1})) == 0.0);
  CHECK(f1_single(mask({0, 0}), mask({0, 0})) == 0.0);
  CHECK_THROWS_AS(f1_single(mask({1}), mask({1, 0})), std::invalid_argument);
}

TEST_CASE("f1 is symmetric and bounded") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint8_t> a(30), b(30);
    for (int i = 0; i < 30; ++i) {
      a[i] = rng.uniform() < 0.3 ? 1 : 0;
      b[i] = rng.uniform() < 0.3 ? 1 : 0;
    }
    const double ab = f1_single(a, b);
    const double ba = f1_single(b, a);
    CHECK(ab == ba);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    if (ab == 1.0) {
      CHECK(a == b);
      CHECK(std::count(a.begin(), a.end(), 1) > 0);
    }
  }
}

TEST_CASE("evaluate_video aggregates per mode") {
  ReferenceSummaries refs;
  refs.masks = {mask({1, 1, 0, 0, 0}), mask({0, 1, 1, 0, 0})};
  const auto machine = mask({1, 1, 0, 0, 0});

  const auto avg = evaluate_video(machine, refs, AggregationMode::avg);
  const auto max = evaluate_video(machine, refs, AggregationMode::max);
  REQUIRE(avg.per_user_f1.size() == 2);
  CHECK(avg.per_user_f1[0] == doctest::Approx(1.0));
  CHECK(avg.per_user_f1[1] == doctest::Approx(0.5));
  CHECK(avg.aggregated == doctest::Approx(0.75));
  CHECK(max.aggregated == doctest::Approx(1.0));

  SUBCASE("single user: avg equals max") {
    refs.masks.resize(1);
    const auto a = evaluate_video(machine, refs, AggregationMode::avg);
    const auto m = evaluate_video(machine, refs, AggregationMode::max);
    CHECK(a.aggregated == m.aggregated);
  }
}

TEST_CASE("fold aggregation means over videos then folds") {
  SplitSet splits;
  splits.folds = {{{}, {"a", "b"}}, {{}, {"c"}}};
  std::map<std::string, double> scores = {{"a", 1.0}, {"b", 0.5}, {"c", 0.25}};

  const auto result = aggregate_evaluations(
      splits,
      [&](std::size_t, const std::string& id) {
        VideoEval ev;
        ev.per_user_f1 = {scores.at(id)};
        ev.aggregated = scores.at(id);
        return ev;
      },
      AggregationMode::avg);

  REQUIRE(result.per_fold.size() == 2);
  CHECK(result.per_fold[0] == doctest::Approx(0.75));
  CHECK(result.per_fold[1] == doctest::Approx(0.25));
  CHECK(result.overall == doctest::Approx(0.5));

  SUBCASE("all ones gives overall one") {
    const auto ones = aggregate_evaluations(
        splits,
        [&](std::size_t, const std::string&) {
          VideoEval ev;
          ev.per_user_f1 = {1.0};
          ev.aggregated = 1.0;
          return ev;
        },
        AggregationMode::avg);
    CHECK(ones.overall == 1.0);
  }

  SUBCASE("fold order does not change the overall mean") {
    std::swap(splits.folds[0], splits.folds[1]);
    const auto swapped = aggregate_evaluations(
        splits,
        [&](std::size_t, const std::string& id) {
          VideoEval ev;
          ev.per_user_f1 = {scores.at(id)};
          ev.aggregated = scores.at(id);
          return ev;
        },
        AggregationMode::avg);
    CHECK(swapped.overall == result.overall);
  }
}

TEST_CASE("cross_validate scores test videos with the fold scorer") {
  std::vector<VideoRecord> recs;
  Dataset ds;
  ds.name = "cv";
  for (int i = 0; i < 4; ++i) {
    auto r = testutil::make_record(12, 5, 7, 400 + i, 2);
    r.id = "v" + std::to_string(i);
    ds.videos.push_back(std::move(r));
  }
  SplitSet splits;
  splits.folds = {{{"v2", "v3"}, {"v0", "v1"}}, {{"v0", "v1"}, {"v2", "v3"}}};

  ScorerConfig cfg;
  cfg.strategy = FusionStrategy::late;
  cfg.dims = {{Source::objects, 5}, {Source::places, 7}};
  cfg.hidden = 4;
  cfg.seed = 2;
  const auto params = init_params(cfg);

  const auto result = cross_validate(
      ds, splits, [&](std::size_t) -> const ScorerParams& { return params; },
      AggregationMode::avg, 3);
  CHECK(result.per_video.size() == 4);
  CHECK(result.per_fold.size() == 2);
  CHECK(result.overall == doctest::Approx((result.per_fold[0] + result.per_fold[1]) / 2.0));

  SUBCASE("missing test video throws") {
    splits.folds[0].test_keys.push_back("ghost");
    CHECK_THROWS_AS(cross_validate(ds, splits,
                                   [&](std::size_t) -> const ScorerParams& { return params; },
                                   AggregationMode::avg, 3),
                    std::invalid_argument);
  }
}

TEST_CASE("audit counts multiplicities over the universe") {
  SplitSet splits;
  splits.folds = {{{}, {"v1"}}, {{}, {"v1"}}, {{}, {"v2"}}};
  const auto report = audit_splits(splits, {"v1", "v2", "v3"});

  CHECK(report.universe_size == 3);
  CHECK(report.missing_from_test == std::vector<std::string>{"v3"});
  REQUIRE(report.duplicated_in_test.size() == 1);
  CHECK(report.duplicated_in_test[0] == std::make_pair(std::string("v1"), 2));
  CHECK(report.missing_fraction == doctest::Approx(1.0 / 3));
  CHECK(report.duplicated_fraction == doctest::Approx(1.0 / 3));
  CHECK(report.unknown_keys.empty());

  SUBCASE("unknown keys are reported separately") {
    splits.folds[0].test_keys.push_back("stranger");
    const auto r2 = audit_splits(splits, {"v1", "v2", "v3"});
    CHECK(r2.unknown_keys == std::vector<std::string>{"stranger"});
  }
}

TEST_CASE("generated splits audit clean for the benchmark sizes") {
  for (int n : {25, 50}) {
    std::vector<std::string> universe;
    for (int i = 0; i < n; ++i) universe.push_back("video_" + std::to_string(i));
    const auto splits = generate_splits(universe, 5, 99);
    REQUIRE(splits.folds.size() == 5);
    for (const auto& fold : splits.folds) {
      CHECK(fold.test_keys.size() == static_cast<std::size_t>(n / 5));
      CHECK(fold.train_keys.size() == static_cast<std::size_t>(n - n / 5));
      // fold-internal disjointness and coverage
      std::set<std::string> all(fold.train_keys.begin(), fold.train_keys.end());
      for (const auto& k : fold.test_keys) CHECK(all.insert(k).second);
      CHECK(all.size() == static_cast<std::size_t>(n));
    }
    const auto report = audit_splits(splits, universe);
    CHECK(report.missing_from_test.empty());
    CHECK(report.duplicated_in_test.empty());
  }
}

TEST_CASE("generate_splits is deterministic and seed-sensitive") {
  std::vector<std::string> universe;
  for (int i = 0; i < 13; ++i) universe.push_back("k" + std::to_string(i));
  const auto a = generate_splits(universe, 4, 7);
  const auto b = generate_splits(universe, 4, 7);
  const auto c = generate_splits(universe, 4, 8);
  REQUIRE(a.folds.size() == b.folds.size());
  bool same = true, differs = false;
  for (std::size_t f = 0; f < a.folds.size(); ++f) {
    same = same && a.folds[f].test_keys == b.folds[f].test_keys;
    differs = differs || a.folds[f].test_keys != c.folds[f].test_keys;
  }
  CHECK(same);
  CHECK(differs);

  // sizes differ by at most one (13 = 4+3+3+3)
  std::multiset<std::size_t> sizes;
  for (const auto& fold : a.folds) sizes.insert(fold.test_keys.size());
  CHECK(*sizes.begin() + 1 >= *sizes.rbegin());
}

TEST_CASE("generated splits always audit clean") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 40));
    const int k = static_cast<int>(rng.uniform_int(1, n));
    std::vector<std::string> universe;
    for (int i = 0; i < n; ++i) universe.push_back("u" + std::to_string(i));
    const auto splits = generate_splits(universe, k, trial);
    const auto report = audit_splits(splits, universe);
    CHECK(report.missing_from_test.empty());
    CHECK(report.duplicated_in_test.empty());
    CHECK(report.unknown_keys.empty());
  }
}

TEST_CASE("generate_splits rejects k out of range") {
  CHECK_THROWS_AS(generate_splits({"a", "b"}, 3, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_splits({"a", "b"}, 0, 0), std::invalid_argument);
}

TEST_CASE("split files round-trip and accept the wrapped form") {
  testutil::TempDir tmp("splits");
  std::vector<std::string> universe = {"a", "b", "c", "d"};
  const auto splits = generate_splits(universe, 2, 5);

  const auto path = tmp.path() / "splits.json";
  save_splits(path, splits);
  const auto loaded = load_splits(path);
  REQUIRE(loaded.folds.size() == splits.folds.size());
  for (std::size_t f = 0; f < loaded.folds.size(); ++f) {
    CHECK(loaded.folds[f].train_keys == splits.folds[f].train_keys);
    CHECK(loaded.folds[f].test_keys == splits.folds[f].test_keys);
  }

  SUBCASE("wrapped object form") {
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(tmp.path() / "wrapped.json");
    out << "{\"splits\": " << text << "}";
    out.close();
    const auto wrapped = load_splits(tmp.path() / "wrapped.json");
    CHECK(wrapped.folds.size() == splits.folds.size());
  }

  SUBCASE("malformed file raises ValidationError") {
    std::ofstream out(tmp.path() / "bad.json");
    out << "{\"splits\": 42}";
    out.close();
    CHECK_THROWS_AS(load_splits(tmp.path() / "bad.json"), ValidationError);
  }
}

TEST_CASE("empty machine summary scores zero, not an error") {
  ReferenceSummaries refs;
  refs.masks = {mask({1, 1, 0, 0})};
  const auto ev = evaluate_video(mask({0, 0, 0, 0}), refs, AggregationMode::max);
  CHECK(ev.aggregated == 0.0);
}

TEST_CASE("audit output renders as table and json") {
  SplitSet splits;
  splits.folds = {{{}, {"v1"}}, {{}, {"v1"}}};
  const auto report = audit_splits(splits, {"v1", "v2"});
  const std::string table = audit_table(report);
  CHECK(table.find("missing from test:    1") != std::string::npos);
  CHECK(table.find("v2") != std::string::npos);
  const std::string json = audit_json(report);
  CHECK(json.find("\"missing_fraction\": 0.5") != std::string::npos);
  CHECK(json.find("\"count\": 2") != std::string::npos);
}
