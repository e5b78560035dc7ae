#include "mcsf/evalsplit.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mcsf/rng.hpp"
#include "mcsf/shotselect.hpp"

namespace mcsf {

using ordered_json = nlohmann::ordered_json;

const char* to_string(AggregationMode m) { return m == AggregationMode::avg ? "avg" : "max"; }

AggregationMode mode_from_string(const std::string& s) {
  if (s == "avg") return AggregationMode::avg;
  if (s == "max") return AggregationMode::max;
  throw std::invalid_argument("unknown aggregation mode '" + s + "' (expected avg or max)");
}

double f1_single(const std::vector<std::uint8_t>& machine, const std::vector<std::uint8_t>& user) {
  if (machine.size() != user.size())
    throw std::invalid_argument("mask length mismatch: " + std::to_string(machine.size()) +
                                " vs " + std::to_string(user.size()));
  std::int64_t overlap = 0, n_machine = 0, n_user = 0;
  for (std::size_t i = 0; i < machine.size(); ++i) {
    n_machine += machine[i] ? 1 : 0;
    n_user += user[i] ? 1 : 0;
    overlap += (machine[i] && user[i]) ? 1 : 0;
  }
  const double precision = n_machine > 0 ? static_cast<double>(overlap) / n_machine : 0.0;
  const double recall = n_user > 0 ? static_cast<double>(overlap) / n_user : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

VideoEval evaluate_video(const std::vector<std::uint8_t>& machine_mask,
                         const ReferenceSummaries& refs, AggregationMode mode) {
  VideoEval ev;
  ev.mode = mode;
  for (const auto& user : refs.masks) ev.per_user_f1.push_back(f1_single(machine_mask, user));
  if (ev.per_user_f1.empty()) throw std::invalid_argument("no reference summaries");
  if (mode == AggregationMode::avg) {
    ev.aggregated = std::accumulate(ev.per_user_f1.begin(), ev.per_user_f1.end(), 0.0) /
                    static_cast<double>(ev.per_user_f1.size());
  } else {
    ev.aggregated = *std::max_element(ev.per_user_f1.begin(), ev.per_user_f1.end());
  }
  return ev;
}

EvalResult aggregate_evaluations(
    const SplitSet& splits,
    const std::function<VideoEval(std::size_t fold, const std::string& id)>& eval_one,
    AggregationMode mode) {
  EvalResult result;
  result.mode = mode;
  for (std::size_t f = 0; f < splits.folds.size(); ++f) {
    double sum = 0.0;
    for (const auto& id : splits.folds[f].test_keys) {
      FoldVideoEval fv{f, id, eval_one(f, id)};
      sum += fv.eval.aggregated;
      result.per_video.push_back(std::move(fv));
    }
    const auto n = splits.folds[f].test_keys.size();
    result.per_fold.push_back(n > 0 ? sum / static_cast<double>(n) : 0.0);
  }
  result.overall = result.per_fold.empty()
                       ? 0.0
                       : std::accumulate(result.per_fold.begin(), result.per_fold.end(), 0.0) /
                             static_cast<double>(result.per_fold.size());
  return result;
}

EvalResult cross_validate(const Dataset& dataset, const SplitSet& splits,
                          const std::function<const ScorerParams&(std::size_t fold)>& scorer_for_fold,
                          AggregationMode mode, int m, double budget_fraction) {
  for (std::size_t f = 0; f < splits.folds.size(); ++f) {
    const auto& fold = splits.folds[f];
    const std::set<std::string> train(fold.train_keys.begin(), fold.train_keys.end());
    for (const auto& key : fold.test_keys)
      if (train.count(key))
        throw std::invalid_argument("fold " + std::to_string(f) + " has '" + key +
                                    "' in both train and test");
  }
  return aggregate_evaluations(
      splits,
      [&](std::size_t fold, const std::string& id) {
        const VideoRecord* rec = dataset.find(id);
        if (!rec)
          throw std::invalid_argument("test video '" + id + "' of fold " + std::to_string(fold) +
                                      " not in dataset");
        const Eigen::VectorXd p = scorer_forward(*rec, scorer_for_fold(fold), m);
        const MachineSummary summary = summarize(*rec, p, budget_fraction);
        return evaluate_video(summary.mask, rec->references, mode);
      },
      mode);
}

AuditReport audit_splits(const SplitSet& splits, const std::vector<std::string>& universe) {
  AuditReport report;
  report.universe_size = universe.size();

  std::map<std::string, int> multiplicity;
  for (const auto& key : universe) multiplicity[key] = 0;

  std::vector<std::string> unknown;
  for (const auto& fold : splits.folds) {
    for (const auto& key : fold.test_keys) {
      auto it = multiplicity.find(key);
      if (it == multiplicity.end())
        unknown.push_back(key);
      else
        ++it->second;
    }
  }
  std::sort(unknown.begin(), unknown.end());
  unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
  report.unknown_keys = std::move(unknown);

  for (const auto& [key, count] : multiplicity) {  // std::map: already sorted
    if (count == 0) report.missing_from_test.push_back(key);
    if (count >= 2) report.duplicated_in_test.emplace_back(key, count);
  }
  if (!universe.empty()) {
    report.missing_fraction = static_cast<double>(report.missing_from_test.size()) /
                              static_cast<double>(universe.size());
    report.duplicated_fraction = static_cast<double>(report.duplicated_in_test.size()) /
                                 static_cast<double>(universe.size());
  }
  return report;
}

SplitSet generate_splits(const std::vector<std::string>& universe, int k, std::uint64_t seed) {
  if (k < 1 || static_cast<std::size_t>(k) > universe.size())
    throw std::invalid_argument("k=" + std::to_string(k) + " out of range [1, " +
                                std::to_string(universe.size()) + "]");
  std::vector<std::string> shuffled = universe;
  Rng rng(seed);
  rng.shuffle(shuffled);

  SplitSet splits;
  splits.folds.resize(static_cast<std::size_t>(k));
  // sizes differ by at most one: first (n mod k) folds get the extra key
  const std::size_t n = shuffled.size();
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t next = 0;
  for (std::size_t f = 0; f < splits.folds.size(); ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    auto& fold = splits.folds[f];
    fold.test_keys.assign(shuffled.begin() + next, shuffled.begin() + next + len);
    next += len;
  }
  for (auto& fold : splits.folds) {
    for (const auto& key : shuffled)
      if (std::find(fold.test_keys.begin(), fold.test_keys.end(), key) == fold.test_keys.end())
        fold.train_keys.push_back(key);
  }
  return splits;
}

SplitSet load_splits(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split file: " + path.string());
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed split file " + path.string() + ": " + e.what());
  }

  const ordered_json* list = &j;
  if (j.is_object() && j.contains("splits")) list = &j.at("splits");
  if (!list->is_array())
    throw ValidationError("malformed split file " + path.string() +
                          ": expected a list of folds or a {\"splits\": [...]} object");

  SplitSet splits;
  try {
    for (const auto& jf : *list) {
      Fold fold;
      fold.train_keys = jf.at("train_keys").get<std::vector<std::string>>();
      fold.test_keys = jf.at("test_keys").get<std::vector<std::string>>();
      splits.folds.push_back(std::move(fold));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed split file " + path.string() + ": " + e.what());
  }
  return splits;
}

void save_splits(const std::filesystem::path& path, const SplitSet& splits) {
  ordered_json j = ordered_json::array();
  for (const auto& fold : splits.folds)
    j.push_back({{"train_keys", fold.train_keys}, {"test_keys", fold.test_keys}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write split file: " + path.string());
  out << j.dump(2) << "\n";
}

std::string audit_table(const AuditReport& r) {
  std::ostringstream out;
  out << "universe size:        " << r.universe_size << "\n";
  out << "missing from test:    " << r.missing_from_test.size() << " (fraction "
      << r.missing_fraction << ")\n";
  for (const auto& key : r.missing_from_test) out << "  - " << key << "\n";
  out << "duplicated in test:   " << r.duplicated_in_test.size() << " (fraction "
      << r.duplicated_fraction << ")\n";
  for (const auto& [key, count] : r.duplicated_in_test)
    out << "  - " << key << " x" << count << "\n";
  if (!r.unknown_keys.empty()) {
    out << "unknown keys:         " << r.unknown_keys.size() << "\n";
    for (const auto& key : r.unknown_keys) out << "  - " << key << "\n";
  }
  return out.str();
}

std::string audit_json(const AuditReport& r) {
  ordered_json j;
  j["universe_size"] = r.universe_size;
  j["missing"] = r.missing_from_test;
  j["duplicated"] = ordered_json::array();
  for (const auto& [key, count] : r.duplicated_in_test)
    j["duplicated"].push_back({{"key", key}, {"count", count}});
  j["unknown"] = r.unknown_keys;
  j["missing_fraction"] = r.missing_fraction;
  j["duplicated_fraction"] = r.duplicated_fraction;
  return j.dump(2) + "\n";
}

}  // namespace mcsf
