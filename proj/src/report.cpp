#include "mcsf/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mcsf {

using ordered_json = nlohmann::ordered_json;

std::pair<std::string, std::string> ablation_labels(const ScorerConfig& config) {
  switch (config.strategy) {
    case FusionStrategy::single_source:
      return {config.single_src == Source::objects ? "O" : "P", "-"};
    case FusionStrategy::early:
      return {"O+P", "Early"};
    case FusionStrategy::intermediate:
      return {"O+P", "Intermediate"};
    case FusionStrategy::late:
      // the combination space changes the model; never report the two alike
      return {"O+P", config.late_space == LateFusionSpace::logit ? "Late" : "Late (probability)"};
  }
  return {"?", "?"};
}

EvalSummary eval_summary_from_json(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed evaluation JSON: ") + e.what());
  }
  EvalSummary s;
  try {
    s.dataset = j.at("dataset").get<std::string>();
    s.features = j.at("features").get<std::string>();
    s.fusion = j.at("fusion").get<std::string>();
    s.split_label = j.value("split_label", std::string("F1"));
    s.mode = mode_from_string(j.at("mode").get<std::string>());
    s.per_fold = j.at("per_fold").get<std::vector<double>>();
    s.overall = j.at("overall").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed evaluation JSON: ") + e.what());
  }
  return s;
}

std::string eval_summary_to_json(const EvalSummary& summary, const EvalResult& result) {
  ordered_json j;
  j["dataset"] = summary.dataset;
  j["features"] = summary.features;
  j["fusion"] = summary.fusion;
  j["split_label"] = summary.split_label;
  j["mode"] = to_string(summary.mode);
  j["per_fold"] = result.per_fold;
  j["overall"] = result.overall;
  j["per_video"] = ordered_json::array();
  for (const auto& fv : result.per_video) {
    double mean = 0.0;
    for (double f1 : fv.eval.per_user_f1) mean += f1;
    if (!fv.eval.per_user_f1.empty()) mean /= static_cast<double>(fv.eval.per_user_f1.size());
    j["per_video"].push_back({{"video_id", fv.video_id},
                              {"fold", fv.fold},
                              {"per_user_f1_mean", mean},
                              {"aggregated", fv.eval.aggregated}});
  }
  return j.dump(2) + "\n";
}

namespace {

std::string pct(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value * 100.0);
  return buf;
}

int row_rank(const EvalSummary& s) {
  if (s.features == "O" && s.fusion == "-") return 0;
  if (s.features == "P" && s.fusion == "-") return 1;
  if (s.fusion == "Early") return 2;
  if (s.fusion == "Intermediate") return 3;
  if (s.fusion == "Late") return 4;
  return 5;
}

std::vector<const EvalSummary*> sorted_rows(const std::vector<EvalSummary>& runs) {
  std::vector<const EvalSummary*> rows;
  for (const auto& r : runs) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const EvalSummary* a, const EvalSummary* b) {
    if (a->dataset != b->dataset) return a->dataset < b->dataset;
    const int ra = row_rank(*a), rb = row_rank(*b);
    if (ra != rb) return ra < rb;
    return a->features < b->features;
  });
  return rows;
}

std::vector<std::string> split_labels(const std::vector<EvalSummary>& runs) {
  std::set<std::string> labels;
  for (const auto& r : runs) labels.insert(r.split_label);
  return {labels.begin(), labels.end()};
}

}  // namespace

std::string ablation_markdown(const std::vector<EvalSummary>& runs) {
  const auto labels = split_labels(runs);
  // collapse rows that differ only in split label
  std::vector<std::tuple<std::string, std::string, std::string>> keys;
  std::map<std::tuple<std::string, std::string, std::string>, std::map<std::string, double>> cells;
  for (const auto* r : sorted_rows(runs)) {
    const auto key = std::make_tuple(r->dataset, r->fusion, r->features);
    if (!cells.count(key)) keys.push_back(key);
    cells[key][r->split_label] = r->overall;
  }

  std::ostringstream out;
  out << "| Dataset | Fusion | Features |";
  for (const auto& l : labels) out << " " << l << " |";
  out << "\n|---|---|---|";
  for (std::size_t i = 0; i < labels.size(); ++i) out << "---|";
  out << "\n";
  for (const auto& key : keys) {
    const auto& [dataset, fusion, features] = key;
    out << "| " << dataset << " | " << fusion << " | " << features << " |";
    for (const auto& l : labels) {
      const auto& row = cells[key];
      out << " " << (row.count(l) ? pct(row.at(l)) : "-") << " |";
    }
    out << "\n";
  }
  return out.str();
}

std::string ablation_csv(const std::vector<EvalSummary>& runs) {
  const auto labels = split_labels(runs);
  std::vector<std::tuple<std::string, std::string, std::string>> keys;
  std::map<std::tuple<std::string, std::string, std::string>, std::map<std::string, double>> cells;
  for (const auto* r : sorted_rows(runs)) {
    const auto key = std::make_tuple(r->dataset, r->fusion, r->features);
    if (!cells.count(key)) keys.push_back(key);
    cells[key][r->split_label] = r->overall;
  }

  std::ostringstream out;
  out << "dataset,fusion,features";
  for (const auto& l : labels) out << "," << l;
  out << "\n";
  for (const auto& key : keys) {
    const auto& [dataset, fusion, features] = key;
    out << dataset << "," << fusion << "," << features;
    for (const auto& l : labels) {
      const auto& row = cells[key];
      out << "," << (row.count(l) ? pct(row.at(l)) : "");
    }
    out << "\n";
  }
  return out.str();
}

std::string folds_markdown(const std::vector<EvalSummary>& runs) {
  std::size_t max_folds = 0;
  for (const auto& r : runs) max_folds = std::max(max_folds, r.per_fold.size());

  std::ostringstream out;
  out << "| Dataset | Fusion | Features | Split | Mode |";
  for (std::size_t f = 0; f < max_folds; ++f) out << " Fold " << f << " |";
  out << " Overall |\n|---|---|---|---|---|";
  for (std::size_t f = 0; f < max_folds; ++f) out << "---|";
  out << "---|\n";
  for (const auto* r : sorted_rows(runs)) {
    out << "| " << r->dataset << " | " << r->fusion << " | " << r->features << " | "
        << r->split_label << " | " << to_string(r->mode) << " |";
    for (std::size_t f = 0; f < max_folds; ++f)
      out << " " << (f < r->per_fold.size() ? pct(r->per_fold[f]) : "-") << " |";
    out << " " << pct(r->overall) << " |\n";
  }
  return out.str();
}

std::string folds_csv(const std::vector<EvalSummary>& runs) {
  std::size_t max_folds = 0;
  for (const auto& r : runs) max_folds = std::max(max_folds, r.per_fold.size());

  std::ostringstream out;
  out << "dataset,fusion,features,split,mode";
  for (std::size_t f = 0; f < max_folds; ++f) out << ",fold_" << f;
  out << ",overall\n";
  for (const auto* r : sorted_rows(runs)) {
    out << r->dataset << "," << r->fusion << "," << r->features << "," << r->split_label << ","
        << to_string(r->mode);
    for (std::size_t f = 0; f < max_folds; ++f)
      out << "," << (f < r->per_fold.size() ? pct(r->per_fold[f]) : "");
    out << "," << pct(r->overall) << "\n";
  }
  return out.str();
}

}  // namespace mcsf
