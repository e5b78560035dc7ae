#pragma once

#include <string>
#include <vector>

#include "mcsf/evalsplit.hpp"

namespace mcsf {

// One evaluation run, as stored in an evaluation JSON file.
struct EvalSummary {
  std::string dataset;
  std::string features;     // "O", "P", "O+P"
  std::string fusion;       // "-", "Early", "Intermediate", "Late"
  std::string split_label;  // e.g. "F1"
  AggregationMode mode = AggregationMode::avg;
  std::vector<double> per_fold;
  double overall = 0.0;
};

// Row labels for a scorer configuration, matching the ablation layout:
// single object stream -> ("O", "-"), fused -> ("O+P", <fusion>).
std::pair<std::string, std::string> ablation_labels(const ScorerConfig& config);

EvalSummary eval_summary_from_json(const std::string& json_text);
std::string eval_summary_to_json(const EvalSummary& summary, const EvalResult& result);

// Ablation table: one row per (dataset, fusion, features), one score column
// per split label, values rendered as percentages with one decimal.
std::string ablation_markdown(const std::vector<EvalSummary>& runs);
std::string ablation_csv(const std::vector<EvalSummary>& runs);

// Cross-validation table: per-fold means and the overall mean per run.
std::string folds_markdown(const std::vector<EvalSummary>& runs);
std::string folds_csv(const std::vector<EvalSummary>& runs);

}  // namespace mcsf
