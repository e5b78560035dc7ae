// mcsf: multi-source chunk and stride fusion toolkit.
//
// Subcommands cover the full pipeline: dataset synth/validate, splits
// generate/audit, train, score, summarize, evaluate, report. Every command
// is deterministic given its flags and seed, and echoes its effective
// configuration as run_config.json into the output directory.

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "mcsf/checkpoint.hpp"
#include "mcsf/dataio.hpp"
#include "mcsf/evalsplit.hpp"
#include "mcsf/model.hpp"
#include "mcsf/report.hpp"
#include "mcsf/shotselect.hpp"
#include "mcsf/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace mcsf;

namespace {

// Merged option view: defaults <- JSON config file <- command-line flags.
struct RunConfig {
  std::string strategy = "late";
  std::string source = "objects";          // single_source lane
  std::string primary_source = "objects";  // decoder target for non-early
  int m = 0;                               // 0 = ceil(sqrt(n_steps))
  std::vector<int> deltas = {1, 2, 4};
  int hidden = 32;
  int fused_dim = 0;  // 0 = min of source dims
  std::string late_fusion_space = "logit";
  double budget_fraction = 0.15;
  double sigma_target = 0.15;
  double lambda_sparsity = 1.0;
  double learning_rate = 1e-4;
  int epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  std::string mode = "avg";
  std::string split_label = "F1";
  int jobs = 1;
  int kts_segments = 0;  // 0 = auto
  bool force_kts = false;

  ordered_json to_json() const {
    ordered_json j;
    j["strategy"] = strategy;
    j["source"] = source;
    j["primary_source"] = primary_source;
    j["m"] = m;
    j["deltas"] = deltas;
    j["hidden"] = hidden;
    j["fused_dim"] = fused_dim;
    j["late_fusion_space"] = late_fusion_space;
    j["budget_fraction"] = budget_fraction;
    j["sigma_target"] = sigma_target;
    j["lambda_sparsity"] = lambda_sparsity;
    j["learning_rate"] = learning_rate;
    j["epochs"] = epochs;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["adam_epsilon"] = adam_epsilon;
    j["clip_norm"] = clip_norm;
    j["seed"] = seed;
    j["mode"] = mode;
    j["split_label"] = split_label;
    j["jobs"] = jobs;
    j["kts_segments"] = kts_segments;
    j["force_kts"] = force_kts;
    return j;
  }
};

// Ties CLI options to config-file keys so a JSON config can fill any field
// the command line left untouched.
class ConfigBinder {
 public:
  template <typename T>
  void bind(CLI::Option* opt, const std::string& key, T& field) {
    entries_.push_back({opt, key, [&field](const ordered_json& j) { field = j.get<T>(); }});
  }

  void apply_file(const fs::path& path) const {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    ordered_json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("malformed config file " + path.string() + ": " + e.what());
    }
    for (const auto& entry : entries_) {
      if (entry.opt->count() == 0 && j.contains(entry.key)) {
        try {
          entry.apply(j.at(entry.key));
        } catch (const nlohmann::json::exception& e) {
          throw ValidationError("config key '" + entry.key + "': " + e.what());
        }
      }
    }
  }

 private:
  struct Entry {
    CLI::Option* opt;
    std::string key;
    std::function<void(const ordered_json&)> apply;
  };
  std::vector<Entry> entries_;
};

struct CommandContext {
  RunConfig cfg;
  ConfigBinder binder;
  std::string config_file;

  void finalize() {
    if (!config_file.empty()) binder.apply_file(config_file);
  }
};

void add_common_options(CLI::App* cmd, CommandContext& ctx) {
  cmd->add_option("--config", ctx.config_file, "JSON config file (flags take precedence)");
  auto& cfg = ctx.cfg;
  auto& b = ctx.binder;
  b.bind(cmd->add_option("--seed", cfg.seed, "RNG seed"), "seed", cfg.seed);
  b.bind(cmd->add_option("--m", cfg.m, "segment count (0 = ceil(sqrt(n_steps)))"), "m", cfg.m);
}

void add_model_options(CLI::App* cmd, CommandContext& ctx) {
  auto& cfg = ctx.cfg;
  auto& b = ctx.binder;
  b.bind(cmd->add_option("--strategy", cfg.strategy,
                         "fusion strategy: single_source|early|intermediate|late"),
         "strategy", cfg.strategy);
  b.bind(cmd->add_option("--source", cfg.source, "stream for single_source: objects|places"),
         "source", cfg.source);
  b.bind(cmd->add_option("--hidden", cfg.hidden, "recurrent hidden size"), "hidden", cfg.hidden);
  b.bind(cmd->add_option("--fused-dim", cfg.fused_dim, "early-fusion common dim (0 = min)"),
         "fused_dim", cfg.fused_dim);
  b.bind(cmd->add_option("--deltas", cfg.deltas, "difference attention distances")
             ->delimiter(','),
         "deltas", cfg.deltas);
  b.bind(cmd->add_option("--late-space", cfg.late_fusion_space,
                         "late fusion combination space: logit|probability"),
         "late_fusion_space", cfg.late_fusion_space);
}

void add_train_options(CLI::App* cmd, CommandContext& ctx) {
  auto& cfg = ctx.cfg;
  auto& b = ctx.binder;
  b.bind(cmd->add_option("--epochs", cfg.epochs, "training epochs"), "epochs", cfg.epochs);
  b.bind(cmd->add_option("--lr", cfg.learning_rate, "Adam learning rate"), "learning_rate",
         cfg.learning_rate);
  b.bind(cmd->add_option("--beta1", cfg.beta1, "Adam beta1"), "beta1", cfg.beta1);
  b.bind(cmd->add_option("--beta2", cfg.beta2, "Adam beta2"), "beta2", cfg.beta2);
  b.bind(cmd->add_option("--adam-eps", cfg.adam_epsilon, "Adam epsilon"), "adam_epsilon",
         cfg.adam_epsilon);
  b.bind(cmd->add_option("--clip", cfg.clip_norm, "global gradient norm clip"), "clip_norm",
         cfg.clip_norm);
  b.bind(cmd->add_option("--lambda-sparsity", cfg.lambda_sparsity, "sparsity term weight"),
         "lambda_sparsity", cfg.lambda_sparsity);
  b.bind(cmd->add_option("--sigma-target", cfg.sigma_target, "target mean score"), "sigma_target",
         cfg.sigma_target);
  b.bind(cmd->add_option("--primary-source", cfg.primary_source,
                         "stream the decoder reconstructs (non-early strategies)"),
         "primary_source", cfg.primary_source);
  b.bind(cmd->add_option("--jobs", cfg.jobs, "parallel fold workers"), "jobs", cfg.jobs);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void echo_run_config(const fs::path& out_dir, const RunConfig& cfg) {
  write_text(out_dir / "run_config.json", cfg.to_json().dump(2) + "\n");
}

std::map<Source, int> dataset_dims(const Dataset& ds) {
  std::map<Source, int> dims;
  for (const auto& video : ds.videos) {
    for (const auto& [tag, stream] : video.streams) {
      auto [it, fresh] = dims.emplace(tag, stream.dim());
      if (!fresh && it->second != stream.dim())
        throw ValidationError("inconsistent dim for source " + std::string(to_string(tag)) +
                              ": video '" + video.id + "' has " + std::to_string(stream.dim()) +
                              ", expected " + std::to_string(it->second));
    }
  }
  return dims;
}

ScorerConfig scorer_config_from(const RunConfig& cfg, const std::map<Source, int>& dims) {
  ScorerConfig sc;
  sc.strategy = strategy_from_string(cfg.strategy);
  sc.single_src = source_from_string(cfg.source);
  sc.dims = dims;
  if (sc.strategy == FusionStrategy::single_source) {
    const auto it = dims.find(sc.single_src);
    if (it == dims.end())
      throw ValidationError("dataset has no stream " + cfg.source + " for single_source");
    sc.dims = {{sc.single_src, it->second}};
  }
  sc.hidden = cfg.hidden;
  sc.fused_dim = cfg.fused_dim;
  sc.deltas = cfg.deltas;
  sc.late_space = late_space_from_string(cfg.late_fusion_space);
  sc.seed = cfg.seed;
  return sc;
}

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.learning_rate = cfg.learning_rate;
  tc.beta1 = cfg.beta1;
  tc.beta2 = cfg.beta2;
  tc.adam_epsilon = cfg.adam_epsilon;
  tc.clip_norm = cfg.clip_norm;
  tc.lambda_sparsity = cfg.lambda_sparsity;
  tc.sigma_target = cfg.sigma_target;
  tc.seed = cfg.seed;
  tc.m = cfg.m;
  tc.primary_source = source_from_string(cfg.primary_source);
  return tc;
}

std::string fold_dir(std::size_t fold) { return "fold_" + std::to_string(fold); }

void write_f32(const fs::path& path, const Eigen::VectorXd& v) {
  std::vector<float> buf(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
}

Eigen::VectorXd read_f32(const fs::path& path, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<float> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
  if (!in || in.peek() != EOF)
    throw ValidationError("shape mismatch in " + path.string() + ": expected " +
                          std::to_string(n * 4) + " bytes");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = buf[i];
  return v;
}

void write_u8(const fs::path& path, const std::vector<std::uint8_t>& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
}

std::vector<std::uint8_t> read_u8(const fs::path& path, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n));
  if (!in || in.peek() != EOF)
    throw ValidationError("shape mismatch in " + path.string() + ": expected " + std::to_string(n) +
                          " bytes");
  return v;
}

const VideoRecord& must_find(const Dataset& ds, const std::string& id) {
  const VideoRecord* rec = ds.find(id);
  if (!rec) throw ValidationError("video '" + id + "' not in dataset '" + ds.name + "'");
  return *rec;
}

// ---------------------------------------------------------------------------
// dataset synth / dataset validate
// ---------------------------------------------------------------------------

void cmd_dataset_synth(const std::string& out, int videos, std::int64_t frames, int users,
                       int objects_dim, int places_dim, const RunConfig& cfg) {
  SynthConfig synth;
  synth.n_videos = videos;
  synth.n_frames = frames;
  synth.n_users = users;
  synth.dims = {{Source::objects, objects_dim}, {Source::places, places_dim}};
  synth.seed = cfg.seed;
  generate_synthetic_dataset(out, synth);
  std::cout << "wrote " << videos << " synthetic videos to " << out << "\n";
}

int cmd_dataset_validate(const std::string& root) {
  const Dataset ds = load_dataset(root);  // throws on structural problems
  std::size_t count = 0;
  for (const auto& video : ds.videos) {
    for (const auto& v : validate_record(video)) {
      std::cout << v.str() << "\n";
      ++count;
    }
  }
  if (count > 0) {
    std::cout << count << " violation(s)\n";
    return 2;
  }
  std::cout << "ok: " << ds.videos.size() << " video(s) valid\n";
  return 0;
}

// ---------------------------------------------------------------------------
// splits generate / splits audit
// ---------------------------------------------------------------------------

void cmd_splits_generate(const std::string& dataset_dir, const std::string& out, int k,
                         const RunConfig& cfg) {
  const Dataset ds = load_dataset(dataset_dir);
  const SplitSet splits = generate_splits(ds.keys(), k, cfg.seed);
  save_splits(out, splits);
  std::cout << "wrote " << k << " folds over " << ds.videos.size() << " videos to " << out << "\n";
}

int cmd_splits_audit(const std::string& splits_file, const std::string& dataset_dir,
                     const std::string& out_json) {
  const SplitSet splits = load_splits(splits_file);

  std::vector<std::string> universe;
  if (!dataset_dir.empty()) {
    universe = load_dataset(dataset_dir).keys();
  } else {
    // no dataset: the universe is every key mentioned anywhere in the file
    std::set<std::string> keys;
    for (const auto& fold : splits.folds) {
      keys.insert(fold.train_keys.begin(), fold.train_keys.end());
      keys.insert(fold.test_keys.begin(), fold.test_keys.end());
    }
    universe.assign(keys.begin(), keys.end());
  }

  const AuditReport report = audit_splits(splits, universe);
  std::cout << audit_table(report);
  if (!out_json.empty()) write_text(out_json, audit_json(report));
  return (report.missing_from_test.empty() && report.duplicated_in_test.empty()) ? 0 : 2;
}

// ---------------------------------------------------------------------------
// train / score / summarize / evaluate / report
// ---------------------------------------------------------------------------

void cmd_train(const std::string& dataset_dir, const std::string& splits_file,
               const std::string& out, const RunConfig& cfg) {
  const Dataset ds = load_dataset(dataset_dir);
  const SplitSet splits = load_splits(splits_file);
  const auto dims = dataset_dims(ds);
  const ScorerConfig base_sc = scorer_config_from(cfg, dims);
  const TrainConfig base_tc = train_config_from(cfg);

  // validate-then-act: every fold's train set must resolve before any output
  for (std::size_t f = 0; f < splits.folds.size(); ++f)
    for (const auto& id : splits.folds[f].train_keys) must_find(ds, id);

  fs::create_directories(out);
  echo_run_config(out, cfg);

  std::atomic<std::size_t> next{0};
  std::vector<std::string> failures(splits.folds.size());
  auto worker = [&]() {
    for (;;) {
      const std::size_t f = next.fetch_add(1);
      if (f >= splits.folds.size()) return;
      try {
        std::vector<const VideoRecord*> videos;
        for (const auto& id : splits.folds[f].train_keys) videos.push_back(&must_find(ds, id));
        ScorerConfig sc = base_sc;
        TrainConfig tc = base_tc;
        sc.seed = cfg.seed + f;  // fold-specific initialization
        tc.seed = cfg.seed + f;
        const TrainResult result = train(videos, sc, tc);

        const fs::path fdir = fs::path(out) / fold_dir(f);
        fs::create_directories(fdir);
        save_checkpoint(fdir / "checkpoint.bin", result.scorer, cfg.m);
        write_text(fdir / "history.csv", history_csv(result.history));
      } catch (const std::exception& e) {
        failures[f] = e.what();
      }
    }
  };

  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t f = 0; f < failures.size(); ++f)
    if (!failures[f].empty())
      throw std::runtime_error("fold " + std::to_string(f) + ": " + failures[f]);
  std::cout << "trained " << splits.folds.size() << " fold(s) into " << out << "\n";
}

void cmd_score(const std::string& dataset_dir, const std::string& splits_file,
               const std::string& checkpoints_dir, const std::string& out, const RunConfig& cfg) {
  const Dataset ds = load_dataset(dataset_dir);
  const SplitSet splits = load_splits(splits_file);

  // load all checkpoints and check every test video's streams before writing
  std::vector<Checkpoint> checkpoints;
  for (std::size_t f = 0; f < splits.folds.size(); ++f) {
    const fs::path path = fs::path(checkpoints_dir) / fold_dir(f) / "checkpoint.bin";
    if (!fs::exists(path)) throw IoError("missing checkpoint: " + path.string());
    checkpoints.push_back(load_checkpoint(path));
    const auto& config = checkpoints.back().params.config;
    for (const auto& id : splits.folds[f].test_keys) {
      const VideoRecord& rec = must_find(ds, id);
      for (const Source src : config.required_sources()) {
        const auto it = rec.streams.find(src);
        if (it == rec.streams.end())
          throw ValidationError("video '" + id + "' has no stream " + to_string(src) +
                                " required by fold " + std::to_string(f));
        if (it->second.dim() != config.dims.at(src))
          throw ValidationError("video '" + id + "' stream " + to_string(src) + " dim " +
                                std::to_string(it->second.dim()) + " != checkpoint dim " +
                                std::to_string(config.dims.at(src)));
      }
    }
  }

  fs::create_directories(out);
  echo_run_config(out, cfg);

  ordered_json index;
  index["dataset"] = ds.name;
  index["folds"] = ordered_json::array();
  for (std::size_t f = 0; f < splits.folds.size(); ++f) {
    const fs::path fdir = fs::path(out) / fold_dir(f);
    fs::create_directories(fdir);
    ordered_json jfold;
    jfold["fold"] = f;
    jfold["videos"] = ordered_json::array();
    for (const auto& id : splits.folds[f].test_keys) {
      const VideoRecord& rec = must_find(ds, id);
      const Eigen::VectorXd p = scorer_forward(rec, checkpoints[f].params, checkpoints[f].m);
      const std::string rel = fold_dir(f) + "/" + id + ".scores.f32";
      write_f32(fs::path(out) / rel, p);
      jfold["videos"].push_back({{"id", id}, {"path", rel}, {"n_steps", rec.n_steps()}});
    }
    index["folds"].push_back(std::move(jfold));
  }
  write_text(fs::path(out) / "scores.json", index.dump(2) + "\n");
  std::cout << "scored " << splits.folds.size() << " fold(s) into " << out << "\n";
}

void cmd_summarize(const std::string& dataset_dir, const std::string& scores_dir,
                   const std::string& out, const RunConfig& cfg) {
  const Dataset ds = load_dataset(dataset_dir);

  const fs::path index_path = fs::path(scores_dir) / "scores.json";
  std::ifstream in(index_path);
  if (!in) throw IoError("cannot open scores index: " + index_path.string());
  ordered_json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed scores index " + index_path.string() + ": " + e.what());
  }

  // resolve every score file against the dataset before writing anything
  struct Item {
    std::size_t fold;
    std::string id;
    std::string scores_rel;
    Eigen::VectorXd p;
  };
  std::vector<Item> items;
  for (const auto& jfold : index.at("folds")) {
    const auto f = jfold.at("fold").get<std::size_t>();
    for (const auto& jv : jfold.at("videos")) {
      Item item;
      item.fold = f;
      item.id = jv.at("id").get<std::string>();
      const VideoRecord& rec = must_find(ds, item.id);
      const auto n_steps = jv.at("n_steps").get<std::size_t>();
      if (n_steps != static_cast<std::size_t>(rec.n_steps()))
        throw ValidationError("scores for '" + item.id + "' expect " + std::to_string(n_steps) +
                              " steps, dataset has " + std::to_string(rec.n_steps()));
      item.scores_rel = jv.at("path").get<std::string>();
      item.p = read_f32(fs::path(scores_dir) / item.scores_rel, n_steps);
      items.push_back(std::move(item));
    }
  }

  fs::create_directories(out);
  echo_run_config(out, cfg);

  const std::optional<int> kts_target =
      cfg.kts_segments > 0 ? std::optional<int>(cfg.kts_segments) : std::nullopt;

  std::size_t count = 0;
  for (const auto& item : items) {
    const std::size_t f = item.fold;
    const std::string& id = item.id;
    const std::string& scores_rel = item.scores_rel;
    const VideoRecord& rec = must_find(ds, id);
    fs::create_directories(fs::path(out) / fold_dir(f));

    const MachineSummary summary =
        summarize(rec, item.p, cfg.budget_fraction, kts_target, cfg.force_kts);
    const std::string mask_rel = fold_dir(f) + "/" + id + ".mask.u8";
    write_u8(fs::path(out) / mask_rel, summary.mask);

    ordered_json sidecar;
    sidecar["video_id"] = id;
    sidecar["fold"] = f;
    sidecar["budget_fraction"] = cfg.budget_fraction;
    sidecar["budget_frames"] = summary.budget_frames;
    sidecar["selected_shots"] = summary.selected_shots;
    sidecar["segments"] = ordered_json::array();
    for (const auto& [s, e] : summary.boundaries.segments) sidecar["segments"].push_back({s, e});
    sidecar["segmentation"] = summary.used_provided_change_points ? "change_points" : "kts";
    sidecar["scores"] = scores_rel;
    sidecar["mask"] = mask_rel;
    write_text(fs::path(out) / (fold_dir(f) + "/" + id + ".json"), sidecar.dump(2) + "\n");
    ++count;
  }
  std::cout << "summarized " << count << " video(s) into " << out << "\n";
}

void cmd_evaluate(const std::string& dataset_dir, const std::string& splits_file,
                  const std::string& summaries_dir, const std::string& out, const RunConfig& cfg) {
  const Dataset ds = load_dataset(dataset_dir);
  const SplitSet splits = load_splits(splits_file);
  const AggregationMode mode = mode_from_string(cfg.mode);

  // labels for the report row come from the configured strategy
  ScorerConfig sc;
  sc.strategy = strategy_from_string(cfg.strategy);
  sc.single_src = source_from_string(cfg.source);
  sc.late_space = late_space_from_string(cfg.late_fusion_space);
  const auto [features, fusion] = ablation_labels(sc);

  const EvalResult result = aggregate_evaluations(
      splits,
      [&](std::size_t fold, const std::string& id) {
        const VideoRecord& rec = must_find(ds, id);
        const auto mask = read_u8(
            fs::path(summaries_dir) / (fold_dir(fold) + "/" + id + ".mask.u8"),
            static_cast<std::size_t>(rec.n_frames));
        return evaluate_video(mask, rec.references, mode);
      },
      mode);

  fs::create_directories(out);
  echo_run_config(out, cfg);

  EvalSummary summary;
  summary.dataset = ds.name;
  summary.features = features;
  summary.fusion = fusion;
  summary.split_label = cfg.split_label;
  summary.mode = mode;
  summary.per_fold = result.per_fold;
  summary.overall = result.overall;
  write_text(fs::path(out) / "evaluation.json", eval_summary_to_json(summary, result));

  std::ostringstream csv;
  csv << "video_id,fold,per_user_f1_mean,aggregated,mode\n";
  char buf[160];
  for (const auto& fv : result.per_video) {
    double mean = 0.0;
    for (double v : fv.eval.per_user_f1) mean += v;
    if (!fv.eval.per_user_f1.empty()) mean /= static_cast<double>(fv.eval.per_user_f1.size());
    std::snprintf(buf, sizeof(buf), "%s,%zu,%.10g,%.10g,%s\n", fv.video_id.c_str(), fv.fold, mean,
                  fv.eval.aggregated, to_string(mode));
    csv << buf;
  }
  write_text(fs::path(out) / "evaluation.csv", csv.str());

  std::snprintf(buf, sizeof(buf), "overall %s F1: %.4f\n", to_string(mode), result.overall);
  std::cout << buf;
}

void cmd_report(const std::vector<std::string>& inputs, const std::string& out,
                const RunConfig& cfg) {
  std::vector<EvalSummary> runs;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open evaluation JSON: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    runs.push_back(eval_summary_from_json(text));
  }

  fs::create_directories(out);
  echo_run_config(out, cfg);

  std::ostringstream md;
  md << "# Evaluation report\n\n## Ablation\n\n"
     << ablation_markdown(runs) << "\n## Cross-validation folds\n\n" << folds_markdown(runs);
  write_text(fs::path(out) / "report.md", md.str());
  write_text(fs::path(out) / "ablation.csv", ablation_csv(runs));
  write_text(fs::path(out) / "folds.csv", folds_csv(runs));
  std::cout << "report over " << runs.size() << " evaluation(s) written to " << out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-source chunk and stride fusion video summarization toolkit"};
  app.require_subcommand(1);
  int exit_code = 0;

  // ---- dataset ----
  auto ctx_synth = std::make_shared<CommandContext>();
  ctx_synth->cfg.seed = 7;
  auto ctx_validate = std::make_shared<CommandContext>();
  auto* dataset = app.add_subcommand("dataset", "dataset tools");
  dataset->require_subcommand(1);
  {
    auto* synth = dataset->add_subcommand("synth", "generate a deterministic synthetic dataset");
    auto out = std::make_shared<std::string>();
    auto videos = std::make_shared<int>(4);
    auto frames = std::make_shared<std::int64_t>(300);
    auto users = std::make_shared<int>(3);
    auto objects_dim = std::make_shared<int>(8);
    auto places_dim = std::make_shared<int>(12);
    synth->add_option("--out", *out, "output directory")->required();
    synth->add_option("--videos", *videos, "number of videos");
    synth->add_option("--frames", *frames, "frames per video");
    synth->add_option("--users", *users, "reference users per video");
    synth->add_option("--objects-dim", *objects_dim, "objects feature dim");
    synth->add_option("--places-dim", *places_dim, "places feature dim");
    add_common_options(synth, *ctx_synth);
    synth->callback([=]() {
      ctx_synth->finalize();
      cmd_dataset_synth(*out, *videos, *frames, *users, *objects_dim, *places_dim, ctx_synth->cfg);
    });

    auto* validate = dataset->add_subcommand("validate", "check every record invariant");
    auto root = std::make_shared<std::string>();
    validate->add_option("dir", *root, "dataset directory")->required();
    validate->callback([=, &exit_code]() { exit_code = cmd_dataset_validate(*root); });
  }

  // ---- splits ----
  auto ctx_sgen = std::make_shared<CommandContext>();
  auto* splits = app.add_subcommand("splits", "cross-validation split tools");
  splits->require_subcommand(1);
  {
    auto* gen = splits->add_subcommand("generate", "non-overlapping k-fold splits");
    auto dataset_dir = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto k = std::make_shared<int>(5);
    gen->add_option("--dataset", *dataset_dir, "dataset directory")->required();
    gen->add_option("--out", *out, "output split file")->required();
    gen->add_option("--k", *k, "fold count");
    add_common_options(gen, *ctx_sgen);
    gen->callback([=]() {
      ctx_sgen->finalize();
      cmd_splits_generate(*dataset_dir, *out, *k, ctx_sgen->cfg);
    });

    auto* audit = splits->add_subcommand("audit", "test-coverage audit of a split file");
    auto file = std::make_shared<std::string>();
    auto dataset_dir2 = std::make_shared<std::string>();
    auto out_json = std::make_shared<std::string>();
    audit->add_option("file", *file, "split file to audit")->required();
    audit->add_option("--dataset", *dataset_dir2, "dataset directory supplying the key universe");
    audit->add_option("--out", *out_json, "write the audit report JSON here");
    audit->callback(
        [=, &exit_code]() { exit_code = cmd_splits_audit(*file, *dataset_dir2, *out_json); });
  }

  // ---- train ----
  {
    auto ctx = std::make_shared<CommandContext>();
    auto* train_cmd = app.add_subcommand("train", "train one scorer per fold");
    auto dataset_dir = std::make_shared<std::string>();
    auto splits_file = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    train_cmd->add_option("--dataset", *dataset_dir, "dataset directory")->required();
    train_cmd->add_option("--splits", *splits_file, "split file")->required();
    train_cmd->add_option("--out", *out, "output directory")->required();
    add_common_options(train_cmd, *ctx);
    add_model_options(train_cmd, *ctx);
    add_train_options(train_cmd, *ctx);
    train_cmd->callback([=]() {
      ctx->finalize();
      cmd_train(*dataset_dir, *splits_file, *out, ctx->cfg);
    });
  }

  // ---- score ----
  {
    auto ctx = std::make_shared<CommandContext>();
    auto* score = app.add_subcommand("score", "write per-step probabilities for test videos");
    auto dataset_dir = std::make_shared<std::string>();
    auto splits_file = std::make_shared<std::string>();
    auto checkpoints = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    score->add_option("--dataset", *dataset_dir, "dataset directory")->required();
    score->add_option("--splits", *splits_file, "split file")->required();
    score->add_option("--checkpoints", *checkpoints, "training output directory")->required();
    score->add_option("--out", *out, "output directory")->required();
    add_common_options(score, *ctx);
    score->callback([=]() {
      ctx->finalize();
      cmd_score(*dataset_dir, *splits_file, *checkpoints, *out, ctx->cfg);
    });
  }

  // ---- summarize ----
  {
    auto ctx = std::make_shared<CommandContext>();
    auto* summ = app.add_subcommand("summarize", "keyshot selection from scores");
    auto dataset_dir = std::make_shared<std::string>();
    auto scores_dir = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    summ->add_option("--dataset", *dataset_dir, "dataset directory")->required();
    summ->add_option("--scores", *scores_dir, "score output directory")->required();
    summ->add_option("--out", *out, "output directory")->required();
    auto& cfg = ctx->cfg;
    ctx->binder.bind(summ->add_option("--budget", cfg.budget_fraction, "summary length budget"),
                     "budget_fraction", cfg.budget_fraction);
    ctx->binder.bind(
        summ->add_option("--kts-segments", cfg.kts_segments, "KTS segment count (0 = auto)"),
        "kts_segments", cfg.kts_segments);
    ctx->binder.bind(summ->add_flag("--force-kts", cfg.force_kts,
                                    "segment with KTS even when change points are provided"),
                     "force_kts", cfg.force_kts);
    add_common_options(summ, *ctx);
    summ->callback([=]() {
      ctx->finalize();
      cmd_summarize(*dataset_dir, *scores_dir, *out, ctx->cfg);
    });
  }

  // ---- evaluate ----
  {
    auto ctx = std::make_shared<CommandContext>();
    auto* eval = app.add_subcommand("evaluate", "multi-user F1 over the folds");
    auto dataset_dir = std::make_shared<std::string>();
    auto splits_file = std::make_shared<std::string>();
    auto summaries = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    eval->add_option("--dataset", *dataset_dir, "dataset directory")->required();
    eval->add_option("--splits", *splits_file, "split file")->required();
    eval->add_option("--summaries", *summaries, "summary output directory")->required();
    eval->add_option("--out", *out, "output directory")->required();
    auto& cfg = ctx->cfg;
    ctx->binder.bind(eval->add_option("--mode", cfg.mode, "per-user aggregation: avg|max"), "mode",
                     cfg.mode);
    ctx->binder.bind(eval->add_option("--split-label", cfg.split_label,
                                      "column label for the report (e.g. F1*)"),
                     "split_label", cfg.split_label);
    add_common_options(eval, *ctx);
    add_model_options(eval, *ctx);
    eval->callback([=]() {
      ctx->finalize();
      cmd_evaluate(*dataset_dir, *splits_file, *summaries, *out, ctx->cfg);
    });
  }

  // ---- report ----
  {
    auto ctx = std::make_shared<CommandContext>();
    auto* report = app.add_subcommand("report", "render ablation and fold tables");
    auto inputs = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    report->add_option("inputs", *inputs, "evaluation JSON files")->required();
    report->add_option("--out", *out, "output directory")->required();
    report->callback([=]() {
      ctx->finalize();
      cmd_report(*inputs, *out, ctx->cfg);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
