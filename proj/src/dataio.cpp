#include "mcsf/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mcsf/rng.hpp"

namespace mcsf {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

const char* to_string(Source s) {
  return s == Source::objects ? "objects" : "places";
}

Source source_from_string(const std::string& s) {
  if (s == "objects") return Source::objects;
  if (s == "places") return Source::places;
  throw ValidationError("unknown source tag '" + s + "' (expected 'objects' or 'places')");
}

const VideoRecord* Dataset::find(const std::string& id) const {
  for (const auto& v : videos)
    if (v.id == id) return &v;
  return nullptr;
}

std::vector<std::string> Dataset::keys() const {
  std::vector<std::string> out;
  out.reserve(videos.size());
  for (const auto& v : videos) out.push_back(v.id);
  return out;
}

std::string Violation::str() const {
  std::string out = video_id.empty() ? std::string() : video_id + ": ";
  out += field + ": " + message;
  return out;
}

std::vector<Violation> validate_record(const VideoRecord& r) {
  std::vector<Violation> out;
  auto add = [&](const std::string& field, const std::string& msg) {
    out.push_back({r.id, field, msg});
  };

  if (r.n_frames <= 0) add("n_frames", "must be positive");

  // picks
  if (r.picks.empty()) {
    add("picks", "empty");
  } else {
    if (r.picks.front() < 0) add("picks", "picks[0] must be >= 0");
    for (std::size_t i = 1; i < r.picks.size(); ++i) {
      if (r.picks[i] <= r.picks[i - 1]) {
        add("picks", "picks not strictly increasing at index " + std::to_string(i));
        break;
      }
    }
    if (r.picks.back() >= r.n_frames)
      add("picks", "picks[last] must be < n_frames");
  }

  // streams
  if (r.streams.empty()) add("streams", "no streams");
  const int n_steps = r.n_steps();
  for (const auto& [tag, stream] : r.streams) {
    const std::string field = std::string("streams.") + to_string(tag);
    if (stream.n_steps() < 2) add(field, "n_steps must be >= 2");
    if (stream.dim() < 1) add(field, "dim must be positive");
    if (!stream.values.allFinite()) add(field, "non-finite values");
  }
  {
    // All streams must share n_steps == |picks|; name every mismatched pair.
    std::vector<std::pair<Source, int>> lens;
    for (const auto& [tag, stream] : r.streams) lens.emplace_back(tag, stream.n_steps());
    for (std::size_t i = 0; i < lens.size(); ++i)
      for (std::size_t j = i + 1; j < lens.size(); ++j)
        if (lens[i].second != lens[j].second)
          add("streams", std::string("stream n_steps mismatch: ") + to_string(lens[i].first) +
                             "=" + std::to_string(lens[i].second) + " vs " + to_string(lens[j].first) +
                             "=" + std::to_string(lens[j].second));
    for (const auto& [tag, len] : lens)
      if (!r.picks.empty() && len != n_steps)
        add(std::string("streams.") + to_string(tag),
            "n_steps " + std::to_string(len) + " != picks length " + std::to_string(n_steps));
  }

  // references
  if (r.references.n_users() < 1) add("users", "n_users must be >= 1");
  for (int u = 0; u < r.references.n_users(); ++u) {
    const auto& mask = r.references.masks[u];
    const std::string field = "users[" + std::to_string(u) + "]";
    if (static_cast<std::int64_t>(mask.size()) != r.n_frames) {
      add(field, "mask length " + std::to_string(mask.size()) + " != n_frames " +
                     std::to_string(r.n_frames));
    }
    for (std::size_t f = 0; f < mask.size(); ++f) {
      if (mask[f] > 1) {
        add(field, "mask value " + std::to_string(int(mask[f])) + " at frame " +
                       std::to_string(f) + " (must be 0 or 1)");
        break;
      }
    }
  }

  // change points
  if (r.change_points) {
    const auto& cps = *r.change_points;
    if (cps.empty()) {
      add("change_points", "present but empty");
    } else {
      std::int64_t expect = 0;
      bool ok = true;
      for (const auto& [s, e] : cps) {
        if (s != expect || e <= s) {
          ok = false;
          break;
        }
        expect = e;
      }
      if (ok && expect != r.n_frames) ok = false;
      if (!ok)
        add("change_points", "segments must form a contiguous non-empty partition of [0, n_frames)");
    }
  }

  return out;
}

namespace {

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const fs::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("write failed: " + path.string());
}

// Raw little-endian f32, row-major (step-major), no header.
Eigen::MatrixXd load_feature_file(const fs::path& path, int n_steps, int dim) {
  const auto bytes = read_file_bytes(path);
  const std::size_t expected = std::size_t(n_steps) * std::size_t(dim) * 4;
  if (bytes.size() != expected) {
    throw ValidationError("shape mismatch in " + path.string() + ": expected " +
                          std::to_string(expected) + " bytes (" + std::to_string(n_steps) + "x" +
                          std::to_string(dim) + " f32), found " + std::to_string(bytes.size()));
  }
  Eigen::MatrixXd out(n_steps, dim);
  const float* f = reinterpret_cast<const float*>(bytes.data());
  for (int t = 0; t < n_steps; ++t)
    for (int j = 0; j < dim; ++j) out(t, j) = static_cast<double>(f[std::size_t(t) * dim + j]);
  return out;
}

void save_feature_file(const fs::path& path, const Eigen::MatrixXd& values) {
  std::vector<float> buf(std::size_t(values.rows()) * std::size_t(values.cols()));
  for (Eigen::Index t = 0; t < values.rows(); ++t)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      buf[std::size_t(t) * values.cols() + j] = static_cast<float>(values(t, j));
  write_file_bytes(path, buf.data(), buf.size() * 4);
}

ReferenceSummaries load_users_file(const fs::path& path, int n_users, std::int64_t n_frames) {
  const auto bytes = read_file_bytes(path);
  const std::size_t expected = std::size_t(n_users) * std::size_t(n_frames);
  if (bytes.size() != expected) {
    throw ValidationError("shape mismatch in " + path.string() + ": expected " +
                          std::to_string(expected) + " bytes (" + std::to_string(n_users) + "x" +
                          std::to_string(n_frames) + " u8), found " + std::to_string(bytes.size()));
  }
  ReferenceSummaries refs;
  refs.masks.resize(n_users);
  for (int u = 0; u < n_users; ++u)
    refs.masks[u].assign(bytes.begin() + std::size_t(u) * n_frames,
                         bytes.begin() + std::size_t(u + 1) * n_frames);
  return refs;
}

std::string stream_filename(const std::string& id, Source tag) {
  return id + "." + to_string(tag) + ".f32";
}

}  // namespace

Dataset load_dataset(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path.string());

  ordered_json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  Dataset ds;
  try {
    ds.name = manifest.at("dataset_name").get<std::string>();
    std::set<std::string> seen_ids;
    for (const auto& jv : manifest.at("videos")) {
      VideoRecord rec;
      rec.id = jv.at("id").get<std::string>();
      if (!seen_ids.insert(rec.id).second)
        throw ValidationError("duplicate video id '" + rec.id + "' in manifest");
      rec.n_frames = jv.at("n_frames").get<std::int64_t>();
      rec.picks = jv.at("picks").get<std::vector<std::int64_t>>();
      for (const auto& [tag_str, js] : jv.at("streams").items()) {
        SourceStream stream;
        stream.tag = source_from_string(tag_str);
        const int dim = js.at("dim").get<int>();
        stream.values = load_feature_file(root / js.at("path").get<std::string>(),
                                          rec.n_steps(), dim);
        rec.streams.emplace(stream.tag, std::move(stream));
      }
      const auto& ju = jv.at("users");
      rec.references = load_users_file(root / ju.at("path").get<std::string>(),
                                       ju.at("n_users").get<int>(), rec.n_frames);
      if (jv.contains("change_points") && !jv.at("change_points").is_null()) {
        std::vector<FrameSpan> cps;
        for (const auto& jcp : jv.at("change_points"))
          cps.emplace_back(jcp.at(0).get<std::int64_t>(), jcp.at(1).get<std::int64_t>());
        rec.change_points = std::move(cps);
      }

      const auto violations = validate_record(rec);
      if (!violations.empty()) {
        std::ostringstream msg;
        msg << "invalid record '" << rec.id << "':";
        for (const auto& v : violations) msg << "\n  " << v.str();
        throw ValidationError(msg.str());
      }
      ds.videos.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  return ds;
}

void save_dataset(const fs::path& root, const Dataset& dataset) {
  fs::create_directories(root);
  ordered_json manifest;
  manifest["dataset_name"] = dataset.name;
  manifest["videos"] = ordered_json::array();

  for (const auto& rec : dataset.videos) {
    ordered_json jv;
    jv["id"] = rec.id;
    jv["n_frames"] = rec.n_frames;
    jv["picks"] = rec.picks;
    jv["streams"] = ordered_json::object();
    for (const auto& [tag, stream] : rec.streams) {
      const std::string fname = stream_filename(rec.id, tag);
      save_feature_file(root / fname, stream.values);
      jv["streams"][to_string(tag)] = {{"path", fname}, {"dim", stream.dim()}};
    }
    const std::string users_fname = rec.id + ".users.u8";
    {
      std::vector<std::uint8_t> buf;
      buf.reserve(std::size_t(rec.references.n_users()) * rec.n_frames);
      for (const auto& mask : rec.references.masks)
        buf.insert(buf.end(), mask.begin(), mask.end());
      write_file_bytes(root / users_fname, buf.data(), buf.size());
    }
    jv["users"] = {{"path", users_fname}, {"n_users", rec.references.n_users()}};
    if (rec.change_points) {
      ordered_json jcps = ordered_json::array();
      for (const auto& [s, e] : *rec.change_points) jcps.push_back({s, e});
      jv["change_points"] = jcps;
    } else {
      jv["change_points"] = nullptr;
    }
    manifest["videos"].push_back(std::move(jv));
  }

  std::ofstream out(root / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + (root / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

namespace {

// Picks for 2 steps/s subsampling of a 30 fps video: every 15th frame.
std::vector<std::int64_t> synthetic_picks(std::int64_t n_frames) {
  std::vector<std::int64_t> picks;
  for (std::int64_t f = 0; f < n_frames; f += 15) picks.push_back(f);
  return picks;
}

}  // namespace

Dataset generate_synthetic_dataset(const fs::path& root, const SynthConfig& config) {
  if (config.n_videos < 1) throw std::invalid_argument("n_videos must be positive");
  if (config.n_frames < 30) throw std::invalid_argument("n_frames must be >= 30");
  if (config.n_users < 1) throw std::invalid_argument("n_users must be positive");
  for (const auto& [tag, dim] : config.dims)
    if (dim < 2)
      throw std::invalid_argument(std::string("dim of source '") + to_string(tag) +
                                  "' must be >= 2");

  Rng rng(config.seed);
  Dataset ds;
  ds.name = "synthetic";

  for (int v = 0; v < config.n_videos; ++v) {
    VideoRecord rec;
    rec.id = "video_" + std::to_string(v);
    rec.n_frames = config.n_frames;
    rec.picks = synthetic_picks(config.n_frames);
    const int n_steps = rec.n_steps();

    // Partition frames into 4..8 segments of roughly equal length, jittered.
    const int n_segments = static_cast<int>(rng.uniform_int(4, 8));
    std::vector<FrameSpan> cps;
    {
      std::vector<std::int64_t> bounds = {0};
      for (int s = 1; s < n_segments; ++s) {
        const double base = double(s) * double(config.n_frames) / n_segments;
        const double jitter = rng.uniform(-0.25, 0.25) * double(config.n_frames) / n_segments;
        std::int64_t b = static_cast<std::int64_t>(std::llround(base + jitter));
        b = std::clamp<std::int64_t>(b, bounds.back() + 1, config.n_frames - (n_segments - s));
        bounds.push_back(b);
      }
      bounds.push_back(config.n_frames);
      for (int s = 0; s < n_segments; ++s) cps.emplace_back(bounds[s], bounds[s + 1]);
    }
    rec.change_points = cps;

    auto segment_of_frame = [&](std::int64_t f) {
      for (std::size_t s = 0; s < cps.size(); ++s)
        if (f >= cps[s].first && f < cps[s].second) return static_cast<int>(s);
      return static_cast<int>(cps.size()) - 1;
    };

    // Two planted event segments attract user annotations.
    const int event_a = static_cast<int>(rng.uniform_int(0, n_segments - 1));
    int event_b = static_cast<int>(rng.uniform_int(0, n_segments - 2));
    if (event_b >= event_a) ++event_b;

    // Per-source piecewise-constant means plus bounded noise.
    for (const auto& [tag, dim] : config.dims) {
      std::vector<Eigen::VectorXd> means(n_segments);
      for (int s = 0; s < n_segments; ++s) {
        means[s] = Eigen::VectorXd(dim);
        for (int j = 0; j < dim; ++j) means[s](j) = rng.uniform(0.0, 1.0);
      }
      SourceStream stream;
      stream.tag = tag;
      stream.values.resize(n_steps, dim);
      for (int t = 0; t < n_steps; ++t) {
        const int s = segment_of_frame(rec.picks[t]);
        for (int j = 0; j < dim; ++j)
          stream.values(t, j) = means[s](j) + rng.uniform(-0.05, 0.05);
      }
      rec.streams.emplace(tag, std::move(stream));
    }

    // User masks: contiguous blocks, ~70% of the budget inside the two event
    // segments, remainder spread over the others. Exact per-user budget keeps
    // every mask fraction inside [0.12, 0.18].
    rec.references.masks.resize(config.n_users);
    for (int u = 0; u < config.n_users; ++u) {
      auto& mask = rec.references.masks[u];
      mask.assign(config.n_frames, 0);
      const double frac = rng.uniform(0.12, 0.18);
      std::int64_t budget = static_cast<std::int64_t>(std::llround(frac * config.n_frames));
      budget = std::clamp<std::int64_t>(budget, (config.n_frames * 12 + 99) / 100,
                                        config.n_frames * 18 / 100);

      auto mark_block = [&](int seg, std::int64_t want) -> std::int64_t {
        const auto [s, e] = cps[seg];
        const std::int64_t len = e - s;
        const std::int64_t take = std::min(want, len);
        if (take <= 0) return 0;
        const std::int64_t start = s + rng.uniform_int(0, len - take);
        std::int64_t marked = 0;
        for (std::int64_t f = start; f < start + take; ++f) {
          if (!mask[f]) {
            mask[f] = 1;
            ++marked;
          }
        }
        return marked;
      };

      std::int64_t remaining = budget;
      remaining -= mark_block(event_a, (budget * 7) / 20);
      remaining -= mark_block(event_b, (budget * 7) / 20);
      int guard = 0;
      while (remaining > 0 && guard++ < 64) {
        const int seg = static_cast<int>(rng.uniform_int(0, n_segments - 1));
        remaining -= mark_block(seg, remaining);
      }
      // Top up frame-by-frame if blocks kept colliding.
      for (std::int64_t f = 0; remaining > 0 && f < config.n_frames; ++f) {
        if (!mask[f]) {
          mask[f] = 1;
          --remaining;
        }
      }
    }

    ds.videos.push_back(std::move(rec));
  }

  save_dataset(root, ds);
  return ds;
}

}  // namespace mcsf
