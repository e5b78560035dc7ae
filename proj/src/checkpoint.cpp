#include "mcsf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

namespace mcsf {

namespace {

constexpr char kMagic[8] = {'M', 'C', 'S', 'F', 'C', 'K', 'P', 'T'};
using ordered_json = nlohmann::ordered_json;

ordered_json config_to_json(const ScorerConfig& c, int m) {
  ordered_json j;
  j["strategy"] = to_string(c.strategy);
  j["source"] = to_string(c.single_src);
  j["dims"] = ordered_json::object();
  for (const auto& [tag, dim] : c.dims) j["dims"][to_string(tag)] = dim;
  j["hidden"] = c.hidden;
  j["fused_dim"] = c.fused_dim;
  j["deltas"] = c.deltas;
  j["late_fusion_space"] = to_string(c.late_space);
  j["seed"] = c.seed;
  j["m"] = m;
  return j;
}

ScorerConfig config_from_json(const ordered_json& j) {
  ScorerConfig c;
  c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  c.single_src = source_from_string(j.at("source").get<std::string>());
  for (const auto& [tag, dim] : j.at("dims").items())
    c.dims[source_from_string(tag)] = dim.get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.fused_dim = j.at("fused_dim").get<int>();
  c.deltas = j.at("deltas").get<std::vector<int>>();
  c.late_space = late_space_from_string(j.at("late_fusion_space").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ScorerParams& params, int m) {
  ScorerParams copy = params;  // collect_tensors needs mutable access
  const auto tensors = collect_tensors(copy);

  ordered_json header = config_to_json(params.config, m);
  header["tensors"] = ordered_json::array();
  for (const auto& t : tensors)
    header["tensors"].push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t n = static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

  std::vector<float> buf;
  for (const auto& t : tensors) {
    buf.resize(static_cast<std::size_t>(t.size()));
    // column-major storage written out row-major
    for (Eigen::Index r = 0; r < t.rows; ++r)
      for (Eigen::Index c = 0; c < t.cols; ++c)
        buf[static_cast<std::size_t>(r) * t.cols + c] = static_cast<float>(t.data[c * t.rows + r]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * 4));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());

  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw ValidationError("not a checkpoint file: " + path.string());
  std::uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 4);
  std::string header_str(n, '\0');
  in.read(header_str.data(), n);
  if (!in) throw ValidationError("truncated checkpoint header: " + path.string());

  ordered_json header;
  try {
    header = ordered_json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }

  Checkpoint ck;
  ck.params = init_params(config_from_json(header));  // builds the right shapes
  ck.m = header.at("m").get<int>();

  const auto tensors = collect_tensors(ck.params);
  const auto& table = header.at("tensors");
  if (table.size() != tensors.size())
    throw ValidationError("checkpoint tensor table size mismatch in " + path.string());

  std::vector<float> buf;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    const auto& entry = table[i];
    if (entry.at("name").get<std::string>() != t.name ||
        entry.at("rows").get<Eigen::Index>() != t.rows ||
        entry.at("cols").get<Eigen::Index>() != t.cols)
      throw ValidationError("checkpoint tensor '" + t.name + "' layout mismatch in " +
                            path.string());
    buf.resize(static_cast<std::size_t>(t.size()));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!in) throw ValidationError("truncated checkpoint payload in " + path.string());
    for (Eigen::Index r = 0; r < t.rows; ++r)
      for (Eigen::Index c = 0; c < t.cols; ++c)
        t.data[c * t.rows + r] = static_cast<double>(buf[static_cast<std::size_t>(r) * t.cols + c]);
  }
  return ck;
}

}  // namespace mcsf
