#include "scgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace scgan {
namespace {

constexpr char kMagic[8] = {'S', 'C', 'G', 'A', 'N', 'C', 'K', 'P'};

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  static_assert(std::endian::native == std::endian::little);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

nlohmann::json spec_to_json(const NetworkSpec& spec) {
  return {{"kind", to_string(spec.kind)},          {"in_channels", spec.in_channels},
          {"out_channels", spec.out_channels},     {"base_filters", spec.base_filters},
          {"depth", spec.depth},                   {"norm", to_string(spec.norm)}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.kind = parse_network_kind(j.at("kind").get<std::string>());
  s.in_channels = j.at("in_channels").get<int>();
  s.out_channels = j.at("out_channels").get<int>();
  s.base_filters = j.at("base_filters").get<int>();
  s.depth = j.at("depth").get<int>();
  s.norm = parse_norm_kind(j.at("norm").get<std::string>());
  s.validate();
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam& optimizer, int epoch,
                     const nlohmann::json& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto& cfg = optimizer.config();
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& r : model.parameter_ranges()) arrays.push_back({{"name", r.name}, {"count", r.count}});
  const bool has_moments = !optimizer.first_moment().empty();
  if (has_moments) {
    arrays.push_back({{"name", "optimizer.m"}, {"count", optimizer.first_moment().size()}});
    arrays.push_back({{"name", "optimizer.v"}, {"count", optimizer.second_moment().size()}});
  }
  const nlohmann::json header = {
      {"version", kCheckpointVersion},
      {"spec", spec_to_json(model.spec())},
      {"epoch", epoch},
      {"parameter_count", model.parameter_count()},
      {"optimizer",
       {{"type", "adam"},
        {"learning_rate", cfg.learning_rate},
        {"beta1", cfg.beta1},
        {"beta2", cfg.beta2},
        {"epsilon", cfg.epsilon},
        {"steps", optimizer.steps()}}},
      {"arrays", arrays},
      {"meta", meta},
  };
  const std::string text = header.dump();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const auto version = static_cast<std::uint32_t>(kCheckpointVersion);
    const auto length = static_cast<std::uint64_t>(text.size());
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_doubles(out, model.parameters());
    if (has_moments) {
      write_doubles(out, optimizer.first_moment());
      write_doubles(out, optimizer.second_moment());
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint not found: " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a checkpoint file: " + path.string());
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw IoError("truncated checkpoint header: " + path.string());

  const auto header = nlohmann::json::parse(text);
  if (header.at("version").get<int>() != kCheckpointVersion) throw IoError("checkpoint header version mismatch");

  Checkpoint ck;
  ck.model = Model(spec_from_json(header.at("spec")), 0);
  ck.epoch = header.at("epoch").get<int>();
  ck.meta = header.value("meta", nlohmann::json::object());

  auto read_array = [&](std::size_t count) {
    std::vector<double> v(count);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint data: " + path.string());
    return v;
  };

  const auto& ranges = ck.model.parameter_ranges();
  const auto& arrays = header.at("arrays");
  std::size_t ai = 0;
  for (const auto& r : ranges) {
    if (ai >= arrays.size() || arrays[ai].at("name") != r.name || arrays[ai].at("count").get<std::size_t>() != r.count)
      throw IoError("checkpoint array directory does not match the network spec at '" + r.name + "'");
    const auto values = read_array(r.count);
    std::copy(values.begin(), values.end(), ck.model.parameters().begin() + static_cast<std::ptrdiff_t>(r.offset));
    ++ai;
  }

  const auto& opt = header.at("optimizer");
  AdamConfig cfg{opt.at("learning_rate").get<double>(), opt.at("beta1").get<double>(), opt.at("beta2").get<double>(),
                 opt.at("epsilon").get<double>()};
  std::vector<double> m, v;
  if (ai < arrays.size()) {
    m = read_array(arrays[ai].at("count").get<std::size_t>());
    v = read_array(arrays[ai + 1].at("count").get<std::size_t>());
  }
  ck.optimizer.restore(cfg, opt.at("steps").get<std::int64_t>(), std::move(m), std::move(v));
  return ck;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

}  // namespace scgan
