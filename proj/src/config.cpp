#include "scgan/config.hpp"

#include <cstdlib>
#include <fstream>

#include "scgan/phantom.hpp"

namespace scgan {

using nlohmann::json;

namespace {

/// Reads fields of one JSON object, recording type errors instead of throwing.
class Fields {
 public:
  Fields(const json& j, std::string prefix, std::vector<std::string>& errors)
      : j_(j), prefix_(std::move(prefix)), errors_(errors) {
    if (!j_.is_object()) fail("", "must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(key, "has the wrong type");
    }
  }

  /// Runs `parse` on a sub-object, turning its exceptions into violations.
  template <class F>
  void with(const char* key, F&& parse) {
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      parse(j_.at(key));
    } catch (const json::exception& e) {
      fail(key, std::string("malformed (") + e.what() + ")");
    } catch (const ValidationError& e) {
      fail(key, e.what());
    }
  }

  void fail(const std::string& key, const std::string& rule) {
    errors_.push_back(prefix_ + (key.empty() ? "" : (prefix_.empty() ? "" : ".") + key) + ": " + rule);
  }

 private:
  const json& j_;
  std::string prefix_;
  std::vector<std::string>& errors_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

void parse_domain(const json& j, const std::string& prefix, const std::filesystem::path& base, DomainConfig& d,
                  std::vector<std::string>& errors) {
  Fields f(j, prefix, errors);
  f.get("name", d.name);
  std::string dir;
  f.get("dir", dir);
  d.dir = resolve(base, dir);
  f.get("image_suffix", d.image_suffix);
  f.get("label_suffix", d.label_suffix);
  f.get("reorient", d.reorient);
  if (j.contains("resize_xy") && !j["resize_xy"].is_null()) {
    int r = 0;
    f.get("resize_xy", r);
    d.resize_xy = r;
  }
  f.with("crops", [&](const json& c) {
    for (const auto& [id, box] : c.items()) {
      const auto v = box.get<std::vector<int>>();
      if (v.size() != 6) {
        errors.push_back(prefix + ".crops." + id + ": crop box needs 6 integers (x0,x1,y0,y1,z0,z1)");
        continue;
      }
      d.crops[id] = {v[0], v[1], v[2], v[3], v[4], v[5]};
    }
  });
}

void parse_network(const json& j, const std::string& prefix, NetworkConfig& n, std::vector<std::string>& errors) {
  Fields f(j, prefix, errors);
  f.get("base_filters", n.base_filters);
  f.with("norm", [&](const json& v) { n.norm = parse_norm_kind(v.get<std::string>()); });
  if (j.contains("depth"))
    f.fail("depth", "is fixed by the architecture and cannot be configured");
}

LabelSet parse_label_set(const json& j, std::string& name) {
  if (j.is_string()) {
    name = j.get<std::string>();
    if (name == "default") return default_label_set();
    if (name == "mmwhs") return mmwhs_label_set();
    if (name == "phantom4") return phantom_label_set(4);
    throw ValidationError("unknown label set '" + name + "' (default, mmwhs, phantom4 or a list)");
  }
  name = "custom";
  LabelSet out;
  for (const auto& e : j) out.push_back({e.at("id").get<int>(), e.at("name").get<std::string>()});
  return out;
}

void check(PipelineConfig& c, std::vector<std::string>& v) {
  if (c.version != kConfigVersion)
    v.push_back("version: must be " + std::to_string(kConfigVersion) + " (got " + std::to_string(c.version) + ")");
  if (c.output_dir.empty()) v.push_back("output_dir: must not be empty");
  if (!(c.test_fraction >= 0.0 && c.test_fraction < 1.0)) v.push_back("test_fraction: must lie in [0, 1)");

  for (Domain d : {Domain::A, Domain::B}) {
    const DomainConfig& dc = c.domain(d);
    const std::string p = "domains." + to_string(d);
    if (dc.name.empty()) v.push_back(p + ".name: must not be empty");
    if (dc.dir.empty())
      v.push_back(p + ".dir: required");
    else if (!std::filesystem::is_directory(dc.dir))
      v.push_back(p + ".dir: referenced path must exist (" + dc.dir.string() + ")");
    if (dc.resize_xy && *dc.resize_xy < 1) v.push_back(p + ".resize_xy: must be >= 1");
    if (dc.image_suffix.empty() || dc.label_suffix.empty() || dc.image_suffix == dc.label_suffix)
      v.push_back(p + ": image_suffix and label_suffix must be nonempty and distinct");
    for (const auto& [id, b] : dc.crops)
      if (b.x0 < 0 || b.y0 < 0 || b.z0 < 0 || b.x0 >= b.x1 || b.y0 >= b.y1 || b.z0 >= b.z1)
        v.push_back(p + ".crops." + id + ": crop box must be nonempty with 0 <= lower < upper");
  }

  if (c.labels.empty()) v.push_back("labels: label set must not be empty");
  for (std::size_t i = 0; i < c.labels.size(); ++i) {
    if (c.labels[i].id <= 0) v.push_back("labels: ids must be positive (0 is background)");
    for (std::size_t k = 0; k < i; ++k)
      if (c.labels[k].id == c.labels[i].id || c.labels[k].name == c.labels[i].name)
        v.push_back("labels: ids and names must be unique");
  }

  c.augment.collect_violations(v);

  const std::array<std::pair<const char*, const NetworkConfig*>, 3> nets{
      {{"segmentor", &c.segmentor}, {"generator", &c.generator}, {"discriminator", &c.discriminator}}};
  for (const auto& [name, n] : nets) {
    if (n->base_filters < 1) v.push_back(std::string("networks.") + name + ".base_filters: must be >= 1");
    if (n->norm == NormKind::batch)
      v.push_back(std::string("networks.") + name +
                  ".norm: batch normalization is not supported (samples are processed one at a time)");
  }

  const LossWeights& w = c.weights;
  for (const auto& [name, x] : {std::pair{"lambda_adv", w.lambda_adv}, {"lambda_cycle", w.lambda_cycle},
                                {"lambda_spatial", w.lambda_spatial}})
    if (!(x >= 0.0)) v.push_back(std::string("loss_weights.") + name + ": LossWeights requires every weight >= 0");
  if (w.lambda_adv == 0.0 && w.lambda_cycle == 0.0 && w.lambda_spatial == 0.0)
    v.push_back("loss_weights: LossWeights requires at least one weight > 0");
  if (!(c.dice.smooth > 0.0)) v.push_back("dice.smooth: must be > 0");

  c.plan.collect_violations(v);
  if (c.eval_modes.empty()) v.push_back("eval.modes: at least one mode required");
}

}  // namespace

PipelineConfig parse_config(const json& j, const std::filesystem::path& source, std::vector<std::string>& v) {
  PipelineConfig c;
  c.source = source;
  const std::filesystem::path base = source.has_parent_path() ? source.parent_path() : std::filesystem::path(".");
  Fields f(j, "", v);
  c.version = -1;
  f.get("version", c.version);
  if (!j.contains("version")) v.push_back("version: required");
  f.get("seed", c.seed);
  std::string out = c.output_dir.string();
  f.get("output_dir", out);
  c.output_dir = resolve(base, out);
  f.get("run_name", c.run_name);
  f.get("test_fraction", c.test_fraction);

  if (!j.contains("domains")) v.push_back("domains: required (A and B)");
  f.with("domains", [&](const json& d) {
    for (const char* key : {"A", "B"}) {
      if (!d.contains(key)) {
        v.push_back(std::string("domains.") + key + ": required");
        continue;
      }
      parse_domain(d[key], std::string("domains.") + key, base, key[0] == 'A' ? c.domain_a : c.domain_b, v);
    }
  });
  f.with("labels", [&](const json& l) { c.labels = parse_label_set(l, c.label_set_name); });
  f.with("augment", [&](const json& a) { c.augment = augment_spec_from_json(a); });
  f.with("networks", [&](const json& n) {
    Fields nf(n, "networks", v);
    nf.with("segmentor", [&](const json& x) { parse_network(x, "networks.segmentor", c.segmentor, v); });
    nf.with("generator", [&](const json& x) { parse_network(x, "networks.generator", c.generator, v); });
    nf.with("discriminator", [&](const json& x) { parse_network(x, "networks.discriminator", c.discriminator, v); });
  });
  f.with("loss_weights", [&](const json& w) {
    Fields wf(w, "loss_weights", v);
    wf.get("lambda_adv", c.weights.lambda_adv);
    wf.get("lambda_cycle", c.weights.lambda_cycle);
    wf.get("lambda_spatial", c.weights.lambda_spatial);
  });
  f.with("dice", [&](const json& d) {
    Fields df(d, "dice", v);
    df.get("smooth", c.dice.smooth);
    df.get("include_background", c.dice.include_background);
  });
  f.with("plan", [&](const json& p) { c.plan = phase_plan_from_json(p); });
  f.with("ablation", [&](const json& a) { c.flags = ablation_flags_from_json(a); });
  f.with("eval", [&](const json& e) {
    if (e.contains("modes")) {
      c.eval_modes.clear();
      for (const auto& m : e["modes"]) c.eval_modes.push_back(parse_eval_mode(m.get<std::string>()));
    }
  });
  check(c, v);
  return c;
}

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("cannot parse config file " + path.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> validate_config(const std::filesystem::path& path) {
  std::vector<std::string> v;
  parse_config(read_json(path), path, v);
  return v;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::vector<std::string> v;
  PipelineConfig c = parse_config(read_json(path), path, v);
  if (!v.empty()) {
    std::string msg = "invalid config " + path.string() + " (" + std::to_string(v.size()) + " violation" +
                      (v.size() == 1 ? "" : "s") + "):";
    for (const auto& s : v) msg += "\n  - " + s;
    throw ValidationError(msg);
  }
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') c.output_dir = env;
  return c;
}

json to_json(const PipelineConfig& c) {
  auto domain = [](const DomainConfig& d) {
    json crops = json::object();
    for (const auto& [id, b] : d.crops) crops[id] = {b.x0, b.x1, b.y0, b.y1, b.z0, b.z1};
    return json{{"name", d.name},
                {"dir", d.dir.string()},
                {"image_suffix", d.image_suffix},
                {"label_suffix", d.label_suffix},
                {"reorient", d.reorient},
                {"resize_xy", d.resize_xy ? json(*d.resize_xy) : json(nullptr)},
                {"crops", crops}};
  };
  auto net = [](const NetworkConfig& n) { return json{{"base_filters", n.base_filters}, {"norm", to_string(n.norm)}}; };
  json labels = json::array();
  for (const auto& l : c.labels) labels.push_back({{"id", l.id}, {"name", l.name}});
  json modes = json::array();
  for (EvalMode m : c.eval_modes) modes.push_back(to_string(m));
  return {{"version", c.version},
          {"seed", c.seed},
          {"output_dir", c.output_dir.string()},
          {"run_name", c.run_name},
          {"test_fraction", c.test_fraction},
          {"domains", {{"A", domain(c.domain_a)}, {"B", domain(c.domain_b)}}},
          {"labels", labels},
          {"augment", to_json(c.augment)},
          {"networks", {{"segmentor", net(c.segmentor)}, {"generator", net(c.generator)}, {"discriminator", net(c.discriminator)}}},
          {"loss_weights",
           {{"lambda_adv", c.weights.lambda_adv}, {"lambda_cycle", c.weights.lambda_cycle}, {"lambda_spatial", c.weights.lambda_spatial}}},
          {"dice", {{"smooth", c.dice.smooth}, {"include_background", c.dice.include_background}}},
          {"plan", to_json(c.plan)},
          {"ablation", to_json(c.flags)},
          {"eval", {{"modes", modes}}}};
}

TrainingSetup training_setup(const PipelineConfig& c) {
  TrainingSetup s;
  s.segmentor = segmentor_spec(1, static_cast<int>(c.labels.size()), c.segmentor.base_filters, c.segmentor.norm);
  s.generator = generator_spec(1, c.generator.base_filters, c.generator.norm);
  s.discriminator = discriminator_spec(1, c.discriminator.base_filters, c.discriminator.norm);
  s.weights = c.weights;
  s.dice = c.dice;
  s.plan = c.plan;
  s.flags = c.flags;
  s.normalization = c.augment.normalization;
  s.seed = c.seed;
  s.out_dir = c.output_dir;
  s.resume = c.resume;
  return s;
}

}  // namespace scgan
