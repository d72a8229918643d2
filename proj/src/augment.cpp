#include "scgan/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include "scgan/log.hpp"
#include "scgan/nifti.hpp"
#include "scgan/preprocess.hpp"

namespace scgan {

using nlohmann::json;

std::string to_string(NormalizationMode m) { return m == NormalizationMode::zscore ? "zscore" : "rescale_unit"; }
std::string to_string(AugmentMode m) { return m == AugmentMode::one_of ? "one_of" : "compose"; }

std::string to_string(Family f) {
  switch (f) {
    case Family::anisotropy: return "anisotropy";
    case Family::elastic: return "elastic";
    case Family::affine: return "affine";
  }
  return "?";
}

NormalizationMode parse_normalization_mode(const std::string& s) {
  if (s == "zscore") return NormalizationMode::zscore;
  if (s == "rescale_unit") return NormalizationMode::rescale_unit;
  throw ValidationError("unknown normalization mode '" + s + "'");
}

AugmentMode parse_augment_mode(const std::string& s) {
  if (s == "one_of") return AugmentMode::one_of;
  if (s == "compose") return AugmentMode::compose;
  throw ValidationError("unknown augmentation mode '" + s + "'");
}

Family parse_family(const std::string& s) {
  if (s == "anisotropy") return Family::anisotropy;
  if (s == "elastic") return Family::elastic;
  if (s == "affine") return Family::affine;
  throw ValidationError("unknown augmentation family '" + s + "'");
}

void AugmentSpec::collect_violations(std::vector<std::string>& out, const std::string& prefix) const {
  auto range = [&](const Range& r, const std::string& name) {
    if (!(r.lo <= r.hi)) out.push_back(prefix + "." + name + ": lower bound must not exceed upper bound");
  };
  if (n_outputs < 0) out.push_back(prefix + ".n_outputs: must be >= 0");
  if (!(normalization.clip_low >= 0.0 && normalization.clip_high <= 100.0 &&
        normalization.clip_low < normalization.clip_high))
    out.push_back(prefix + ".normalization: clip percentiles must satisfy 0 <= low < high <= 100");
  if (anisotropy.axes.empty()) out.push_back(prefix + ".anisotropy.axes: must not be empty");
  for (int a : anisotropy.axes)
    if (a < 0 || a > 2) out.push_back(prefix + ".anisotropy.axes: axis must be 0, 1 or 2");
  range(anisotropy.factor, "anisotropy.factor");
  if (!(anisotropy.factor.lo >= 1.0)) out.push_back(prefix + ".anisotropy.factor: range must lie in [1, inf)");
  for (int g : elastic.grid)
    if (g < 2) out.push_back(prefix + ".elastic.grid: control grid needs >= 2 points per axis");
  if (!(elastic.max_displacement >= 0.0)) out.push_back(prefix + ".elastic.max_displacement: must be >= 0");
  range(affine.scale, "affine.scale");
  if (!(affine.scale.lo > 0.0)) out.push_back(prefix + ".affine.scale: must be > 0");
  range(affine.rotation_deg, "affine.rotation_deg");
  range(affine.translation, "affine.translation");
  if (families.empty()) out.push_back(prefix + ".families: must not be empty");
  if (workers < 1) out.push_back(prefix + ".workers: must be >= 1");
}

void AugmentSpec::validate() const {
  std::vector<std::string> v;
  collect_violations(v);
  if (!v.empty()) throw ValidationError(v.front());
}

namespace {

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ValidationError("range must be a two-element array");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

json to_json(const AugmentSpec& s) {
  json fams = json::array();
  for (Family f : s.families) fams.push_back(to_string(f));
  return {{"seed", s.seed},
          {"n_outputs", s.n_outputs},
          {"mode", to_string(s.mode)},
          {"families", fams},
          {"workers", s.workers},
          {"normalization",
           {{"mode", to_string(s.normalization.mode)},
            {"clip_low", s.normalization.clip_low},
            {"clip_high", s.normalization.clip_high}}},
          {"anisotropy", {{"axes", s.anisotropy.axes}, {"factor", range_json(s.anisotropy.factor)}}},
          {"elastic", {{"grid", s.elastic.grid}, {"max_displacement", s.elastic.max_displacement}}},
          {"affine",
           {{"scale", range_json(s.affine.scale)},
            {"rotation_deg", range_json(s.affine.rotation_deg)},
            {"translation", range_json(s.affine.translation)}}}};
}

AugmentSpec augment_spec_from_json(const json& j) {
  AugmentSpec s;
  s.seed = j.value("seed", s.seed);
  s.n_outputs = j.value("n_outputs", s.n_outputs);
  if (j.contains("mode")) s.mode = parse_augment_mode(j["mode"]);
  if (j.contains("families")) {
    s.families.clear();
    for (const auto& f : j["families"]) s.families.push_back(parse_family(f));
  }
  s.workers = j.value("workers", s.workers);
  if (j.contains("normalization")) {
    const json& n = j["normalization"];
    if (n.contains("mode")) s.normalization.mode = parse_normalization_mode(n["mode"]);
    s.normalization.clip_low = n.value("clip_low", s.normalization.clip_low);
    s.normalization.clip_high = n.value("clip_high", s.normalization.clip_high);
  }
  if (j.contains("anisotropy")) {
    const json& a = j["anisotropy"];
    if (a.contains("axes")) s.anisotropy.axes = a["axes"].get<std::vector<int>>();
    if (a.contains("factor")) s.anisotropy.factor = range_from(a["factor"]);
  }
  if (j.contains("elastic")) {
    const json& e = j["elastic"];
    if (e.contains("grid")) s.elastic.grid = e["grid"].get<std::array<int, 3>>();
    s.elastic.max_displacement = e.value("max_displacement", s.elastic.max_displacement);
  }
  if (j.contains("affine")) {
    const json& a = j["affine"];
    if (a.contains("scale")) s.affine.scale = range_from(a["scale"]);
    if (a.contains("rotation_deg")) s.affine.rotation_deg = range_from(a["rotation_deg"]);
    if (a.contains("translation")) s.affine.translation = range_from(a["translation"]);
  }
  return s;
}

double percentile(std::vector<float> values, double p) {
  if (values.empty()) throw ValidationError("percentile of an empty set");
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (hi == lo) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(hi), values.end());
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

Volume normalize(const Volume& v, const NormalizationSpec& spec) {
  v.validate();
  const double lo = percentile(v.data, spec.clip_low);
  const double hi = percentile(v.data, spec.clip_high);
  Volume out = v;
  std::vector<double> clipped(v.data.size());
  for (std::size_t i = 0; i < v.data.size(); ++i) clipped[i] = std::clamp(static_cast<double>(v.data[i]), lo, hi);

  if (spec.mode == NormalizationMode::rescale_unit) {
    if (!(hi > lo)) {
      log::warn("normalize: constant volume, returning zeros");
      std::fill(out.data.begin(), out.data.end(), 0.0F);
      return out;
    }
    for (std::size_t i = 0; i < clipped.size(); ++i)
      out.data[i] = static_cast<float>(std::clamp(2.0 * (clipped[i] - lo) / (hi - lo) - 1.0, -1.0, 1.0));
    return out;
  }

  double mean = 0.0;
  for (double c : clipped) mean += c;
  mean /= static_cast<double>(clipped.size());
  double var = 0.0;
  for (double c : clipped) var += (c - mean) * (c - mean);
  var /= static_cast<double>(clipped.size());
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
    log::warn("normalize: constant volume, returning zeros");
    std::fill(out.data.begin(), out.data.end(), 0.0F);
    return out;
  }
  for (std::size_t i = 0; i < clipped.size(); ++i) out.data[i] = static_cast<float>((clipped[i] - mean) / sd);
  return out;
}

Volume anisotropy_resample(const Volume& v, int axis, double factor) {
  if (axis < 0 || axis > 2) throw ValidationError("anisotropy axis must be 0, 1 or 2");
  if (!(factor >= 1.0)) throw ValidationError("anisotropy factor must be >= 1");
  const int n = v.dims[axis];
  const int m = std::max(1, static_cast<int>(std::lround(n / factor)));
  if (m == n) return v;

  // Low-res sample j averages the input interval [j, j + 1) * n / m.
  const double width = static_cast<double>(n) / m;
  std::vector<std::vector<std::pair<int, double>>> box(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    const double a = j * width;
    const double b = (j + 1) * width;
    for (int i = static_cast<int>(std::floor(a)); i < n && i < b; ++i) {
      const double w = std::min(b, i + 1.0) - std::max(a, static_cast<double>(i));
      if (w > 0.0) box[static_cast<std::size_t>(j)].emplace_back(i, w / width);
    }
  }
  // High-res voxel o sits at low-res coordinate (o + 0.5) m / n - 0.5.
  std::vector<std::array<double, 3>> up(static_cast<std::size_t>(n));  // j0, j1, t
  for (int o = 0; o < n; ++o) {
    const double c = std::clamp((o + 0.5) * m / n - 0.5, 0.0, static_cast<double>(m - 1));
    const int j0 = static_cast<int>(std::floor(c));
    const int j1 = std::min(j0 + 1, m - 1);
    up[static_cast<std::size_t>(o)] = {static_cast<double>(j0), static_cast<double>(j1), c - j0};
  }

  Volume out = v;
  const std::array<std::size_t, 3> stride{1, static_cast<std::size_t>(v.dims.x),
                                          static_cast<std::size_t>(v.dims.x) * static_cast<std::size_t>(v.dims.y)};
  const std::size_t s = stride[static_cast<std::size_t>(axis)];
  const int a1 = axis == 0 ? 1 : 0;
  const int a2 = axis == 2 ? 1 : 2;
  std::vector<double> low(static_cast<std::size_t>(m));
  for (int q = 0; q < v.dims[a2]; ++q)
    for (int p = 0; p < v.dims[a1]; ++p) {
      const std::size_t base = static_cast<std::size_t>(p) * stride[static_cast<std::size_t>(a1)] +
                               static_cast<std::size_t>(q) * stride[static_cast<std::size_t>(a2)];
      for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (const auto& [i, w] : box[static_cast<std::size_t>(j)]) acc += w * v.data[base + static_cast<std::size_t>(i) * s];
        low[static_cast<std::size_t>(j)] = acc;
      }
      for (int o = 0; o < n; ++o) {
        const auto& u = up[static_cast<std::size_t>(o)];
        const double val = (1.0 - u[2]) * low[static_cast<std::size_t>(u[0])] + u[2] * low[static_cast<std::size_t>(u[1])];
        out.data[base + static_cast<std::size_t>(o) * s] = static_cast<float>(val);
      }
    }
  return out;
}

std::pair<Volume, LabelMap> random_anisotropy(const Volume& v, const LabelMap& labels, const AnisotropySpec& spec,
                                              Rng& rng) {
  if (spec.axes.empty()) throw ValidationError("anisotropy needs at least one axis");
  const int axis = spec.axes[rng.below(spec.axes.size())];
  const double factor = rng.uniform(spec.factor.lo, spec.factor.hi);
  return {anisotropy_resample(v, axis, factor), labels};
}

namespace {

std::array<double, 4> bspline_weights(double t) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return {(1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0, (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0,
          (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0, t3 / 6.0};
}

float volume_min(const Volume& v) { return *std::min_element(v.data.begin(), v.data.end()); }

}  // namespace

std::array<double, 3> DisplacementGrid::at(const Dims& dims, double x, double y, double z) const {
  const std::array<double, 3> p{x, y, z};
  std::array<std::array<int, 4>, 3> idx{};
  std::array<std::array<double, 4>, 3> w{};
  for (int a = 0; a < 3; ++a) {
    const int g = grid[static_cast<std::size_t>(a)];
    const int n = dims[a];
    const double u = n > 1 ? p[static_cast<std::size_t>(a)] * (g - 1) / (n - 1.0) : 0.0;
    const int i = std::min(static_cast<int>(std::floor(u)), g - 1);
    w[static_cast<std::size_t>(a)] = bspline_weights(u - i);
    for (int q = 0; q < 4; ++q) idx[static_cast<std::size_t>(a)][static_cast<std::size_t>(q)] = std::clamp(i - 1 + q, 0, g - 1);
  }
  std::array<double, 3> d{0.0, 0.0, 0.0};
  for (int c = 0; c < 4; ++c)
    for (int b = 0; b < 4; ++b) {
      const double wbc = w[1][static_cast<std::size_t>(b)] * w[2][static_cast<std::size_t>(c)];
      for (int a = 0; a < 4; ++a) {
        const double wt = w[0][static_cast<std::size_t>(a)] * wbc;
        const std::size_t k = static_cast<std::size_t>(idx[0][static_cast<std::size_t>(a)]) +
                              static_cast<std::size_t>(grid[0]) *
                                  (static_cast<std::size_t>(idx[1][static_cast<std::size_t>(b)]) +
                                   static_cast<std::size_t>(grid[1]) * static_cast<std::size_t>(idx[2][static_cast<std::size_t>(c)]));
        for (int e = 0; e < 3; ++e) d[static_cast<std::size_t>(e)] += wt * values[k][static_cast<std::size_t>(e)];
      }
    }
  return d;
}

void check_fold_over(const ElasticSpec& spec, const Dims& dims) {
  double min_spacing = INFINITY;
  for (int a = 0; a < 3; ++a) {
    const int g = spec.grid[static_cast<std::size_t>(a)];
    if (g < 2) throw ValidationError("elastic control grid needs >= 2 points per axis");
    if (dims[a] > 1) min_spacing = std::min(min_spacing, (dims[a] - 1.0) / (g - 1));
  }
  if (spec.max_displacement > 0.0 && !(spec.max_displacement < 0.5 * min_spacing))
    throw ValidationError("elastic max displacement " + std::to_string(spec.max_displacement) +
                          " must be below half the control-point spacing (" + std::to_string(0.5 * min_spacing) +
                          " voxels for shape " + dims.str() + ")");
}

DisplacementGrid random_displacement_grid(const ElasticSpec& spec, Rng& rng) {
  DisplacementGrid f;
  f.grid = spec.grid;
  const std::size_t n = static_cast<std::size_t>(spec.grid[0]) * static_cast<std::size_t>(spec.grid[1]) *
                        static_cast<std::size_t>(spec.grid[2]);
  f.values.resize(n);
  for (auto& v : f.values)
    for (auto& c : v) c = rng.uniform(-spec.max_displacement, spec.max_displacement);
  return f;
}

std::pair<Volume, LabelMap> elastic_warp(const Volume& v, const LabelMap& labels, const DisplacementGrid& field) {
  if (labels.dims != v.dims) throw ShapeError("labels " + labels.dims.str() + " do not match volume " + v.dims.str());
  Volume out = v;
  LabelMap lab = labels;
  const double fill = volume_min(v);
  const Dims& d = v.dims;
  for (int k = 0; k < d.z; ++k)
    for (int j = 0; j < d.y; ++j)
      for (int i = 0; i < d.x; ++i) {
        const auto u = field.at(d, i, j, k);
        const double x = i + u[0];
        const double y = j + u[1];
        const double z = k + u[2];
        out.at(i, j, k) = static_cast<float>(sample_linear_fill(v, x, y, z, fill));
        lab.at(i, j, k) = sample_nearest_fill(labels, x, y, z, 0);
      }
  return {std::move(out), std::move(lab)};
}

std::pair<Volume, LabelMap> random_elastic(const Volume& v, const LabelMap& labels, const ElasticSpec& spec, Rng& rng) {
  check_fold_over(spec, v.dims);
  const DisplacementGrid field = random_displacement_grid(spec, rng);
  if (spec.max_displacement == 0.0) return {v, labels};
  return elastic_warp(v, labels, field);
}

Eigen::Matrix3d AffineParams::matrix() const {
  const double k = std::numbers::pi / 180.0;
  const Eigen::Matrix3d rx = Eigen::AngleAxisd(rotation_deg[0] * k, Eigen::Vector3d::UnitX()).toRotationMatrix();
  const Eigen::Matrix3d ry = Eigen::AngleAxisd(rotation_deg[1] * k, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(rotation_deg[2] * k, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return rz * ry * rx * Eigen::Vector3d(scale[0], scale[1], scale[2]).asDiagonal();
}

std::pair<Volume, LabelMap> affine_warp(const Volume& v, const LabelMap& labels, const AffineParams& params) {
  if (labels.dims != v.dims) throw ShapeError("labels " + labels.dims.str() + " do not match volume " + v.dims.str());
  const Eigen::Matrix3d inv = params.matrix().inverse();
  const Dims& d = v.dims;
  const Eigen::Vector3d c((d.x - 1) / 2.0, (d.y - 1) / 2.0, (d.z - 1) / 2.0);
  const Eigen::Vector3d t(params.translation[0], params.translation[1], params.translation[2]);
  Volume out = v;
  LabelMap lab = labels;
  const double fill = volume_min(v);
  for (int k = 0; k < d.z; ++k)
    for (int j = 0; j < d.y; ++j)
      for (int i = 0; i < d.x; ++i) {
        const Eigen::Vector3d src = inv * (Eigen::Vector3d(i, j, k) - c - t) + c;
        out.at(i, j, k) = static_cast<float>(sample_linear_fill(v, src.x(), src.y(), src.z(), fill));
        lab.at(i, j, k) = sample_nearest_fill(labels, src.x(), src.y(), src.z(), 0);
      }
  return {std::move(out), std::move(lab)};
}

AffineParams random_affine_params(const AffineSpec& spec, Rng& rng) {
  AffineParams p;
  for (auto& s : p.scale) s = rng.uniform(spec.scale.lo, spec.scale.hi);
  for (auto& r : p.rotation_deg) r = rng.uniform(spec.rotation_deg.lo, spec.rotation_deg.hi);
  for (auto& t : p.translation) t = rng.uniform(spec.translation.lo, spec.translation.hi);
  return p;
}

std::pair<Volume, LabelMap> random_affine(const Volume& v, const LabelMap& labels, const AffineSpec& spec, Rng& rng) {
  return affine_warp(v, labels, random_affine_params(spec, rng));
}

namespace {

Sample augment_one(const Sample& src, const AugmentSpec& spec, Rng& rng, std::vector<Family>& used) {
  std::vector<Family> order;
  if (spec.mode == AugmentMode::one_of) {
    order.push_back(spec.families[rng.below(spec.families.size())]);
  } else {
    for (Family f : {Family::anisotropy, Family::elastic, Family::affine})
      if (std::find(spec.families.begin(), spec.families.end(), f) != spec.families.end()) order.push_back(f);
  }
  std::pair<Volume, LabelMap> cur{normalize(src.volume, spec.normalization), src.labels};
  for (Family f : order) {
    switch (f) {
      case Family::anisotropy: cur = random_anisotropy(cur.first, cur.second, spec.anisotropy, rng); break;
      case Family::elastic: cur = random_elastic(cur.first, cur.second, spec.elastic, rng); break;
      case Family::affine: cur = random_affine(cur.first, cur.second, spec.affine, rng); break;
    }
  }
  used = order;
  Sample out;
  out.volume = std::move(cur.first);
  out.labels = std::move(cur.second);
  out.provenance = Provenance::augmented;
  return out;
}

}  // namespace

Sample augment_output(const std::vector<const Sample*>& sources, const AugmentSpec& spec, Domain d, int index,
                      AugmentRecord* record) {
  if (sources.empty()) throw ValidationError("augmentation needs a nonempty input set");
  const Sample& src = *sources[static_cast<std::size_t>(index) % sources.size()];
  const std::uint64_t stream = derive_seed(spec.seed, {static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(index)});
  Rng rng(stream);
  std::vector<Family> used;
  Sample out = augment_one(src, spec, rng, used);
  out.domain = d;
  out.id = "aug-" + to_string(d) + "-" + std::to_string(index);
  if (record) *record = {index, d, src.id, used, stream};
  return out;
}

std::vector<Sample> generate_augmented_set(const std::vector<Sample>& samples, const AugmentSpec& spec,
                                           std::vector<AugmentRecord>* records) {
  spec.validate();
  if (samples.empty()) throw ValidationError("augmentation needs a nonempty input set");
  for (const auto& s : samples) check_fold_over(spec.elastic, s.volume.dims);

  struct Job {
    Domain domain;
    int index;
  };
  std::vector<Job> jobs;
  std::array<std::vector<const Sample*>, 2> pools;
  for (Domain d : {Domain::A, Domain::B}) {
    auto& pool = pools[static_cast<std::size_t>(d)];
    for (const auto& s : samples)
      if (s.domain == d) pool.push_back(&s);
    if (pool.empty()) continue;
    for (int i = 0; i < spec.n_outputs; ++i) jobs.push_back({d, i});
  }

  std::vector<Sample> out(jobs.size());
  std::vector<AugmentRecord> recs(jobs.size());
  auto run = [&](std::size_t first, std::size_t step) {
    for (std::size_t q = first; q < jobs.size(); q += step)
      out[q] = augment_output(pools[static_cast<std::size_t>(jobs[q].domain)], spec, jobs[q].domain, jobs[q].index,
                              &recs[q]);
  };
  const auto workers = static_cast<std::size_t>(std::max(1, spec.workers));
  if (workers == 1 || jobs.size() < 2) {
    run(0, 1);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w, workers);
    for (auto& t : threads) t.join();
  }
  if (records) *records = std::move(recs);
  return out;
}

namespace {

std::string stem_of(const AugmentRecord& r) { return to_string(r.domain) + "/" + std::to_string(r.index); }

}  // namespace

void write_augmented_sample(const std::filesystem::path& dir, const Sample& sample, const AugmentRecord& record) {
  std::filesystem::create_directories(dir / to_string(record.domain));
  write_volume(sample.volume, dir / (stem_of(record) + "_img.nii.gz"));
  write_labels(sample.labels, dir / (stem_of(record) + "_lbl.nii.gz"));
}

void write_augment_manifest(const std::filesystem::path& dir, const std::vector<AugmentRecord>& records,
                            const AugmentSpec& spec) {
  json outputs = json::array();
  for (const auto& r : records) {
    json fams = json::array();
    for (Family f : r.families) fams.push_back(to_string(f));
    outputs.push_back({{"id", "aug-" + to_string(r.domain) + "-" + std::to_string(r.index)},
                       {"domain", to_string(r.domain)},
                       {"index", r.index},
                       {"image", stem_of(r) + "_img.nii.gz"},
                       {"labels", stem_of(r) + "_lbl.nii.gz"},
                       {"source", r.source_id},
                       {"families", fams},
                       {"stream_seed", r.stream_seed}});
  }
  const json manifest{{"kind", "augmented"}, {"seed", spec.seed}, {"spec", to_json(spec)}, {"outputs", outputs}};
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / "manifest.json");
  if (!f) throw IoError("cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << "\n";
}

void write_augmented_set(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                         const std::vector<AugmentRecord>& records, const AugmentSpec& spec) {
  if (samples.size() != records.size()) throw ValidationError("augmented samples and records differ in length");
  for (std::size_t q = 0; q < samples.size(); ++q) write_augmented_sample(dir, samples[q], records[q]);
  write_augment_manifest(dir, records, spec);
}

}  // namespace scgan
