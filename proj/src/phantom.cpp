#include "scgan/phantom.hpp"

#include <array>
#include <cmath>

#include "scgan/rng.hpp"

namespace scgan {
namespace {

constexpr std::size_t kMinLabelVoxels = 32;

struct Ellipsoid {
  std::array<double, 3> center;
  std::array<double, 3> radii;
  int label;
};

// Normalized coordinates in [-1, 1]^3. Painted in order, later entries win;
// the MYO shell is painted before the LVC cavity it encloses.
const std::array<Ellipsoid, 8> kLayout = {{
    {{-0.30, 0.05, 0.00}, {0.20, 0.26, 0.30}, 5},  // RVC
    {{0.15, -0.05, 0.00}, {0.34, 0.34, 0.40}, 1},  // MYO (outer wall)
    {{0.15, -0.05, 0.00}, {0.21, 0.21, 0.27}, 3},  // LVC
    {{0.20, 0.45, 0.35}, {0.18, 0.15, 0.17}, 2},   // LAC
    {{-0.35, 0.45, 0.35}, {0.17, 0.15, 0.17}, 4},  // RAC
    {{0.05, -0.55, -0.50}, {0.14, 0.14, 0.22}, 6}, // AA
    {{-0.40, -0.50, -0.55}, {0.14, 0.16, 0.22}, 7},// PA
    {{0.00, 0.00, 0.00}, {0.00, 0.00, 0.00}, 0},   // sentinel
}};

// Mean intensity per label id 0..7 (0 = soft tissue background) and outside-body air.
constexpr std::array<double, 8> kCtMeans = {-100.0, 80.0, 180.0, 280.0, 380.0, 480.0, 580.0, 680.0};
constexpr std::array<double, 8> kMriMeans = {120.0, 260.0, 980.0, 900.0, 820.0, 740.0, 660.0, 580.0};
constexpr double kCtAir = -900.0;
constexpr double kMriAir = 10.0;
constexpr double kCtSigma = 15.0;
constexpr double kMriSigma = 18.0;

bool inside(const Ellipsoid& e, const std::array<double, 3>& u) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double d = (u[a] - e.center[a]) / e.radii[a];
    s += d * d;
  }
  return s <= 1.0;
}

LabelMap paint(const PhantomSpec& spec, const LabelSet& labels, double jitter) {
  LabelMap m(spec.shape, labels);
  std::array<bool, 8> wanted{};
  for (const auto& l : labels) wanted[static_cast<std::size_t>(l.id)] = true;

  Rng rng(derive_seed(spec.seed, {0x9e0u}));
  std::vector<Ellipsoid> shapes;
  for (std::size_t i = 0; i + 1 < kLayout.size(); ++i) {
    Ellipsoid e = kLayout[i];
    const double scale = 1.0 + jitter * rng.uniform(-1.0, 1.0);
    for (int a = 0; a < 3; ++a) {
      e.center[a] += 0.5 * jitter * rng.uniform(-1.0, 1.0);
      e.radii[a] *= scale;
    }
    // MYO and LVC share a center so the wall stays closed.
    if (e.label == 3) e.center = shapes.back().center;
    shapes.push_back(e);
  }
  for (int k = 0; k < spec.shape.z; ++k)
    for (int j = 0; j < spec.shape.y; ++j)
      for (int i = 0; i < spec.shape.x; ++i) {
        const std::array<double, 3> u{(2.0 * i + 1.0) / spec.shape.x - 1.0, (2.0 * j + 1.0) / spec.shape.y - 1.0,
                                      (2.0 * k + 1.0) / spec.shape.z - 1.0};
        std::int32_t value = 0;
        for (const auto& e : shapes)
          if (wanted[static_cast<std::size_t>(e.label)] && inside(e, u)) value = e.label;
        m.at(i, j, k) = value;
      }
  return m;
}

bool large_enough(const LabelMap& m) {
  for (const auto& l : m.label_set)
    if (m.count(l.id) < kMinLabelVoxels) return false;
  return true;
}

}  // namespace

std::string to_string(ModalityStyle s) { return s == ModalityStyle::pseudo_ct ? "pseudo_ct" : "pseudo_mri"; }

ModalityStyle parse_modality_style(const std::string& s) {
  if (s == "pseudo_ct") return ModalityStyle::pseudo_ct;
  if (s == "pseudo_mri") return ModalityStyle::pseudo_mri;
  throw ValidationError("unknown modality style '" + s + "'");
}

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a)
    if (shape[a] < 32 || shape[a] % 32 != 0)
      throw ValidationError("phantom shape " + shape.str() + " must have every axis divisible by 32");
  if (n_labels != 4 && n_labels != 7) throw ValidationError("phantom n_labels must be 4 or 7");
}

LabelSet phantom_label_set(int n_labels) {
  LabelSet all = default_label_set();
  if (n_labels == 7) return all;
  LabelSet four;
  for (const auto& l : all)
    if (l.name == "MYO" || l.name == "LAC" || l.name == "LVC" || l.name == "AA") four.push_back(l);
  return four;
}

Sample generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const LabelSet labels = phantom_label_set(spec.n_labels);

  LabelMap m;
  for (double jitter : {0.08, 0.04, 0.0}) {
    m = paint(spec, labels, jitter);
    if (large_enough(m)) break;
  }

  Sample s;
  s.labels = std::move(m);
  s.volume = Volume(spec.shape, Affine::Identity());
  s.domain = spec.style == ModalityStyle::pseudo_ct ? Domain::A : Domain::B;
  s.provenance = Provenance::original;
  s.id = "phantom-" + to_string(spec.style) + "-" + std::to_string(spec.seed);

  const bool ct = spec.style == ModalityStyle::pseudo_ct;
  const auto& means = ct ? kCtMeans : kMriMeans;
  const double sigma = ct ? kCtSigma : kMriSigma;
  const double air = ct ? kCtAir : kMriAir;
  const Ellipsoid body{{0.0, 0.0, 0.0}, {0.98, 0.9, 0.98}, 0};

  Rng rng(derive_seed(spec.seed, {0x1a7u, static_cast<std::uint64_t>(spec.style)}));
  const Dims& d = spec.shape;
  for (int k = 0; k < d.z; ++k)
    for (int j = 0; j < d.y; ++j)
      for (int i = 0; i < d.x; ++i) {
        const std::int32_t label = s.labels.at(i, j, k);
        double mean = means[static_cast<std::size_t>(label)];
        if (label == 0) {
          const std::array<double, 3> u{(2.0 * i + 1.0) / d.x - 1.0, (2.0 * j + 1.0) / d.y - 1.0,
                                        (2.0 * k + 1.0) / d.z - 1.0};
          if (!inside(body, u)) mean = air;
        }
        s.volume.at(i, j, k) = static_cast<float>(rng.normal(mean, sigma));
      }
  return s;
}

}  // namespace scgan
