#include "scgan/volume.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace scgan {
namespace {

constexpr char kPositive[3] = {'R', 'A', 'S'};
constexpr char kNegative[3] = {'L', 'P', 'I'};

bool geometry_matches(const Spacing& a, const Spacing& b, const Affine& fa, const Affine& fb) {
  for (int i = 0; i < 3; ++i)
    if (std::abs(a[i] - b[i]) > 1e-6 * std::max(1.0, std::abs(a[i]))) return false;
  return (fa - fb).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, fa.cwiseAbs().maxCoeff());
}

}  // namespace

std::string Orientation::code() const {
  std::string s(3, '?');
  for (int j = 0; j < 3; ++j) s[j] = sign[j] > 0 ? kPositive[world_axis[j]] : kNegative[world_axis[j]];
  return s;
}

Orientation Orientation::parse(const std::string& code) {
  if (code.size() != 3) throw ValidationError("orientation code must have 3 letters: '" + code + "'");
  Orientation o;
  std::set<int> used;
  for (int j = 0; j < 3; ++j) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(code[j])));
    bool found = false;
    for (int w = 0; w < 3; ++w) {
      if (c == kPositive[w] || c == kNegative[w]) {
        o.world_axis[j] = w;
        o.sign[j] = c == kPositive[w] ? 1 : -1;
        found = true;
      }
    }
    if (!found) throw ValidationError("invalid orientation letter in '" + code + "'");
    used.insert(o.world_axis[j]);
  }
  if (used.size() != 3) throw ValidationError("orientation code repeats an axis: '" + code + "'");
  return o;
}

Orientation Orientation::from_affine(const Affine& affine) {
  Orientation o;
  std::array<bool, 3> taken{false, false, false};
  for (int j = 0; j < 3; ++j) {
    int best = -1;
    double best_mag = -1.0;
    for (int w = 0; w < 3; ++w) {
      if (taken[w]) continue;
      const double mag = std::abs(affine(w, j));
      if (mag > best_mag) {
        best = w;
        best_mag = mag;
      }
    }
    taken[best] = true;
    o.world_axis[j] = best;
    o.sign[j] = affine(best, j) < 0.0 ? -1 : 1;
  }
  return o;
}

std::vector<Orientation> Orientation::all() {
  std::vector<Orientation> out;
  std::array<int, 3> perm{0, 1, 2};
  do {
    for (int bits = 0; bits < 8; ++bits) {
      Orientation o;
      o.world_axis = perm;
      for (int j = 0; j < 3; ++j) o.sign[j] = (bits >> j) & 1 ? -1 : 1;
      out.push_back(o);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

Affine make_affine(const Orientation& orientation, const Spacing& spacing, const Eigen::Vector3d& origin) {
  Affine a = Affine::Zero();
  for (int j = 0; j < 3; ++j) a(orientation.world_axis[j], j) = orientation.sign[j] * spacing[j];
  a.block<3, 1>(0, 3) = origin;
  a(3, 3) = 1.0;
  return a;
}

Spacing spacing_from_affine(const Affine& affine) {
  Spacing s{};
  for (int j = 0; j < 3; ++j) s[j] = affine.block<3, 1>(0, j).norm();
  return s;
}

Volume::Volume(Dims d, float fill) : dims(d), data(d.count(), fill) {}

Volume::Volume(Dims d, const Affine& a) : dims(d), data(d.count(), 0.0F), spacing(spacing_from_affine(a)), affine(a) {}

void Volume::validate() const {
  if (dims.x < 1 || dims.y < 1 || dims.z < 1) throw ValidationError("volume must have 3 spatial dimensions, each >= 1");
  if (data.size() != dims.count()) throw ValidationError("volume data size does not match dims " + dims.str());
  for (double s : spacing)
    if (!(s > 0.0)) throw ValidationError("voxel spacing must be strictly positive");
  if (std::abs(affine.block<3, 3>(0, 0).determinant()) < 1e-12) throw ValidationError("affine is not invertible");
}

LabelSet default_label_set() {
  return {{1, "MYO"}, {2, "LAC"}, {3, "LVC"}, {4, "RAC"}, {5, "RVC"}, {6, "AA"}, {7, "PA"}};
}

LabelSet mmwhs_label_set() {
  return {{205, "MYO"}, {420, "LAC"}, {500, "LVC"}, {550, "RAC"}, {600, "RVC"}, {820, "AA"}, {850, "PA"}};
}

LabelMap::LabelMap(Dims d, LabelSet labels) : dims(d), data(d.count(), 0), label_set(std::move(labels)) {}

LabelMap LabelMap::like(const Volume& v, LabelSet labels) {
  LabelMap m(v.dims, std::move(labels));
  m.spacing = v.spacing;
  m.affine = v.affine;
  return m;
}

std::size_t LabelMap::count(std::int32_t label) const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), label));
}

std::vector<std::int32_t> LabelMap::present_values() const {
  std::set<std::int32_t> s(data.begin(), data.end());
  return {s.begin(), s.end()};
}

void LabelMap::validate() const {
  if (dims.x < 1 || dims.y < 1 || dims.z < 1) throw ValidationError("label map must have 3 spatial dimensions, each >= 1");
  if (data.size() != dims.count()) throw ValidationError("label data size does not match dims " + dims.str());
  std::set<std::int32_t> allowed{0};
  for (const auto& l : label_set) allowed.insert(l.id);
  for (std::int32_t v : present_values()) {
    if (v < 0) throw ValidationError("negative label value " + std::to_string(v));
    if (!label_set.empty() && !allowed.contains(v))
      throw ValidationError("label value " + std::to_string(v) + " is not in the label set");
  }
}

std::string to_string(Domain d) { return d == Domain::A ? "A" : "B"; }

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::original:
      return "original";
    case Provenance::augmented:
      return "augmented";
    case Provenance::synthesized:
      return "synthesized";
  }
  return "original";
}

Domain parse_domain(const std::string& s) {
  if (s == "A" || s == "a") return Domain::A;
  if (s == "B" || s == "b") return Domain::B;
  throw ValidationError("unknown domain '" + s + "' (expected A or B)");
}

Provenance parse_provenance(const std::string& s) {
  if (s == "original") return Provenance::original;
  if (s == "augmented") return Provenance::augmented;
  if (s == "synthesized") return Provenance::synthesized;
  throw ValidationError("unknown provenance '" + s + "'");
}

void Sample::validate() const {
  volume.validate();
  labels.validate();
  if (volume.dims != labels.dims)
    throw ShapeError("volume " + volume.dims.str() + " and labels " + labels.dims.str() + " differ in shape");
  if (!geometry_matches(volume.spacing, labels.spacing, volume.affine, labels.affine))
    throw ValidationError("volume and labels differ in spacing or affine");
}

}  // namespace scgan
