#include "scgan/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "scgan/log.hpp"

namespace scgan {
namespace {

/// Index transform for to_ras: new_index -> old_index as a homogeneous matrix.
struct Reorder {
  Dims new_dims;
  Affine new_to_old = Affine::Identity();
};

Reorder ras_reorder(const Dims& dims, const Affine& affine) {
  const Orientation o = Orientation::from_affine(affine);
  Reorder r;
  r.new_to_old = Affine::Zero();
  r.new_to_old(3, 3) = 1.0;
  for (int j = 0; j < 3; ++j) {
    const int w = o.world_axis[j];
    r.new_dims[w] = dims[j];
    if (o.sign[j] > 0) {
      r.new_to_old(j, w) = 1.0;
    } else {
      r.new_to_old(j, w) = -1.0;
      r.new_to_old(j, 3) = dims[j] - 1;
    }
  }
  return r;
}

template <typename T>
std::vector<T> reorder_data(const std::vector<T>& src, const Dims& old_dims, const Reorder& r) {
  std::vector<T> out(r.new_dims.count());
  const Dims& nd = r.new_dims;
  for (int k = 0; k < nd.z; ++k)
    for (int j = 0; j < nd.y; ++j)
      for (int i = 0; i < nd.x; ++i) {
        const Eigen::Vector4d o = r.new_to_old * Eigen::Vector4d(i, j, k, 1.0);
        out[nd.index(i, j, k)] = src[old_dims.index(static_cast<int>(std::lround(o[0])), static_cast<int>(std::lround(o[1])),
                                                     static_cast<int>(std::lround(o[2])))];
      }
  return out;
}

struct AxisSample {
  int lo = 0;
  int hi = 0;
  double t = 0.0;
};

AxisSample axis_sample(double c, int n) {
  c = std::clamp(c, 0.0, static_cast<double>(n - 1));
  AxisSample s;
  s.lo = static_cast<int>(std::floor(c));
  s.hi = std::min(s.lo + 1, n - 1);
  s.t = c - s.lo;
  return s;
}

}  // namespace

Volume to_ras(const Volume& v) {
  v.validate();
  const Reorder r = ras_reorder(v.dims, v.affine);
  Volume out(r.new_dims, Affine(v.affine * r.new_to_old));
  out.data = reorder_data(v.data, v.dims, r);
  return out;
}

LabelMap to_ras(const LabelMap& m) {
  const Reorder r = ras_reorder(m.dims, m.affine);
  LabelMap out(r.new_dims, m.label_set);
  out.affine = m.affine * r.new_to_old;
  out.spacing = spacing_from_affine(out.affine);
  out.data = reorder_data(m.data, m.dims, r);
  return out;
}

double sample_linear(const Volume& v, double x, double y, double z) {
  const AxisSample sx = axis_sample(x, v.dims.x), sy = axis_sample(y, v.dims.y), sz = axis_sample(z, v.dims.z);
  const auto val = [&](int i, int j, int k) { return static_cast<double>(v.at(i, j, k)); };
  const double c00 = val(sx.lo, sy.lo, sz.lo) * (1 - sx.t) + val(sx.hi, sy.lo, sz.lo) * sx.t;
  const double c10 = val(sx.lo, sy.hi, sz.lo) * (1 - sx.t) + val(sx.hi, sy.hi, sz.lo) * sx.t;
  const double c01 = val(sx.lo, sy.lo, sz.hi) * (1 - sx.t) + val(sx.hi, sy.lo, sz.hi) * sx.t;
  const double c11 = val(sx.lo, sy.hi, sz.hi) * (1 - sx.t) + val(sx.hi, sy.hi, sz.hi) * sx.t;
  const double c0 = c00 * (1 - sy.t) + c10 * sy.t;
  const double c1 = c01 * (1 - sy.t) + c11 * sy.t;
  return c0 * (1 - sz.t) + c1 * sz.t;
}

double sample_linear_fill(const Volume& v, double x, double y, double z, double fill) {
  // Small tolerance so exact grid points on the border stay in-field.
  constexpr double kEdge = 1e-9;
  if (x < -kEdge || y < -kEdge || z < -kEdge || x > v.dims.x - 1 + kEdge || y > v.dims.y - 1 + kEdge ||
      z > v.dims.z - 1 + kEdge)
    return fill;
  return sample_linear(v, x, y, z);
}

std::int32_t sample_nearest_fill(const LabelMap& m, double x, double y, double z, std::int32_t fill) {
  const int i = static_cast<int>(std::lround(x));
  const int j = static_cast<int>(std::lround(y));
  const int k = static_cast<int>(std::lround(z));
  if (!m.dims.contains(i, j, k)) return fill;
  return m.at(i, j, k);
}

std::pair<Volume, LabelMap> resize_ct(const Volume& v, const LabelMap& labels, int target_xy) {
  v.validate();
  if (target_xy < 1) throw ValidationError("resize target must be >= 1");
  if (labels.dims != v.dims) throw ShapeError("labels " + labels.dims.str() + " do not match volume " + v.dims.str());
  if (v.dims.x != v.dims.y)
    log::warn("resize_ct: anisotropic in-plane grid " + v.dims.str() + " mapped to a square " +
              std::to_string(target_xy) + "x" + std::to_string(target_xy) + " grid");

  const int out_z = std::max(1, static_cast<int>(std::lround(static_cast<double>(v.dims.z) * target_xy / v.dims.x)));
  const Dims nd{target_xy, target_xy, out_z};
  const std::array<double, 3> scale{static_cast<double>(v.dims.x) / nd.x, static_cast<double>(v.dims.y) / nd.y,
                                    static_cast<double>(v.dims.z) / nd.z};

  // new index o -> old continuous index (o + 0.5) * s - 0.5
  Affine t = Affine::Identity();
  for (int a = 0; a < 3; ++a) {
    t(a, a) = scale[a];
    t(a, 3) = 0.5 * scale[a] - 0.5;
  }
  Volume out(nd, Affine(v.affine * t));
  LabelMap out_labels(nd, labels.label_set);
  out_labels.affine = out.affine;
  out_labels.spacing = out.spacing;

  for (int k = 0; k < nd.z; ++k) {
    const double z = (k + 0.5) * scale[2] - 0.5;
    for (int j = 0; j < nd.y; ++j) {
      const double y = (j + 0.5) * scale[1] - 0.5;
      for (int i = 0; i < nd.x; ++i) {
        const double x = (i + 0.5) * scale[0] - 0.5;
        out.at(i, j, k) = static_cast<float>(sample_linear(v, x, y, z));
        const int li = std::clamp(static_cast<int>(std::lround(x)), 0, v.dims.x - 1);
        const int lj = std::clamp(static_cast<int>(std::lround(y)), 0, v.dims.y - 1);
        const int lk = std::clamp(static_cast<int>(std::lround(z)), 0, v.dims.z - 1);
        out_labels.at(i, j, k) = labels.at(li, lj, lk);
      }
    }
  }
  return {std::move(out), std::move(out_labels)};
}

void CropBox::check(const Dims& bounds) const {
  if (x0 >= x1 || y0 >= y1 || z0 >= z1)
    throw ValidationError("crop box is empty or inverted (need x0<x1, y0<y1, z0<z1)");
  if (x0 < 0 || y0 < 0 || z0 < 0 || x1 > bounds.x || y1 > bounds.y || z1 > bounds.z)
    throw ValidationError("crop box exceeds volume bounds " + bounds.str());
}

std::pair<Volume, LabelMap> crop(const Volume& v, const LabelMap& labels, const CropBox& box) {
  v.validate();
  if (labels.dims != v.dims) throw ShapeError("labels " + labels.dims.str() + " do not match volume " + v.dims.str());
  box.check(v.dims);
  const Dims nd = box.dims();
  Affine shift = Affine::Identity();
  shift(0, 3) = box.x0;
  shift(1, 3) = box.y0;
  shift(2, 3) = box.z0;
  Volume out(nd, Affine(v.affine * shift));
  LabelMap out_labels(nd, labels.label_set);
  out_labels.affine = labels.affine * shift;
  out_labels.spacing = labels.spacing;
  for (int k = 0; k < nd.z; ++k)
    for (int j = 0; j < nd.y; ++j)
      for (int i = 0; i < nd.x; ++i) {
        out.at(i, j, k) = v.at(i + box.x0, j + box.y0, k + box.z0);
        out_labels.at(i, j, k) = labels.at(i + box.x0, j + box.y0, k + box.z0);
      }
  return {std::move(out), std::move(out_labels)};
}

}  // namespace scgan
