#pragma once

#include <array>
#include <utility>

#include "scgan/volume.hpp"

namespace scgan {

/// Reorders and flips voxel axes so the result is RAS. World coordinates of
/// every voxel are unchanged; applying it twice is the same as once.
Volume to_ras(const Volume& v);
LabelMap to_ras(const LabelMap& m);

/// Resamples to target_xy x target_xy x Z where Z keeps the original
/// x-to-z extent ratio: Z = round(Z0 * target_xy / X0). Trilinear for
/// intensities, nearest-neighbour for labels; physical extent is preserved.
/// Non-square XY input is still mapped to a square grid, with a warning.
std::pair<Volume, LabelMap> resize_ct(const Volume& v, const LabelMap& labels, int target_xy = 256);

/// Half-open box [x0,x1) x [y0,y1) x [z0,z1).
struct CropBox {
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0, z0 = 0, z1 = 0;

  static CropBox full(const Dims& d) { return {0, d.x, 0, d.y, 0, d.z}; }
  [[nodiscard]] Dims dims() const { return {x1 - x0, y1 - y0, z1 - z0}; }
  /// Throws ValidationError when empty, inverted or outside `bounds`.
  void check(const Dims& bounds) const;
};

std::pair<Volume, LabelMap> crop(const Volume& v, const LabelMap& labels, const CropBox& box);

/// Voxel-space resampling helpers shared by resize and augmentation.
/// `sample_linear` clamps coordinates to the grid; `sample_linear_fill` and
/// `sample_nearest_fill` return `fill` outside it.
double sample_linear(const Volume& v, double x, double y, double z);
double sample_linear_fill(const Volume& v, double x, double y, double z, double fill);
std::int32_t sample_nearest_fill(const LabelMap& m, double x, double y, double z, std::int32_t fill);

}  // namespace scgan
