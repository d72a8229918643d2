#pragma once

#include <span>
#include <vector>

#include "scgan/tensor.hpp"

namespace scgan::layers {

/// Cubic kernel, isotropic stride and zero padding.
struct ConvGeometry {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  /// floor((d + 2p - k) / s) + 1 per axis; throws ShapeError when an axis
  /// collapses below one voxel.
  [[nodiscard]] Dims output_dims(const Dims& in) const;
  [[nodiscard]] std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel * kernel;
  }
};

/// Weights are laid out [out][in][kz][ky][kx].
Tensor conv3d_forward(const Tensor& x, const ConvGeometry& g, std::span<const double> weight,
                      std::span<const double> bias);

/// Accumulates into dweight/dbias. Writes the input gradient into *dx when
/// dx is non-null.
void conv3d_backward(const Tensor& x, const Tensor& dy, const ConvGeometry& g, std::span<const double> weight,
                     std::span<double> dweight, std::span<double> dbias, Tensor* dx);

constexpr double kNormEpsilon = 1e-5;

/// Instance normalization without affine parameters. Returns the normalized
/// tensor and fills per-channel inverse standard deviations.
Tensor instance_norm_forward(const Tensor& x, std::vector<double>& inv_std);
Tensor instance_norm_backward(const Tensor& normalized, std::span<const double> inv_std, const Tensor& dy);

void leaky_relu_inplace(Tensor& x, double slope);
/// Uses the activation output: out > 0 iff the pre-activation was > 0.
void leaky_relu_backward_inplace(const Tensor& out, Tensor& dy, double slope);

void tanh_inplace(Tensor& x);
void tanh_backward_inplace(const Tensor& out, Tensor& dy);

/// Nearest-neighbour x2 upsampling in every spatial axis.
Tensor upsample_nearest2(const Tensor& x);
Tensor upsample_nearest2_backward(const Tensor& dy);

/// Channel concatenation [a; b] and its inverse split.
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& t, int first_channels, Tensor& a, Tensor& b);

}  // namespace scgan::layers
