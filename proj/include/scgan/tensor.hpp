#pragma once

#include <span>
#include <vector>

#include "scgan/common.hpp"

namespace scgan {

/// Dense (channels, x, y, z) float64 activation map for a single sample.
/// Layout is channel-major with x fastest, matching Volume.
struct Tensor {
  int channels = 0;
  Dims dims;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, Dims d, double fill = 0.0) : channels(c), dims(d), data(static_cast<std::size_t>(c) * d.count(), fill) {}

  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] std::size_t voxels() const { return dims.count(); }
  [[nodiscard]] bool same_shape(const Tensor& o) const { return channels == o.channels && dims == o.dims; }
  [[nodiscard]] std::string shape_str() const { return "(" + std::to_string(channels) + ", " + dims.str() + ")"; }

  double& at(int c, int i, int j, int k) { return data[static_cast<std::size_t>(c) * voxels() + dims.index(i, j, k)]; }
  [[nodiscard]] double at(int c, int i, int j, int k) const {
    return data[static_cast<std::size_t>(c) * voxels() + dims.index(i, j, k)];
  }
  [[nodiscard]] std::span<const double> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
  }
  std::span<double> channel(int c) { return {data.data() + static_cast<std::size_t>(c) * voxels(), voxels()}; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  Tensor& operator+=(const Tensor& o);
};

/// Per-voxel softmax over channels.
Tensor softmax(const Tensor& logits);

/// Per-voxel argmax over channels, returned as class indices.
std::vector<int> argmax_channels(const Tensor& t);

/// One-hot encoding of class indices into `classes` channels.
Tensor one_hot(std::span<const int> classes, int n_classes, Dims dims);

}  // namespace scgan
