#include "scgan/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace scgan {

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o)) throw ShapeError("tensor shapes differ: " + shape_str() + " vs " + o.shape_str());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
  return *this;
}

Tensor softmax(const Tensor& logits) {
  Tensor out(logits.channels, logits.dims);
  const std::size_t n = logits.voxels();
  const int c = logits.channels;
  for (std::size_t v = 0; v < n; ++v) {
    double m = logits.data[v];
    for (int k = 1; k < c; ++k) m = std::max(m, logits.data[k * n + v]);
    double sum = 0.0;
    for (int k = 0; k < c; ++k) {
      const double e = std::exp(logits.data[k * n + v] - m);
      out.data[k * n + v] = e;
      sum += e;
    }
    for (int k = 0; k < c; ++k) out.data[k * n + v] /= sum;
  }
  return out;
}

std::vector<int> argmax_channels(const Tensor& t) {
  const std::size_t n = t.voxels();
  std::vector<int> out(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    double best = t.data[v];
    for (int k = 1; k < t.channels; ++k) {
      if (t.data[k * n + v] > best) {
        best = t.data[k * n + v];
        out[v] = k;
      }
    }
  }
  return out;
}

Tensor one_hot(std::span<const int> classes, int n_classes, Dims dims) {
  if (classes.size() != dims.count()) throw ShapeError("class map size does not match dims " + dims.str());
  Tensor out(n_classes, dims);
  const std::size_t n = dims.count();
  for (std::size_t v = 0; v < n; ++v) {
    const int c = classes[v];
    if (c < 0 || c >= n_classes) throw ValidationError("class index " + std::to_string(c) + " out of range");
    out.data[static_cast<std::size_t>(c) * n + v] = 1.0;
  }
  return out;
}

}  // namespace scgan
