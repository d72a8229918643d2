#include "scgan/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace scgan::layers {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using ColMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using StridedColMap = Eigen::Map<ColMat, 0, Eigen::OuterStride<>>;
using ConstStridedColMap = Eigen::Map<const ColMat, 0, Eigen::OuterStride<>>;

// im2col entries per block; 2 MiB of doubles keeps the GEMM operand in L2.
constexpr std::size_t kBlockEntries = std::size_t{1} << 18;

struct AxisRange {
  int lo = 0;
  int hi = 0;  // exclusive
};

/// Output positions o for which o*s - p + kk lands inside [0, n).
AxisRange valid_outputs(int n, int out_n, int s, int p, int kk) {
  AxisRange r;
  const int first = p - kk;
  r.lo = first <= 0 ? 0 : (first + s - 1) / s;
  const int last = n - 1 + p - kk;
  r.hi = last < 0 ? 0 : std::min(out_n, last / s + 1);
  if (r.hi < r.lo) r.hi = r.lo;
  return r;
}

class Im2Col {
 public:
  Im2Col(const Dims& in, const Dims& out, const ConvGeometry& g) : in_(in), out_(out), g_(g) {
    const int k = g.kernel;
    x_ranges_.resize(k);
    for (int kk = 0; kk < k; ++kk) x_ranges_[kk] = valid_outputs(in.x, out.x, g.stride, g.padding, kk);
  }

  [[nodiscard]] std::size_t rows() const {
    return static_cast<std::size_t>(g_.in_channels) * g_.kernel * g_.kernel * g_.kernel;
  }

  /// Fills col (rows x ncols) for flattened output rows [r0, r1), where an
  /// output row is one (oz, oy) line of out.x voxels.
  void gather(const double* x, int r0, int r1, double* col) const {
    const int k = g_.kernel, s = g_.stride, p = g_.padding;
    const std::size_t ncols = static_cast<std::size_t>(r1 - r0) * out_.x;
    const std::size_t in_plane = static_cast<std::size_t>(in_.x) * in_.y;
    std::size_t r = 0;
    for (int ci = 0; ci < g_.in_channels; ++ci) {
      const double* xc = x + static_cast<std::size_t>(ci) * in_plane * in_.z;
      for (int kz = 0; kz < k; ++kz)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx, ++r) {
            double* dst = col + r * ncols;
            const AxisRange xr = x_ranges_[kx];
            for (int row = r0; row < r1; ++row, dst += out_.x) {
              const int oz = row / out_.y;
              const int oy = row - oz * out_.y;
              const int iz = oz * s - p + kz;
              const int iy = oy * s - p + ky;
              if (iz < 0 || iz >= in_.z || iy < 0 || iy >= in_.y) {
                std::fill(dst, dst + out_.x, 0.0);
                continue;
              }
              const double* src = xc + iz * in_plane + static_cast<std::size_t>(iy) * in_.x;
              std::fill(dst, dst + xr.lo, 0.0);
              if (s == 1) {
                std::copy(src + xr.lo - p + kx, src + xr.hi - p + kx, dst + xr.lo);
              } else {
                for (int ox = xr.lo; ox < xr.hi; ++ox) dst[ox] = src[ox * s - p + kx];
              }
              std::fill(dst + xr.hi, dst + out_.x, 0.0);
            }
          }
    }
  }

  /// Scatter-adds col back into dx for flattened output rows [r0, r1).
  void scatter(const double* col, int r0, int r1, double* dx) const {
    const int k = g_.kernel, s = g_.stride, p = g_.padding;
    const std::size_t ncols = static_cast<std::size_t>(r1 - r0) * out_.x;
    const std::size_t in_plane = static_cast<std::size_t>(in_.x) * in_.y;
    std::size_t r = 0;
    for (int ci = 0; ci < g_.in_channels; ++ci) {
      double* xc = dx + static_cast<std::size_t>(ci) * in_plane * in_.z;
      for (int kz = 0; kz < k; ++kz)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx, ++r) {
            const double* src = col + r * ncols;
            const AxisRange xr = x_ranges_[kx];
            for (int row = r0; row < r1; ++row, src += out_.x) {
              const int oz = row / out_.y;
              const int oy = row - oz * out_.y;
              const int iz = oz * s - p + kz;
              const int iy = oy * s - p + ky;
              if (iz < 0 || iz >= in_.z || iy < 0 || iy >= in_.y) continue;
              double* dst = xc + iz * in_plane + static_cast<std::size_t>(iy) * in_.x;
              for (int ox = xr.lo; ox < xr.hi; ++ox) dst[ox * s - p + kx] += src[ox];
            }
          }
    }
  }

  [[nodiscard]] int total_rows() const { return out_.y * out_.z; }

  /// Output rows per block, sized so the column buffer stays cache resident.
  [[nodiscard]] int rows_per_block() const {
    const std::size_t per_row = rows() * static_cast<std::size_t>(out_.x);
    return static_cast<int>(std::clamp<std::size_t>(kBlockEntries / std::max<std::size_t>(per_row, 1), 1,
                                                    static_cast<std::size_t>(total_rows())));
  }

 private:
  Dims in_;
  Dims out_;
  ConvGeometry g_;
  std::vector<AxisRange> x_ranges_;
};

void check_conv_input(const Tensor& x, const ConvGeometry& g, std::size_t weights, std::size_t biases) {
  if (x.channels != g.in_channels)
    throw ShapeError("conv expects " + std::to_string(g.in_channels) + " input channels, got " +
                     std::to_string(x.channels));
  if (weights != g.weight_count() || biases != static_cast<std::size_t>(g.out_channels))
    throw ShapeError("conv parameter size mismatch");
}

}  // namespace

Dims ConvGeometry::output_dims(const Dims& in) const {
  Dims out;
  for (int a = 0; a < 3; ++a) {
    const int span = in[a] + 2 * padding - kernel;
    if (span < 0) throw ShapeError("axis " + std::to_string(a) + " of size " + std::to_string(in[a]) +
                                   " is too small for a kernel of " + std::to_string(kernel));
    out[a] = span / stride + 1;
  }
  return out;
}

Tensor conv3d_forward(const Tensor& x, const ConvGeometry& g, std::span<const double> weight,
                      std::span<const double> bias) {
  check_conv_input(x, g, weight.size(), bias.size());
  const Dims od = g.output_dims(x.dims);
  Tensor y(g.out_channels, od);
  const Im2Col im(x.dims, od, g);
  const std::size_t K = im.rows();
  const int block = im.rows_per_block();
  std::vector<double> col(K * static_cast<std::size_t>(block) * od.x);
  const Eigen::Map<const ColMat> wt(weight.data(), static_cast<Eigen::Index>(K), g.out_channels);

  for (int r0 = 0; r0 < im.total_rows(); r0 += block) {
    const int r1 = std::min(im.total_rows(), r0 + block);
    const auto ncols = static_cast<Eigen::Index>(static_cast<std::size_t>(r1 - r0) * od.x);
    im.gather(x.data.data(), r0, r1, col.data());
    // Y^T = C^T W^T keeps the long voxel axis as the GEMM row axis.
    const Eigen::Map<const ColMat> ct(col.data(), ncols, static_cast<Eigen::Index>(K));
    StridedColMap out(y.data.data() + static_cast<std::size_t>(r0) * od.x, ncols, g.out_channels,
                      Eigen::OuterStride<>(static_cast<Eigen::Index>(y.voxels())));
    out.noalias() = ct * wt;
  }
  for (int co = 0; co < g.out_channels; ++co) {
    auto ch = y.channel(co);
    const double b = bias[co];
    for (double& v : ch) v += b;
  }
  return y;
}

void conv3d_backward(const Tensor& x, const Tensor& dy, const ConvGeometry& g, std::span<const double> weight,
                     std::span<double> dweight, std::span<double> dbias, Tensor* dx) {
  check_conv_input(x, g, weight.size(), dbias.size());
  const Dims od = g.output_dims(x.dims);
  if (dy.channels != g.out_channels || dy.dims != od) throw ShapeError("conv output gradient has wrong shape");
  if (dweight.size() != weight.size()) throw ShapeError("conv weight gradient size mismatch");

  const Im2Col im(x.dims, od, g);
  const std::size_t K = im.rows();
  const int block = im.rows_per_block();
  std::vector<double> col(K * static_cast<std::size_t>(block) * od.x);
  Eigen::Map<ColMat> dwt(dweight.data(), static_cast<Eigen::Index>(K), g.out_channels);

  // Stride-1 input gradients are a full correlation with the flipped kernel,
  // which is far cheaper than scattering a Cin*k^3 column buffer.
  const bool transposed_dx = dx != nullptr && g.stride == 1 && g.kernel - 1 - g.padding >= 0;
  std::vector<double> dcol(dx != nullptr && !transposed_dx ? col.size() : 0);
  const Eigen::Map<const RowMat> w(weight.data(), g.out_channels, static_cast<Eigen::Index>(K));
  if (dx != nullptr && !transposed_dx) *dx = Tensor(x.channels, x.dims);

  for (int r0 = 0; r0 < im.total_rows(); r0 += block) {
    const int r1 = std::min(im.total_rows(), r0 + block);
    const auto ncols = static_cast<Eigen::Index>(static_cast<std::size_t>(r1 - r0) * od.x);
    const ConstStridedColMap gyt(dy.data.data() + static_cast<std::size_t>(r0) * od.x, ncols, g.out_channels,
                                 Eigen::OuterStride<>(static_cast<Eigen::Index>(dy.voxels())));
    im.gather(x.data.data(), r0, r1, col.data());
    const Eigen::Map<const ColMat> ct(col.data(), ncols, static_cast<Eigen::Index>(K));
    dwt.noalias() += ct.transpose() * gyt;
    if (dx != nullptr && !transposed_dx) {
      Eigen::Map<ColMat> dct(dcol.data(), ncols, static_cast<Eigen::Index>(K));
      dct.noalias() = gyt * w;
      im.scatter(dcol.data(), r0, r1, dx->data.data());
    }
  }
  for (int co = 0; co < g.out_channels; ++co) {
    double s = 0.0;
    for (double v : dy.channel(co)) s += v;
    dbias[co] += s;
  }

  if (transposed_dx) {
    const int k = g.kernel;
    const ConvGeometry tg{g.out_channels, g.in_channels, k, 1, k - 1 - g.padding};
    std::vector<double> flipped(weight.size());
    const std::size_t k3 = static_cast<std::size_t>(k) * k * k;
    for (int co = 0; co < g.out_channels; ++co)
      for (int ci = 0; ci < g.in_channels; ++ci) {
        const double* src = weight.data() + (static_cast<std::size_t>(co) * g.in_channels + ci) * k3;
        double* dst = flipped.data() + (static_cast<std::size_t>(ci) * g.out_channels + co) * k3;
        for (std::size_t t = 0; t < k3; ++t) dst[t] = src[k3 - 1 - t];
      }
    const std::vector<double> zero_bias(static_cast<std::size_t>(g.in_channels), 0.0);
    *dx = conv3d_forward(dy, tg, flipped, zero_bias);
    if (dx->dims != x.dims) throw ShapeError("transposed convolution produced an unexpected shape");
  }
}

Tensor instance_norm_forward(const Tensor& x, std::vector<double>& inv_std) {
  Tensor y(x.channels, x.dims);
  inv_std.assign(x.channels, 0.0);
  const double n = static_cast<double>(x.voxels());
  for (int c = 0; c < x.channels; ++c) {
    const auto in = x.channel(c);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double is = 1.0 / std::sqrt(var + kNormEpsilon);
    inv_std[c] = is;
    auto out = y.channel(c);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - mean) * is;
  }
  return y;
}

Tensor instance_norm_backward(const Tensor& normalized, std::span<const double> inv_std, const Tensor& dy) {
  if (!normalized.same_shape(dy)) throw ShapeError("instance norm gradient has wrong shape");
  Tensor dx(dy.channels, dy.dims);
  const double n = static_cast<double>(dy.voxels());
  for (int c = 0; c < dy.channels; ++c) {
    const auto g = dy.channel(c);
    const auto yh = normalized.channel(c);
    double mean_g = 0.0, mean_gy = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      mean_g += g[i];
      mean_gy += g[i] * yh[i];
    }
    mean_g /= n;
    mean_gy /= n;
    auto out = dx.channel(c);
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = inv_std[c] * (g[i] - mean_g - yh[i] * mean_gy);
  }
  return dx;
}

void leaky_relu_inplace(Tensor& x, double slope) {
  for (double& v : x.data)
    if (v < 0.0) v *= slope;
}

void leaky_relu_backward_inplace(const Tensor& out, Tensor& dy, double slope) {
  for (std::size_t i = 0; i < dy.data.size(); ++i)
    if (out.data[i] < 0.0) dy.data[i] *= slope;
}

void tanh_inplace(Tensor& x) {
  for (double& v : x.data) v = std::tanh(v);
}

void tanh_backward_inplace(const Tensor& out, Tensor& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) dy.data[i] *= 1.0 - out.data[i] * out.data[i];
}

Tensor upsample_nearest2(const Tensor& x) {
  const Dims od{x.dims.x * 2, x.dims.y * 2, x.dims.z * 2};
  Tensor y(x.channels, od);
  for (int c = 0; c < x.channels; ++c)
    for (int k = 0; k < od.z; ++k)
      for (int j = 0; j < od.y; ++j) {
        double* dst = &y.at(c, 0, j, k);
        const double* src = x.data.data() + static_cast<std::size_t>(c) * x.voxels() + x.dims.index(0, j / 2, k / 2);
        for (int i = 0; i < od.x; ++i) dst[i] = src[i / 2];
      }
  return y;
}

Tensor upsample_nearest2_backward(const Tensor& dy) {
  if (dy.dims.x % 2 != 0 || dy.dims.y % 2 != 0 || dy.dims.z % 2 != 0)
    throw ShapeError("upsample gradient must have even dims");
  const Dims id{dy.dims.x / 2, dy.dims.y / 2, dy.dims.z / 2};
  Tensor dx(dy.channels, id);
  for (int c = 0; c < dy.channels; ++c)
    for (int k = 0; k < dy.dims.z; ++k)
      for (int j = 0; j < dy.dims.y; ++j) {
        const double* src = dy.data.data() + static_cast<std::size_t>(c) * dy.voxels() + dy.dims.index(0, j, k);
        double* dst = &dx.at(c, 0, j / 2, k / 2);
        for (int i = 0; i < dy.dims.x; ++i) dst[i / 2] += src[i];
      }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.dims != b.dims) throw ShapeError("cannot concatenate " + a.shape_str() + " and " + b.shape_str());
  Tensor out(a.channels + b.channels, a.dims);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

void split_channels(const Tensor& t, int first_channels, Tensor& a, Tensor& b) {
  a = Tensor(first_channels, t.dims);
  b = Tensor(t.channels - first_channels, t.dims);
  std::copy(t.data.begin(), t.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()), a.data.begin());
  std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()), t.data.end(), b.data.begin());
}

}  // namespace scgan::layers
