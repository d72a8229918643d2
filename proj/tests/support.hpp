#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "scgan/rng.hpp"
#include "scgan/tensor.hpp"
#include "scgan/volume.hpp"

namespace test_support {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("scgan_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline scgan::Tensor random_tensor(int c, scgan::Dims d, scgan::Rng& rng, double lo = -1.0, double hi = 1.0) {
  scgan::Tensor t(c, d);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<int> random_classes(std::size_t n, int n_classes, scgan::Rng& rng) {
  std::vector<int> c(n);
  for (auto& v : c) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes)));
  return c;
}

inline scgan::Volume random_volume(scgan::Dims d, scgan::Rng& rng, double lo = 0.0, double hi = 1.0) {
  scgan::Volume v(d);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

// Naive oracles written against the textbook formulas with explicit loops.

/// -(2/|K|) sum over foreground classes k of sum(u v) / (sum u + sum v + eps).
inline double naive_dice_loss(const scgan::Tensor& u, const scgan::Tensor& v, double eps) {
  const int classes = u.channels;
  double total = 0.0;
  for (int k = 1; k < classes; ++k) {
    double inter = 0.0, su = 0.0, sv = 0.0;
    for (int z = 0; z < u.dims.z; ++z)
      for (int y = 0; y < u.dims.y; ++y)
        for (int x = 0; x < u.dims.x; ++x) {
          inter += u.at(k, x, y, z) * v.at(k, x, y, z);
          su += u.at(k, x, y, z);
          sv += v.at(k, x, y, z);
        }
    total += inter / (su + sv + eps);
  }
  return -2.0 / (classes - 1) * total;
}

/// Mean over voxels of -log(exp(l_t) / sum_c exp(l_c)).
inline double naive_ce_loss(const scgan::Tensor& logits, const scgan::Tensor& v) {
  double total = 0.0;
  for (int z = 0; z < logits.dims.z; ++z)
    for (int y = 0; y < logits.dims.y; ++y)
      for (int x = 0; x < logits.dims.x; ++x) {
        long double denom = 0.0L;
        double truth = 0.0;
        for (int c = 0; c < logits.channels; ++c) {
          denom += std::exp(static_cast<long double>(logits.at(c, x, y, z)));
          if (v.at(c, x, y, z) == 1.0) truth = logits.at(c, x, y, z);
        }
        total += static_cast<double>(std::log(denom)) - truth;
      }
  return total / static_cast<double>(logits.voxels());
}

/// 2|P ∩ T| / (|P| + |T|) by counting sets; 1 when both are empty.
inline double naive_dice_coefficient(const scgan::LabelMap& p, const scgan::LabelMap& t, std::int32_t label) {
  std::vector<std::size_t> ps, ts;
  for (int z = 0; z < p.dims.z; ++z)
    for (int y = 0; y < p.dims.y; ++y)
      for (int x = 0; x < p.dims.x; ++x) {
        if (p.at(x, y, z) == label) ps.push_back(p.dims.index(x, y, z));
        if (t.at(x, y, z) == label) ts.push_back(t.dims.index(x, y, z));
      }
  if (ps.empty() && ts.empty()) return 1.0;
  std::vector<std::size_t> both;
  std::set_intersection(ps.begin(), ps.end(), ts.begin(), ts.end(), std::back_inserter(both));
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(ps.size() + ts.size());
}

/// Central difference of f with respect to x[i].
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  int checked = 0;       // coordinates with a non-vanishing gradient
  double worst = 0.0;    // largest relative error among them
  int vanishing = 0;     // coordinates whose gradient is ~0 (e.g. biases ahead of a norm)
  double worst_abs = 0.0;  // largest |fd - analytic| / rms(grad) among those
  [[nodiscard]] bool passed(double rel_tol = 1e-3, double abs_tol = 1e-6) const {
    return worst < rel_tol && worst_abs < abs_tol;
  }
};

inline double rms(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

/// Draws random coordinates of x until `count` with a non-vanishing gradient
/// (|g| >= 1e-4 rms(g)) have been compared against central differences.
/// Relative error is undefined where the true gradient is zero, so those
/// coordinates are held to an absolute bound instead.
inline GradCheck check_gradient(const std::function<double()>& f, std::vector<double>& x,
                                const std::vector<double>& grad, int count, scgan::Rng& rng, double h = 1e-5) {
  GradCheck r;
  const double scale = rms(grad);
  for (int attempt = 0; r.checked < count && attempt < 100 * count; ++attempt) {
    const auto i = static_cast<std::size_t>(rng.below(x.size()));
    const double fd = central_difference(f, x[i], h);
    if (std::abs(grad[i]) < 1e-4 * scale) {
      r.worst_abs = std::max(r.worst_abs, std::abs(fd - grad[i]) / scale);
      ++r.vanishing;
    } else {
      r.worst = std::max(r.worst, relative_error(grad[i], fd));
      ++r.checked;
    }
  }
  if (r.checked < count) r.worst = std::numeric_limits<double>::infinity();
  return r;
}

}  // namespace test_support

#include "scgan/networks.hpp"

namespace test_support {

struct NetworkGradCheck {
  GradCheck params;
  GradCheck input;
};

/// Probe loss sum(w * net(x)) with fixed random w. Parameter and input
/// gradients from backward() are both compared with central differences.
inline NetworkGradCheck check_network_gradients(scgan::Model& net, scgan::Tensor x, int count, scgan::Rng& rng,
                                                double h = 1e-5) {
  const scgan::Tensor y0 = net.forward(x);
  const scgan::Tensor w = random_tensor(y0.channels, y0.dims, rng);
  auto probe = [&] {
    const scgan::Tensor y = net.forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w.data[i] * y.data[i];
    return s;
  };
  scgan::Tape tape;
  net.zero_grad();
  (void)net.forward(x, tape);
  const scgan::Tensor dx = net.backward(tape, w);
  const std::vector<double> grads = net.gradients();

  NetworkGradCheck r;
  r.params = check_gradient(probe, net.parameters(), grads, count, rng, h);
  r.input = check_gradient(probe, x.data, dx.data, count, rng, h);
  return r;
}

}  // namespace test_support

namespace test_support {

struct WorldContent {
  double worst_offset = 0.0;  // distance of mapped voxel centres from the source grid
  bool values_match = true;
};

/// Maps every voxel of `after` through its affine back into `before` and
/// compares intensities at the nearest source voxel.
inline WorldContent world_content(const scgan::Volume& before, const scgan::Volume& after) {
  const scgan::Affine inv = before.affine.inverse();
  WorldContent r;
  for (int k = 0; k < after.dims.z; ++k)
    for (int j = 0; j < after.dims.y; ++j)
      for (int i = 0; i < after.dims.x; ++i) {
        const Eigen::Vector4d p = inv * (after.affine * Eigen::Vector4d(i, j, k, 1.0));
        const Eigen::Vector3d q = p.head<3>().array().round();
        r.worst_offset = std::max(r.worst_offset, (p.head<3>() - q).cwiseAbs().maxCoeff());
        const int a = static_cast<int>(q.x()), b = static_cast<int>(q.y()), c = static_cast<int>(q.z());
        if (!before.dims.contains(a, b, c) || before.at(a, b, c) != after.at(i, j, k)) r.values_match = false;
      }
  return r;
}

/// Warps every one-hot channel with linear interpolation through `warp`, takes
/// the per-voxel argmax, and returns its agreement with the nearest-neighbour
/// warped labels over the voxels those labels mark as foreground.
template <class Warp>
double coregistration(const scgan::Sample& s, const Warp& warp) {
  const auto [img, nearest] = warp(s.volume, s.labels);
  std::vector<std::int32_t> ids{0};
  for (const auto& l : s.labels.label_set) ids.push_back(l.id);
  std::vector<scgan::Volume> channels;
  for (auto id : ids) {
    scgan::Volume c(s.volume.dims, s.volume.affine);
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] = s.labels.data[i] == id ? 1.0F : 0.0F;
    channels.push_back(warp(c, s.labels).first);
  }
  std::size_t labeled = 0, agree = 0;
  for (std::size_t i = 0; i < nearest.data.size(); ++i) {
    if (nearest.data[i] == 0) continue;
    std::size_t best = 0;
    for (std::size_t c = 1; c < channels.size(); ++c)
      if (channels[c].data[i] > channels[best].data[i]) best = c;
    ++labeled;
    if (ids[best] == nearest.data[i]) ++agree;
  }
  return labeled == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(labeled);
}

}  // namespace test_support
