#include "scgan/losses.hpp"

#include <cmath>

namespace scgan {
namespace {

void require_nonempty(const Tensor& t, const char* what) {
  if (t.size() == 0) throw ValidationError(std::string(what) + " is empty");
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": shape " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

void LossWeights::validate() const {
  if (lambda_adv < 0.0 || lambda_cycle < 0.0 || lambda_spatial < 0.0)
    throw ValidationError("loss weights must be non-negative");
  if (lambda_adv == 0.0 && lambda_cycle == 0.0 && lambda_spatial == 0.0)
    throw ValidationError("at least one loss weight must be positive");
}

double adv_loss_generator(const Tensor& scores, Tensor* grad) {
  require_nonempty(scores, "discriminator score map");
  const double n = static_cast<double>(scores.size());
  double sum = 0.0;
  for (double s : scores.data) sum += (s - 1.0) * (s - 1.0);
  if (grad != nullptr) {
    *grad = Tensor(scores.channels, scores.dims);
    for (std::size_t i = 0; i < scores.size(); ++i) grad->data[i] = 2.0 * (scores.data[i] - 1.0) / n;
  }
  return sum / n;
}

double adv_loss_discriminator(const Tensor& real, const Tensor& fake, Tensor* grad_real, Tensor* grad_fake) {
  require_nonempty(real, "real score map");
  require_nonempty(fake, "fake score map");
  const double nr = static_cast<double>(real.size());
  const double nf = static_cast<double>(fake.size());
  double sr = 0.0, sf = 0.0;
  for (double s : real.data) sr += (s - 1.0) * (s - 1.0);
  for (double s : fake.data) sf += s * s;
  if (grad_real != nullptr) {
    *grad_real = Tensor(real.channels, real.dims);
    for (std::size_t i = 0; i < real.size(); ++i) grad_real->data[i] = (real.data[i] - 1.0) / nr;
  }
  if (grad_fake != nullptr) {
    *grad_fake = Tensor(fake.channels, fake.dims);
    for (std::size_t i = 0; i < fake.size(); ++i) grad_fake->data[i] = fake.data[i] / nf;
  }
  return 0.5 * sr / nr + 0.5 * sf / nf;
}

double cycle_loss(const Tensor& x, const Tensor& rec, Tensor* grad) {
  require_same(x, rec, "cycle loss");
  require_nonempty(x, "cycle loss input");
  const double n = static_cast<double>(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += std::abs(x.data[i] - rec.data[i]);
  if (grad != nullptr) {
    *grad = Tensor(rec.channels, rec.dims);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = rec.data[i] - x.data[i];
      grad->data[i] = d > 0.0 ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0);
    }
  }
  return sum / n;
}

double dice_loss(const Tensor& probs, const Tensor& v, const DiceOptions& opt, Tensor* grad) {
  require_same(probs, v, "dice loss");
  require_nonempty(probs, "dice loss input");
  const std::size_t n = probs.voxels();
  const int classes = probs.channels;
  for (std::size_t i = 0; i < n; ++i) {
    double su = 0.0, sv = 0.0;
    for (int k = 0; k < classes; ++k) {
      su += probs.data[k * n + i];
      sv += v.data[k * n + i];
    }
    if (std::abs(su - 1.0) > 1e-5) throw ValidationError("dice loss: probabilities do not sum to 1 at a voxel");
    if (std::abs(sv - 1.0) > 1e-12) throw ValidationError("dice loss: ground truth is not one-hot");
  }
  const int first = opt.include_background ? 0 : 1;
  const int counted = classes - first;
  if (counted < 1) throw ValidationError("dice loss: no classes to average over");
  if (grad != nullptr) *grad = Tensor(classes, probs.dims);

  double sum = 0.0;
  for (int k = first; k < classes; ++k) {
    const auto u = probs.channel(k);
    const auto t = v.channel(k);
    double inter = 0.0, su = 0.0, sv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inter += u[i] * t[i];
      su += u[i];
      sv += t[i];
    }
    const double denom = su + sv + opt.smooth;
    sum += inter / denom;
    if (grad != nullptr) {
      auto g = grad->channel(k);
      const double scale = -2.0 / counted;
      for (std::size_t i = 0; i < n; ++i) g[i] = scale * (t[i] * denom - inter) / (denom * denom);
    }
  }
  return -2.0 / counted * sum;
}

double ce_loss(const Tensor& logits, const Tensor& v, Tensor* grad) {
  require_same(logits, v, "cross-entropy loss");
  require_nonempty(logits, "cross-entropy input");
  const std::size_t n = logits.voxels();
  const int classes = logits.channels;
  if (grad != nullptr) *grad = Tensor(classes, logits.dims);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = logits.data[i];
    for (int k = 1; k < classes; ++k) m = std::max(m, logits.data[k * n + i]);
    double z = 0.0;
    for (int k = 0; k < classes; ++k) z += std::exp(logits.data[k * n + i] - m);
    const double log_z = m + std::log(z);
    for (int k = 0; k < classes; ++k) {
      const double t = v.data[k * n + i];
      if (t != 0.0) sum += t * (log_z - logits.data[k * n + i]);
      if (grad != nullptr) grad->data[k * n + i] = (std::exp(logits.data[k * n + i] - log_z) - t) / static_cast<double>(n);
    }
  }
  return sum / static_cast<double>(n);
}

SpatialParts spatial_loss(const Tensor& logits, const Tensor& v, const DiceOptions& opt, Tensor* grad) {
  SpatialParts parts;
  Tensor g_ce;
  parts.ce = ce_loss(logits, v, grad != nullptr ? &g_ce : nullptr);
  const Tensor probs = softmax(logits);
  Tensor g_u;
  parts.dice = dice_loss(probs, v, opt, grad != nullptr ? &g_u : nullptr);
  if (grad != nullptr) {
    // Softmax Jacobian: dL/dz_c = p_c (g_c - sum_j p_j g_j).
    const std::size_t n = logits.voxels();
    const int classes = logits.channels;
    *grad = std::move(g_ce);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int k = 0; k < classes; ++k) dot += probs.data[k * n + i] * g_u.data[k * n + i];
      for (int k = 0; k < classes; ++k)
        grad->data[k * n + i] += probs.data[k * n + i] * (g_u.data[k * n + i] - dot);
    }
  }
  return parts;
}

double generator_total_loss(const LossReport& parts, const LossWeights& w) {
  return w.lambda_adv * parts.adv + w.lambda_cycle * parts.cycle + w.lambda_spatial * parts.spatial;
}

void finalize(LossReport& report, const LossWeights& w) { report.total = generator_total_loss(report, w); }

SpatialParts seg_loss(Model& segmentor, const Tensor& x, const Tensor& v, const DiceOptions& opt, bool backprop) {
  if (!backprop) return spatial_loss(segmentor.forward(x), v, opt);
  Tape tape;
  const Tensor logits = segmentor.forward(x, tape);
  Tensor g;
  const SpatialParts parts = spatial_loss(logits, v, opt, &g);
  segmentor.backward(tape, g, true);
  return parts;
}

SpatialParts seg_syn_loss(Model& generator, Model& segmentor_other, const Tensor& x, const Tensor& v,
                          const DiceOptions& opt, bool backprop) {
  if (!backprop) return spatial_loss(segmentor_other.forward(generator.forward(x)), v, opt);
  Tape gen_tape, seg_tape;
  const Tensor fake = generator.forward(x, gen_tape);
  const Tensor logits = segmentor_other.forward(fake, seg_tape);
  Tensor g;
  const SpatialParts parts = spatial_loss(logits, v, opt, &g);
  const Tensor d_fake = segmentor_other.backward(seg_tape, g, true);
  generator.backward(gen_tape, d_fake, true);
  return parts;
}

}  // namespace scgan
