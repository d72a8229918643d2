#pragma once

#include <string>

#include "scgan/networks.hpp"
#include "scgan/tensor.hpp"

namespace scgan {

/// Trade-off weights of the generator objective.
struct LossWeights {
  double lambda_adv = 1.0;
  double lambda_cycle = 10.0;
  double lambda_spatial = 1.0;

  /// Each weight >= 0 and at least one > 0.
  void validate() const;
};

struct DiceOptions {
  /// Added to each class denominator only, so a class absent from both the
  /// prediction and the ground truth contributes 0 and the loss stays in [-1, 0].
  double smooth = 1e-5;
  bool include_background = false;
};

/// Named loss terms for one translation direction.
struct LossReport {
  double adv = 0.0;
  double cycle = 0.0;
  double spatial = 0.0;
  double ce = 0.0;
  double dice = 0.0;
  double total = 0.0;
};

/// Least-squares generator loss: mean((s - 1)^2). Optional gradient w.r.t. scores.
double adv_loss_generator(const Tensor& scores_on_fake, Tensor* grad = nullptr);

/// Least-squares discriminator loss: 0.5 mean((real - 1)^2) + 0.5 mean(fake^2).
double adv_loss_discriminator(const Tensor& scores_on_real, const Tensor& scores_on_fake, Tensor* grad_real = nullptr,
                              Tensor* grad_fake = nullptr);

/// Mean absolute reconstruction error (1/N) sum |x - x_rec|. Gradient w.r.t. x_rec.
double cycle_loss(const Tensor& x, const Tensor& x_reconstructed, Tensor* grad = nullptr);

/// -(2/|K|) sum_k sum_i u v / (sum_i u + sum_i v + smooth) over probabilities u
/// and one-hot v. Gradient w.r.t. u.
double dice_loss(const Tensor& probs, const Tensor& one_hot, const DiceOptions& opt = {}, Tensor* grad = nullptr);

/// Mean over voxels of -log softmax(logits)[true class]. Gradient w.r.t. logits.
double ce_loss(const Tensor& logits, const Tensor& one_hot, Tensor* grad = nullptr);

struct SpatialParts {
  double ce = 0.0;
  double dice = 0.0;
  [[nodiscard]] double total() const { return ce + dice; }
};

/// Cross-entropy + Dice on logits. Gradient w.r.t. logits.
SpatialParts spatial_loss(const Tensor& logits, const Tensor& one_hot, const DiceOptions& opt = {},
                          Tensor* grad = nullptr);

/// lambda_adv * adv + lambda_cycle * cycle + lambda_spatial * spatial.
double generator_total_loss(const LossReport& parts, const LossWeights& w);

/// Fills report.total from the parts.
void finalize(LossReport& report, const LossWeights& w);

/// Spatial loss of segmentor(x) against the labels. When `backprop` is set,
/// parameter gradients accumulate into the segmentor.
SpatialParts seg_loss(Model& segmentor, const Tensor& x, const Tensor& one_hot, const DiceOptions& opt = {},
                      bool backprop = false);

/// Spatial loss of segmentor_other(generator(x)) against the source labels.
/// Gradients accumulate into both networks when `backprop` is set.
SpatialParts seg_syn_loss(Model& generator, Model& segmentor_other, const Tensor& x, const Tensor& one_hot,
                          const DiceOptions& opt = {}, bool backprop = false);

}  // namespace scgan
