#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scgan/losses.hpp"
#include "support.hpp"

using namespace scgan;
using test_support::random_tensor;

namespace {

Tensor filled(int c, Dims d, double v) { return Tensor(c, d, v); }

Tensor from_values(std::vector<double> v) {
  Tensor t(1, {static_cast<int>(v.size()), 1, 1});
  t.data = std::move(v);
  return t;
}

Tensor random_one_hot(int classes, Dims d, Rng& rng) {
  const auto c = test_support::random_classes(d.count(), classes, rng);
  return one_hot(c, classes, d);
}

Tensor confident_logits(const Tensor& v, double margin) {
  Tensor l = v;
  for (auto& x : l.data) x *= margin;
  return l;
}

}  // namespace

TEST_CASE("least-squares adversarial losses") {
  const Dims d{2, 2, 2};
  CHECK(adv_loss_generator(filled(1, d, 1.0)) == 0.0);
  CHECK(adv_loss_generator(filled(1, d, 0.0)) == 1.0);
  CHECK(adv_loss_generator(from_values({0.5, 1.5})) == doctest::Approx(0.25));
  CHECK(adv_loss_discriminator(filled(1, d, 1.0), filled(1, d, 0.0)) == 0.0);
  CHECK(adv_loss_discriminator(filled(1, d, 0.0), filled(1, d, 1.0)) == doctest::Approx(1.0));
  CHECK(adv_loss_discriminator(filled(1, d, 0.5), filled(1, d, 0.5)) == doctest::Approx(0.25));
  CHECK_THROWS_AS(adv_loss_generator(Tensor()), ValidationError);
}

TEST_CASE("cycle loss") {
  Rng rng(1);
  const Tensor x = random_tensor(1, {4, 4, 4}, rng);
  CHECK(cycle_loss(x, x) == 0.0);
  CHECK(cycle_loss(filled(1, {3, 3, 3}, 0.0), filled(1, {3, 3, 3}, 1.0)) == 1.0);
  CHECK(cycle_loss(from_values({0, 2}), from_values({1, 1})) == 1.0);
  CHECK(cycle_loss(x, random_tensor(1, {4, 4, 4}, rng)) > 0.0);
  CHECK_THROWS_AS(cycle_loss(x, Tensor(1, {4, 4, 3})), ShapeError);
}

TEST_CASE("dice loss limits") {
  Rng rng(2);
  const Tensor v = random_one_hot(5, {6, 6, 6}, rng);
  CHECK(dice_loss(v, v) == doctest::Approx(-1.0).epsilon(1e-6));

  // All probability on background wherever a foreground voxel is labelled.
  Tensor disjoint(2, {4, 4, 4});
  Tensor truth(2, {4, 4, 4});
  for (std::size_t i = 0; i < 64; ++i) {
    const bool fg = i < 10;
    truth.data[i] = fg ? 0.0 : 1.0;
    truth.data[64 + i] = fg ? 1.0 : 0.0;
    disjoint.data[i] = fg ? 1.0 : 0.0;
    disjoint.data[64 + i] = fg ? 0.0 : 1.0;
  }
  CHECK(std::abs(dice_loss(disjoint, truth)) < 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    const Tensor u = softmax(random_tensor(4, {4, 4, 4}, rng, -3, 3));
    const double l = dice_loss(u, random_one_hot(4, {4, 4, 4}, rng));
    CHECK(l >= -1.0);
    CHECK(l <= 0.0);
  }
}

TEST_CASE("dice loss with a class absent from both sides") {
  Tensor v(3, {2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) v.data[i < 4 ? i : 8 + i] = 1.0;  // classes 0 and 1 only
  CHECK(dice_loss(v, v) == doctest::Approx(-0.5).epsilon(1e-6));
}

TEST_CASE("uniform prediction against one foreground class") {
  const int n = 64, f = 11;
  Tensor u(2, {4, 4, 4}, 0.5);
  Tensor v(2, {4, 4, 4});
  for (int i = 0; i < n; ++i) v.data[static_cast<std::size_t>(i < f ? n + i : i)] = 1.0;
  const double eps = DiceOptions{}.smooth;
  const double term = (f / 2.0) / (n / 2.0 + f + eps);
  CHECK(dice_loss(u, v) == doctest::Approx(-2.0 * term).epsilon(1e-12));
  CHECK(dice_loss(u, v) == doctest::Approx(test_support::naive_dice_loss(u, v, eps)).epsilon(1e-12));
  const Tensor zero_logits(2, {4, 4, 4}, 0.0);
  CHECK(spatial_loss(zero_logits, v).total() ==
        doctest::Approx(std::log(2.0) + test_support::naive_dice_loss(u, v, eps)).epsilon(1e-12));
}

TEST_CASE("cross-entropy") {
  Rng rng(3);
  const Tensor v = random_one_hot(3, {4, 4, 4}, rng);
  CHECK(ce_loss(confident_logits(v, 25.0), v) < 1e-8);
  CHECK(ce_loss(Tensor(2, {4, 4, 4}, 0.0), random_one_hot(2, {4, 4, 4}, rng)) == doctest::Approx(std::log(2.0)));

  Tensor logits = random_tensor(3, {1, 1, 1}, rng);
  Tensor truth(3, {1, 1, 1});
  truth.data[1] = 1.0;
  double last = ce_loss(logits, truth);
  for (double bump : {0.5, 1.0, 2.0}) {
    logits.data[1] += bump;
    const double now = ce_loss(logits, truth);
    CHECK(now < last);
    last = now;
  }
  CHECK_THROWS_AS(ce_loss(logits, Tensor(2, {1, 1, 1})), ShapeError);
}

TEST_CASE("spatial loss is ce plus dice") {
  Rng rng(4);
  const Tensor v = random_one_hot(4, {5, 5, 5}, rng);
  CHECK(spatial_loss(confident_logits(v, 40.0), v).total() == doctest::Approx(-1.0).epsilon(1e-6));
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor logits = random_tensor(4, {5, 5, 5}, rng, -4, 4);
    const Tensor t = random_one_hot(4, {5, 5, 5}, rng);
    const SpatialParts p = spatial_loss(logits, t);
    CHECK(std::abs(p.total() - (ce_loss(logits, t) + dice_loss(softmax(logits), t))) < 1e-6);
    CHECK(p.total() >= -1.0);
  }
}

TEST_CASE("losses match naive loop implementations") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int classes = 2 + static_cast<int>(rng.below(7));
    const Tensor logits = random_tensor(classes, {4, 4, 4}, rng, -5, 5);
    const Tensor v = random_one_hot(classes, {4, 4, 4}, rng);
    CHECK(std::abs(ce_loss(logits, v) - test_support::naive_ce_loss(logits, v)) < 1e-9);
    const Tensor u = softmax(logits);
    CHECK(std::abs(dice_loss(u, v) - test_support::naive_dice_loss(u, v, DiceOptions{}.smooth)) < 1e-9);
  }
}

TEST_CASE("generator objective") {
  LossReport parts;
  parts.adv = 0.25;
  parts.cycle = 0.1;
  parts.spatial = -0.5;
  CHECK(generator_total_loss(parts, {1.0, 10.0, 1.0}) == doctest::Approx(0.75));
  CHECK(generator_total_loss(parts, {1.0, 10.0, 0.0}) == doctest::Approx(0.25 + 1.0));

  // Linear in each weight: three settings of one weight lie on a line.
  for (int which = 0; which < 3; ++which) {
    double f[3];
    for (int step = 0; step < 3; ++step) {
      LossWeights w{0.5, 2.0, 1.5};
      double* lambda[] = {&w.lambda_adv, &w.lambda_cycle, &w.lambda_spatial};
      *lambda[which] = 0.7 * step;
      f[step] = generator_total_loss(parts, w);
    }
    CHECK(f[2] - f[1] == doctest::Approx(f[1] - f[0]).epsilon(1e-12));
  }

  finalize(parts, {1.0, 10.0, 1.0});
  CHECK(parts.total == doctest::Approx(0.75));

  CHECK_THROWS_AS(LossWeights({0, 0, 0}).validate(), ValidationError);
  CHECK_THROWS_AS(LossWeights({1, -10, 1}).validate(), ValidationError);
  CHECK_NOTHROW(LossWeights({1, 10, 0}).validate());
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(6);
  const Dims d{8, 8, 8};

  SUBCASE("adversarial") {
    Tensor fake = random_tensor(1, d, rng), real = random_tensor(1, d, rng);
    Tensor g, gr, gf;
    adv_loss_generator(fake, &g);
    CHECK(test_support::check_gradient([&] { return adv_loss_generator(fake); }, fake.data, g.data, 60, rng).passed());
    adv_loss_discriminator(real, fake, &gr, &gf);
    auto disc = [&] { return adv_loss_discriminator(real, fake); };
    CHECK(test_support::check_gradient(disc, real.data, gr.data, 60, rng).passed());
    CHECK(test_support::check_gradient(disc, fake.data, gf.data, 60, rng).passed());
  }
  SUBCASE("cycle") {
    const Tensor x = random_tensor(1, d, rng);
    Tensor rec = random_tensor(1, d, rng), g;
    cycle_loss(x, rec, &g);
    CHECK(test_support::check_gradient([&] { return cycle_loss(x, rec); }, rec.data, g.data, 60, rng).passed());
  }
  SUBCASE("dice") {
    // Small step: the loss checks that probabilities sum to one within 1e-5.
    const Tensor v = random_one_hot(4, d, rng);
    Tensor u = softmax(random_tensor(4, d, rng, -2, 2)), g;
    dice_loss(u, v, {}, &g);
    CHECK(test_support::check_gradient([&] { return dice_loss(u, v); }, u.data, g.data, 60, rng, 1e-6).passed());
  }
  SUBCASE("cross-entropy and spatial") {
    const Tensor v = random_one_hot(4, d, rng);
    Tensor logits = random_tensor(4, d, rng, -2, 2), gc, gs;
    ce_loss(logits, v, &gc);
    CHECK(test_support::check_gradient([&] { return ce_loss(logits, v); }, logits.data, gc.data, 60, rng).passed());
    spatial_loss(logits, v, {}, &gs);
    CHECK(test_support::check_gradient([&] { return spatial_loss(logits, v).total(); }, logits.data, gs.data, 60, rng)
              .passed());
  }
}

TEST_CASE("seg_loss and seg_syn_loss agree under an identity generator") {
  Rng rng(7);
  Model seg = build_segmentor(1, 4, 2, 3);
  Model gen = build_generator(1, 1, 4);
  gen.set_identity_bypass(true);
  const Tensor x = random_tensor(1, {32, 32, 32}, rng);
  const Tensor v = random_one_hot(5, {32, 32, 32}, rng);
  const SpatialParts a = seg_loss(seg, x, v);
  const SpatialParts b = seg_syn_loss(gen, seg, x, v);
  CHECK(a.ce == b.ce);
  CHECK(a.dice == b.dice);
}

TEST_CASE("seg_syn_loss gradient reaches both networks") {
  Rng rng(8);
  Model seg = build_segmentor(1, 4, 2, 5);
  Model gen = build_generator(1, 1, 6);
  const Tensor x = random_tensor(1, {32, 32, 32}, rng);
  const Tensor v = random_one_hot(5, {32, 32, 32}, rng);
  auto loss = [&] { return seg_syn_loss(gen, seg, x, v).total(); };

  seg.zero_grad();
  gen.zero_grad();
  (void)seg_syn_loss(gen, seg, x, v, {}, true);
  const auto seg_grad = seg.gradients();
  const auto gen_grad = gen.gradients();
  CHECK(test_support::rms(seg_grad) > 0.0);
  CHECK(test_support::rms(gen_grad) > 0.0);

  // Finite-difference sensitivity on the largest analytic coordinate of each
  // network. Instance norm over the generator's 2^3 deep stages curves
  // sharply, so the step is smaller than elsewhere.
  auto probe = [&](Model& m, const std::vector<double>& g) {
    const auto i = static_cast<std::size_t>(
        std::max_element(g.begin(), g.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) -
        g.begin());
    const double fd = test_support::central_difference(loss, m.parameters()[i], 1e-6);
    CHECK(std::abs(fd) > 0.0);
    CHECK(test_support::relative_error(g[i], fd) < 1e-3);
  };
  probe(seg, seg_grad);
  probe(gen, gen_grad);
  CHECK(test_support::check_gradient(loss, gen.parameters(), gen_grad, 20, rng, 1e-6).passed());
  CHECK(test_support::check_gradient(loss, seg.parameters(), seg_grad, 20, rng, 1e-6).passed());
}
