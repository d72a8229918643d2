#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scgan/checkpoint.hpp"
#include "scgan/layers.hpp"
#include "scgan/networks.hpp"
#include "support.hpp"

using namespace scgan;
using test_support::random_tensor;

namespace {

std::string shape_error(const Model& m, Dims d) {
  try {
    m.check_input(Tensor(m.spec().in_channels, d));
  } catch (const ShapeError& e) {
    return e.what();
  }
  return "";
}

Tensor naive_conv(const Tensor& x, const layers::ConvGeometry& g, const std::vector<double>& w,
                  const std::vector<double>& b) {
  const Dims od = g.output_dims(x.dims);
  Tensor y(g.out_channels, od);
  const int k = g.kernel;
  for (int o = 0; o < g.out_channels; ++o)
    for (int z = 0; z < od.z; ++z)
      for (int yy = 0; yy < od.y; ++yy)
        for (int xx = 0; xx < od.x; ++xx) {
          double s = b[static_cast<std::size_t>(o)];
          for (int c = 0; c < g.in_channels; ++c)
            for (int kz = 0; kz < k; ++kz)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = xx * g.stride - g.padding + kx;
                  const int iy = yy * g.stride - g.padding + ky;
                  const int iz = z * g.stride - g.padding + kz;
                  if (!x.dims.contains(ix, iy, iz)) continue;
                  const std::size_t wi = (((static_cast<std::size_t>(o) * g.in_channels + c) * k + kz) * k + ky) * k + kx;
                  s += w[wi] * x.at(c, ix, iy, iz);
                }
          y.at(o, xx, yy, z) = s;
        }
  return y;
}

}  // namespace

TEST_CASE("convolution matches a direct loop implementation") {
  Rng rng(1);
  for (layers::ConvGeometry g : {layers::ConvGeometry{2, 3, 3, 1, 1}, layers::ConvGeometry{3, 2, 4, 2, 1},
                                 layers::ConvGeometry{2, 2, 4, 1, 1}}) {
    const Tensor x = random_tensor(g.in_channels, {9, 8, 7}, rng);
    std::vector<double> w(g.weight_count()), b(static_cast<std::size_t>(g.out_channels));
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const Tensor fast = layers::conv3d_forward(x, g, w, b);
    const Tensor slow = naive_conv(x, g, w, b);
    REQUIRE(fast.same_shape(slow));
    double worst = 0.0;
    for (std::size_t i = 0; i < fast.size(); ++i) worst = std::max(worst, std::abs(fast.data[i] - slow.data[i]));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("layer shrink formula") {
  const layers::ConvGeometry down{1, 1, 4, 2, 1}, flat{1, 1, 4, 1, 1};
  CHECK(down.output_dims({64, 64, 64}) == Dims{32, 32, 32});
  CHECK(flat.output_dims({8, 8, 8}) == Dims{7, 7, 7});
  CHECK_THROWS_AS((void)flat.output_dims({1, 8, 8}), ShapeError);
}

TEST_CASE("segmentor shapes") {
  const Model seg = build_segmentor(1, 4, 4, 1);
  Rng rng(2);
  const Tensor out = seg.forward(random_tensor(1, {64, 64, 64}, rng));
  CHECK(out.channels == 5);
  CHECK(out.dims == Dims{64, 64, 64});
  CHECK(seg.bottleneck_dims({64, 64, 64}) == Dims{4, 4, 4});

  CHECK(seg.bottleneck_dims({48, 64, 32}) == Dims{3, 4, 2});
  CHECK(seg.forward(random_tensor(1, {48, 64, 32}, rng)).dims == Dims{48, 64, 32});

  const std::string err = shape_error(seg, {50, 50, 50});
  CHECK(err.find("axis x") != std::string::npos);
  CHECK(err.find("axis y") != std::string::npos);
  CHECK(err.find("axis z") != std::string::npos);
  CHECK(shape_error(seg, {48, 50, 32}).find("axis x") == std::string::npos);

  CHECK(build_segmentor(1, 7, 2).forward(random_tensor(1, {16, 16, 16}, rng)).channels == 8);
  CHECK_THROWS_AS((void)seg.forward(random_tensor(2, {16, 16, 16}, rng)), ShapeError);
}

TEST_CASE("generator shapes and range") {
  const Model gen = build_generator(1, 2, 3);
  Rng rng(3);
  const Tensor out = gen.forward(random_tensor(1, {32, 32, 32}, rng, -3, 3));
  CHECK(out.dims == Dims{32, 32, 32});
  CHECK(out.channels == 1);
  const auto [lo, hi] = std::minmax_element(out.data.begin(), out.data.end());
  CHECK(*lo > -1.0);
  CHECK(*hi < 1.0);
  CHECK(gen.forward(random_tensor(1, {64, 32, 32}, rng)).dims == Dims{64, 32, 32});
  CHECK_THROWS_AS(gen.check_input(Tensor(1, {48, 48, 48})), ShapeError);
  CHECK(gen.bottleneck_dims({64, 32, 32}) == Dims{2, 1, 1});
}

TEST_CASE("discriminator shapes") {
  const Model disc = build_discriminator(1, 2, 4);
  Rng rng(4);
  const Tensor a = disc.forward(random_tensor(1, {64, 64, 64}, rng));
  CHECK(a.channels == 1);
  CHECK(a.dims == Dims{6, 6, 6});
  CHECK(disc.output_dims({32, 32, 32}) == Dims{2, 2, 2});
  CHECK(disc.forward(random_tensor(1, {32, 32, 32}, rng)).dims == Dims{2, 2, 2});
  CHECK_THROWS_AS((void)disc.forward(random_tensor(1, {16, 16, 16}, rng)), ShapeError);
}

TEST_CASE("discriminator layer recipe") {
  const auto layers = discriminator_spec(1, 16).layers();
  REQUIRE(layers.size() == 5);
  const int strides[] = {2, 2, 2, 1, 1};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(layers[i].conv.kernel == 4);
    CHECK(layers[i].conv.padding == 1);
    CHECK(layers[i].conv.stride == strides[i]);
    CHECK(layers[i].activation == (i < 4 ? Activation::leaky_relu : Activation::none));
    CHECK(layers[i].norm == (i < 4));
  }
  CHECK(layers.back().conv.out_channels == 1);
}

TEST_CASE("leaky ReLU slope is 0.2") {
  Tensor t(1, {3, 1, 1});
  t.data = {-1.0, 0.0, 2.0};
  layers::leaky_relu_inplace(t, kLeakySlope);
  CHECK(t.data[0] == doctest::Approx(-0.2));
  CHECK(t.data[1] == 0.0);
  CHECK(t.data[2] == 2.0);
}

TEST_CASE("shape contracts hold on random admissible shapes") {
  Rng rng(10);
  const Model seg = build_segmentor(1, 4, 2, 1);
  const Model gen = build_generator(1, 1, 2);
  const Model disc = build_discriminator(1, 1, 3);
  for (int trial = 0; trial < 10; ++trial) {
    const Dims s{16 * (1 + static_cast<int>(rng.below(3))), 16 * (1 + static_cast<int>(rng.below(3))),
                 16 * (1 + static_cast<int>(rng.below(3)))};
    const Dims g{32 * (1 + static_cast<int>(rng.below(2))), 32, 32 * (1 + static_cast<int>(rng.below(2)))};
    CAPTURE(s.str());
    CAPTURE(g.str());
    const Tensor so = seg.forward(random_tensor(1, s, rng));
    CHECK(so.channels == 5);
    CHECK(so.dims == s);
    CHECK(seg.bottleneck_dims(s) == Dims{s.x / 16, s.y / 16, s.z / 16});
    const Tensor go = gen.forward(random_tensor(1, g, rng));
    CHECK(go.dims == g);
    const auto [lo, hi] = std::minmax_element(go.data.begin(), go.data.end());
    CHECK(*lo > -1.0);
    CHECK(*hi < 1.0);
    Dims expect = g;
    for (int stride : {2, 2, 2, 1, 1})
      for (int a = 0; a < 3; ++a) expect[a] = (expect[a] + 2 - 4) / stride + 1;
    CHECK(disc.forward(random_tensor(1, g, rng)).dims == expect);
  }
}

TEST_CASE("inference is deterministic and softmax normalizes") {
  const Model seg = build_segmentor(1, 7, 2, 5);
  Rng rng(5);
  const Tensor x = random_tensor(1, {16, 32, 16}, rng);
  const Tensor a = seg.forward(x), b = seg.forward(x);
  CHECK(a.data == b.data);
  const Tensor p = softmax(a);
  double worst = 0.0;
  for (std::size_t v = 0; v < p.voxels(); ++v) {
    double s = 0.0;
    for (int c = 0; c < p.channels; ++c) s += p.data[static_cast<std::size_t>(c) * p.voxels() + v];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("seeds control initialization") {
  CHECK(build_segmentor(1, 4, 2, 1).parameters() == build_segmentor(1, 4, 2, 1).parameters());
  CHECK(build_segmentor(1, 4, 2, 1).parameters() != build_segmentor(1, 4, 2, 2).parameters());
}

TEST_CASE("filter widths double per stage and cap at 16x") {
  const auto spec = segmentor_spec(1, 7, 16);
  CHECK(spec.filters(0) == 16);
  CHECK(spec.filters(4) == 256);
  CHECK(generator_spec(1, 16).filters(5) == 256);
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(6);
  SUBCASE("segmentor") {
    Model net = build_segmentor(1, 4, 2, 7);
    const auto r = test_support::check_network_gradients(net, random_tensor(1, {16, 16, 16}, rng), 60, rng);
    CHECK(r.params.passed());
    CHECK(r.input.passed());
  }
  SUBCASE("generator") {
    Model net = build_generator(1, 1, 8);
    const auto r = test_support::check_network_gradients(net, random_tensor(1, {32, 32, 32}, rng), 60, rng);
    CHECK(r.params.passed());
    CHECK(r.input.passed());
  }
  SUBCASE("discriminator") {
    Model net = build_discriminator(1, 2, 9);
    const auto r = test_support::check_network_gradients(net, random_tensor(1, {32, 32, 32}, rng), 60, rng);
    CHECK(r.params.passed());
    CHECK(r.input.passed());
  }
}

TEST_CASE("frozen backward leaves parameter gradients untouched") {
  Model net = build_segmentor(1, 4, 2, 7);
  Rng rng(7);
  const Tensor x = random_tensor(1, {16, 16, 16}, rng);
  Tape tape;
  const Tensor y = net.forward(x, tape);
  net.zero_grad();
  const Tensor dx = net.backward(tape, random_tensor(y.channels, y.dims, rng), false);
  CHECK(test_support::rms(net.gradients()) == 0.0);
  CHECK(test_support::rms(dx.data) > 0.0);
}

TEST_CASE("identity bypass returns the input") {
  Model gen = build_generator(1, 2, 1);
  gen.set_identity_bypass(true);
  Rng rng(8);
  const Tensor x = random_tensor(1, {32, 32, 32}, rng);
  Tape tape;
  CHECK(gen.forward(x, tape).data == x.data);
  CHECK(gen.backward(tape, x).data == x.data);
}

TEST_CASE("checkpoints reload to the same function") {
  test_support::TempDir dir("ckpt");
  Model net = build_segmentor(1, 4, 2, 11);
  Adam opt;
  Rng rng(9);
  const Tensor x = random_tensor(1, {16, 16, 16}, rng);
  Tape tape;
  const Tensor y = net.forward(x, tape);
  net.zero_grad();
  (void)net.backward(tape, random_tensor(y.channels, y.dims, rng));
  opt.step(net.parameters(), net.gradients());

  save_checkpoint(dir / "s.ckpt", net, opt, 3, {{"note", "x"}});
  const Checkpoint ck = load_checkpoint(dir / "s.ckpt");
  CHECK(ck.epoch == 3);
  CHECK(ck.meta.at("note") == "x");
  CHECK(ck.model.spec() == net.spec());
  CHECK(ck.optimizer.steps() == 1);
  CHECK(ck.optimizer.first_moment() == opt.first_moment());
  CHECK(ck.optimizer.second_moment() == opt.second_moment());
  const Tensor before = net.forward(x), after = ck.model.forward(x);
  double worst = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) worst = std::max(worst, std::abs(before.data[i] - after.data[i]));
  CHECK(worst < 1e-6);
  CHECK(file_digest(dir / "s.ckpt").size() == 16);

  std::ofstream(dir / "bad.ckpt", std::ios::binary) << "not a checkpoint at all";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}
