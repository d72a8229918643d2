#include "scgan/networks.hpp"

#include <algorithm>
#include <cmath>

#include "scgan/rng.hpp"

namespace scgan {
namespace {

bool is_unet(NetworkKind k) { return k != NetworkKind::discriminator; }

constexpr char kAxisNames[3] = {'x', 'y', 'z'};

}  // namespace

std::string to_string(NetworkKind k) {
  switch (k) {
    case NetworkKind::segmentor:
      return "segmentor";
    case NetworkKind::generator:
      return "generator";
    case NetworkKind::discriminator:
      return "discriminator";
  }
  return "segmentor";
}

std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::instance:
      return "instance";
    case NormKind::batch:
      return "batch";
    case NormKind::none:
      return "none";
  }
  return "none";
}

NetworkKind parse_network_kind(const std::string& s) {
  if (s == "segmentor") return NetworkKind::segmentor;
  if (s == "generator") return NetworkKind::generator;
  if (s == "discriminator") return NetworkKind::discriminator;
  throw ValidationError("unknown network kind '" + s + "'");
}

NormKind parse_norm_kind(const std::string& s) {
  if (s == "instance") return NormKind::instance;
  if (s == "batch") return NormKind::batch;
  if (s == "none") return NormKind::none;
  throw ValidationError("unknown norm kind '" + s + "'");
}

int NetworkSpec::filters(int stage) const { return base_filters * (1 << std::min(stage, 4)); }

int NetworkSpec::divisor() const { return is_unet(kind) ? (1 << depth) : 1; }

void NetworkSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) throw ValidationError("network channel counts must be >= 1");
  if (base_filters < 1) throw ValidationError("base_filters must be >= 1");
  if (norm == NormKind::batch)
    throw ValidationError("batch normalization is not supported: samples are processed one at a time");
  switch (kind) {
    case NetworkKind::segmentor:
      if (depth != kSegmentorDepth) throw ValidationError("segmentor depth must be 4");
      break;
    case NetworkKind::generator:
      if (depth != kGeneratorDepth) throw ValidationError("generator depth must be 5");
      if (out_channels != in_channels) throw ValidationError("generator must map C channels to C channels");
      break;
    case NetworkKind::discriminator:
      if (depth != 3) throw ValidationError("discriminator has exactly 3 stride-2 layers");
      if (out_channels != 1) throw ValidationError("discriminator emits a single score channel");
      break;
  }
}

std::vector<LayerSpec> NetworkSpec::layers() const {
  validate();
  const bool use_norm = norm != NormKind::none;
  std::vector<LayerSpec> out;
  if (kind == NetworkKind::discriminator) {
    const int widths[5] = {filters(0), filters(1), filters(2), filters(3), 1};
    int cin = in_channels;
    for (int i = 0; i < kDiscriminatorLayers; ++i) {
      LayerSpec l;
      l.name = "conv" + std::to_string(i + 1);
      l.conv = {cin, widths[i], 4, i < 3 ? 2 : 1, 1};
      const bool last = i == kDiscriminatorLayers - 1;
      l.norm = use_norm && !last;
      l.activation = last ? Activation::none : Activation::leaky_relu;
      out.push_back(l);
      cin = widths[i];
    }
    return out;
  }

  out.push_back({"enc0", {in_channels, filters(0), 3, 1, 1}, use_norm, Activation::leaky_relu});
  for (int i = 1; i <= depth; ++i) {
    // The innermost stage is a single voxel deep at minimum input size, so it
    // carries no normalization.
    out.push_back({"down" + std::to_string(i), {filters(i - 1), filters(i), 3, 2, 1}, use_norm && i < depth,
                   Activation::leaky_relu});
  }
  for (int i = depth; i >= 1; --i) {
    out.push_back({"up" + std::to_string(i), {filters(i) + filters(i - 1), filters(i - 1), 3, 1, 1}, use_norm,
                   Activation::leaky_relu});
  }
  out.push_back({"head", {filters(0), out_channels, 3, 1, 1}, false,
                 kind == NetworkKind::generator ? Activation::tanh : Activation::none});
  return out;
}

NetworkSpec segmentor_spec(int in_channels, int n_labels, int base_filters, NormKind norm) {
  return {NetworkKind::segmentor, in_channels, n_labels + 1, base_filters, kSegmentorDepth, norm};
}

NetworkSpec generator_spec(int in_channels, int base_filters, NormKind norm) {
  return {NetworkKind::generator, in_channels, in_channels, base_filters, kGeneratorDepth, norm};
}

NetworkSpec discriminator_spec(int in_channels, int base_filters, NormKind norm) {
  return {NetworkKind::discriminator, in_channels, 1, base_filters, 3, norm};
}

Model::Model(NetworkSpec spec, std::uint64_t init_seed) : spec_(spec), layers_(spec.layers()) {
  std::size_t total = 0;
  for (const auto& l : layers_) {
    weight_offset_.push_back(total);
    ranges_.push_back({l.name + ".weight", total, l.conv.weight_count()});
    total += l.conv.weight_count();
    bias_offset_.push_back(total);
    ranges_.push_back({l.name + ".bias", total, static_cast<std::size_t>(l.conv.out_channels)});
    total += static_cast<std::size_t>(l.conv.out_channels);
  }
  params_.assign(total, 0.0);
  grads_.assign(total, 0.0);

  // He-normal initialization for leaky-ReLU networks; biases start at zero.
  Rng rng(derive_seed(init_seed, {0x11u}));
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& g = layers_[li].conv;
    const double fan_in = static_cast<double>(g.in_channels) * g.kernel * g.kernel * g.kernel;
    const double stddev = std::sqrt(2.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
    for (std::size_t i = 0; i < g.weight_count(); ++i) params_[weight_offset_[li] + i] = rng.normal(0.0, stddev);
  }
}

void Model::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void Model::check_input(const Tensor& x) const {
  if (x.channels != spec_.in_channels)
    throw ShapeError(to_string(spec_.kind) + " expects " + std::to_string(spec_.in_channels) +
                     " input channels, got " + std::to_string(x.channels));
  if (is_unet(spec_.kind)) {
    const int div = spec_.divisor();
    std::string bad;
    for (int a = 0; a < 3; ++a) {
      if (x.dims[a] < 1 || x.dims[a] % div != 0) {
        if (!bad.empty()) bad += "; ";
        bad += std::string("axis ") + kAxisNames[a] + " (" + std::to_string(x.dims[a]) + ") is not divisible by " +
               std::to_string(div);
      }
    }
    if (!bad.empty()) throw ShapeError(to_string(spec_.kind) + " input " + x.dims.str() + ": " + bad);
  } else {
    (void)output_dims(x.dims);
  }
}

Dims Model::output_dims(const Dims& in) const {
  if (is_unet(spec_.kind)) return in;
  Dims d = in;
  for (const auto& l : layers_) {
    try {
      d = l.conv.output_dims(d);
    } catch (const ShapeError&) {
      throw ShapeError("discriminator input " + in.str() + " is too small to survive five 4x4x4 layers");
    }
  }
  return d;
}

Dims Model::bottleneck_dims(const Dims& in) const {
  if (is_unet(spec_.kind)) {
    const int div = spec_.divisor();
    return {in.x / div, in.y / div, in.z / div};
  }
  Dims d = in;
  for (int i = 0; i < 3; ++i) d = layers_[i].conv.output_dims(d);
  return d;
}

Tensor Model::run_layer(std::size_t index, const Tensor& x, Tape::Entry* entry) const {
  const LayerSpec& l = layers_[index];
  const std::span<const double> w(params_.data() + weight_offset_[index], l.conv.weight_count());
  const std::span<const double> b(params_.data() + bias_offset_[index], static_cast<std::size_t>(l.conv.out_channels));
  Tensor y = layers::conv3d_forward(x, l.conv, w, b);
  if (l.norm) {
    std::vector<double> inv_std;
    y = layers::instance_norm_forward(y, inv_std);
    if (entry != nullptr) {
      entry->normalized = y;
      entry->inv_std = std::move(inv_std);
    }
  }
  switch (l.activation) {
    case Activation::leaky_relu:
      layers::leaky_relu_inplace(y, kLeakySlope);
      break;
    case Activation::tanh:
      layers::tanh_inplace(y);
      break;
    case Activation::none:
      break;
  }
  if (entry != nullptr) {
    entry->input = x;
    entry->output = y;
  }
  return y;
}

Tensor Model::back_layer(std::size_t index, const Tape::Entry& entry, const Tensor& dy, bool accumulate_params,
                         bool need_input_grad) {
  const LayerSpec& l = layers_[index];
  Tensor g = dy;
  switch (l.activation) {
    case Activation::leaky_relu:
      layers::leaky_relu_backward_inplace(entry.output, g, kLeakySlope);
      break;
    case Activation::tanh:
      layers::tanh_backward_inplace(entry.output, g);
      break;
    case Activation::none:
      break;
  }
  if (l.norm) g = layers::instance_norm_backward(entry.normalized, entry.inv_std, g);

  const std::span<const double> w(params_.data() + weight_offset_[index], l.conv.weight_count());
  std::vector<double> scratch_w, scratch_b;
  std::span<double> dw(grads_.data() + weight_offset_[index], l.conv.weight_count());
  std::span<double> db(grads_.data() + bias_offset_[index], static_cast<std::size_t>(l.conv.out_channels));
  if (!accumulate_params) {
    scratch_w.assign(dw.size(), 0.0);
    scratch_b.assign(db.size(), 0.0);
    dw = scratch_w;
    db = scratch_b;
  }
  Tensor dx;
  layers::conv3d_backward(entry.input, g, l.conv, w, dw, db, need_input_grad ? &dx : nullptr);
  return dx;
}

Tensor Model::forward_impl(const Tensor& x, Tape* tape) const {
  check_input(x);
  if (tape != nullptr) {
    tape->entries.assign(layers_.size(), {});
    tape->input_dims = x.dims;
    tape->identity = identity_bypass_;
  }
  if (identity_bypass_) return x;
  auto entry = [&](std::size_t i) { return tape != nullptr ? &tape->entries[i] : nullptr; };

  if (spec_.kind == NetworkKind::discriminator) {
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) h = run_layer(i, h, entry(i));
    return h;
  }

  const int depth = spec_.depth;
  std::vector<Tensor> enc(depth + 1);
  enc[0] = run_layer(0, x, entry(0));
  for (int i = 1; i <= depth; ++i) enc[i] = run_layer(i, enc[i - 1], entry(i));
  Tensor d = enc[depth];
  for (int i = depth; i >= 1; --i) {
    const std::size_t li = static_cast<std::size_t>(depth + 1 + (depth - i));
    d = run_layer(li, layers::concat_channels(layers::upsample_nearest2(d), enc[i - 1]), entry(li));
  }
  return run_layer(layers_.size() - 1, d, entry(layers_.size() - 1));
}

Tensor Model::forward(const Tensor& x) const { return forward_impl(x, nullptr); }

Tensor Model::forward(const Tensor& x, Tape& tape) const { return forward_impl(x, &tape); }

Tensor Model::backward(const Tape& tape, const Tensor& dy, bool accumulate_params) {
  if (tape.identity) return dy;
  if (tape.entries.size() != layers_.size()) throw ValidationError("tape does not belong to this network");

  if (spec_.kind == NetworkKind::discriminator) {
    Tensor g = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) g = back_layer(i, tape.entries[i], g, accumulate_params, true);
    return g;
  }

  // Decoder stages are undone outermost first.
  const int depth = spec_.depth;
  const std::size_t head = layers_.size() - 1;
  Tensor g = back_layer(head, tape.entries[head], dy, accumulate_params, true);
  std::vector<Tensor> skip_grad(static_cast<std::size_t>(depth));
  for (int i = 1; i <= depth; ++i) {
    const auto li = static_cast<std::size_t>(depth + 1 + (depth - i));
    const Tensor dc = back_layer(li, tape.entries[li], g, accumulate_params, true);
    Tensor du;
    layers::split_channels(dc, dc.channels - spec_.filters(i - 1), du, skip_grad[static_cast<std::size_t>(i - 1)]);
    g = layers::upsample_nearest2_backward(du);
  }
  // g is now the gradient at the bottleneck; walk the encoder back up.
  for (int i = depth; i >= 1; --i) {
    g = back_layer(static_cast<std::size_t>(i), tape.entries[static_cast<std::size_t>(i)], g, accumulate_params, true);
    g += skip_grad[static_cast<std::size_t>(i - 1)];
  }
  return back_layer(0, tape.entries[0], g, accumulate_params, true);
}

Model build_segmentor(int in_channels, int n_labels, int base_filters, std::uint64_t seed, NormKind norm) {
  if (n_labels < 1) throw ValidationError("segmentor needs at least one foreground label");
  return Model(segmentor_spec(in_channels, n_labels, base_filters, norm), seed);
}

Model build_generator(int in_channels, int base_filters, std::uint64_t seed, NormKind norm) {
  return Model(generator_spec(in_channels, base_filters, norm), seed);
}

Model build_discriminator(int in_channels, int base_filters, std::uint64_t seed, NormKind norm) {
  return Model(discriminator_spec(in_channels, base_filters, norm), seed);
}

Tensor forward(const Model& m, const Tensor& x) { return m.forward(x); }

}  // namespace scgan
