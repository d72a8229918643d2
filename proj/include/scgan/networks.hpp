#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "scgan/layers.hpp"
#include "scgan/tensor.hpp"

namespace scgan {

enum class NetworkKind { segmentor, generator, discriminator };
enum class NormKind { instance, batch, none };
enum class Activation { none, leaky_relu, tanh };

std::string to_string(NetworkKind k);
std::string to_string(NormKind k);
NetworkKind parse_network_kind(const std::string& s);
NormKind parse_norm_kind(const std::string& s);

constexpr double kLeakySlope = 0.2;
constexpr int kSegmentorDepth = 4;
constexpr int kGeneratorDepth = 5;
constexpr int kDiscriminatorLayers = 5;

/// One convolution followed by optional normalization and activation.
struct LayerSpec {
  std::string name;
  layers::ConvGeometry conv;
  bool norm = false;
  Activation activation = Activation::none;
};

/// Declarative architecture description. The layer list is derived from the
/// fields; filter widths double per downsampling stage, capped at 16x base.
struct NetworkSpec {
  NetworkKind kind = NetworkKind::segmentor;
  int in_channels = 1;
  int out_channels = 1;
  int base_filters = 16;
  int depth = kSegmentorDepth;
  NormKind norm = NormKind::instance;

  /// Throws ValidationError for a spec that breaks an architecture invariant.
  void validate() const;
  [[nodiscard]] std::vector<LayerSpec> layers() const;
  /// Input axes must be multiples of this (2^depth for the U-Nets).
  [[nodiscard]] int divisor() const;
  [[nodiscard]] int filters(int stage) const;

  bool operator==(const NetworkSpec&) const = default;
};

NetworkSpec segmentor_spec(int in_channels, int n_labels, int base_filters, NormKind norm = NormKind::instance);
NetworkSpec generator_spec(int in_channels, int base_filters = 16, NormKind norm = NormKind::instance);
NetworkSpec discriminator_spec(int in_channels, int base_filters = 16, NormKind norm = NormKind::instance);

/// Activations recorded during a training forward pass; one tape per call,
/// so a network may be applied several times before backpropagating.
struct Tape {
  struct Entry {
    Tensor input;
    Tensor normalized;
    std::vector<double> inv_std;
    Tensor output;
  };
  std::vector<Entry> entries;
  Dims input_dims;
  bool identity = false;
};

/// Network instance: spec, flat parameter vector and its gradient.
class Model {
 public:
  Model() = default;
  Model(NetworkSpec spec, std::uint64_t init_seed);

  [[nodiscard]] const NetworkSpec& spec() const { return spec_; }
  [[nodiscard]] std::size_t parameter_count() const { return params_.size(); }

  std::vector<double>& parameters() { return params_; }
  [[nodiscard]] const std::vector<double>& parameters() const { return params_; }
  std::vector<double>& gradients() { return grads_; }
  [[nodiscard]] const std::vector<double>& gradients() const { return grads_; }
  void zero_grad();

  struct NamedRange {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
  };
  /// "<layer>.weight" / "<layer>.bias" ranges into parameters().
  [[nodiscard]] const std::vector<NamedRange>& parameter_ranges() const { return ranges_; }

  /// Throws ShapeError naming every offending axis.
  void check_input(const Tensor& x) const;
  [[nodiscard]] Dims output_dims(const Dims& in) const;
  /// Spatial size at the deepest encoder stage (U-Nets) or after the last
  /// stride-2 layer (discriminator).
  [[nodiscard]] Dims bottleneck_dims(const Dims& in) const;

  /// Inference forward pass; deterministic for fixed parameters.
  [[nodiscard]] Tensor forward(const Tensor& x) const;
  /// Training forward pass recording activations on `tape`.
  Tensor forward(const Tensor& x, Tape& tape) const;
  /// Backpropagates dy through the recorded pass. Parameter gradients are
  /// accumulated when `accumulate_params` is true (frozen critics pass false).
  /// Returns the gradient with respect to the input.
  Tensor backward(const Tape& tape, const Tensor& dy, bool accumulate_params = true);

  /// Test hook: forward returns its input unchanged (generator only).
  void set_identity_bypass(bool on) { identity_bypass_ = on; }
  [[nodiscard]] bool identity_bypass() const { return identity_bypass_; }

 private:
  Tensor run_layer(std::size_t index, const Tensor& x, Tape::Entry* entry) const;
  Tensor back_layer(std::size_t index, const Tape::Entry& entry, const Tensor& dy, bool accumulate_params,
                    bool need_input_grad);
  Tensor forward_impl(const Tensor& x, Tape* tape) const;

  NetworkSpec spec_;
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::vector<NamedRange> ranges_;
  std::vector<double> params_;
  std::vector<double> grads_;
  bool identity_bypass_ = false;
};

using ModelHandle = Model;

/// Segmentor: 3D U-Net, 4 stride-2 downsampling convolutions, 4 nearest
/// upsampling stages each followed by a stride-1 3x3x3 convolution, output
/// n_labels + 1 logit channels (background included).
Model build_segmentor(int in_channels, int n_labels, int base_filters, std::uint64_t seed = 0,
                      NormKind norm = NormKind::instance);
/// Generator: skip-connection U-Net with 5 stride-2 downsamplings and a tanh
/// output, mapping (C, X, Y, Z) to (C, X, Y, Z).
Model build_generator(int in_channels, int base_filters = 16, std::uint64_t seed = 0,
                      NormKind norm = NormKind::instance);
/// PatchGAN discriminator: three 4x4x4 stride-2 and two stride-1 convolutions,
/// normalization + leaky ReLU(0.2) after the first four, raw scores out.
Model build_discriminator(int in_channels, int base_filters = 16, std::uint64_t seed = 0,
                          NormKind norm = NormKind::instance);

Tensor forward(const Model& m, const Tensor& x);

}  // namespace scgan
