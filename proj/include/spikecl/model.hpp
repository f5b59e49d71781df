#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spikecl/tensor.hpp"

namespace spikecl {

enum class LayerKind { conv2d, maxpool2d, dense, relu, tanh, flatten };

const char* to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t units = 0;   // conv output channels or dense output units
  std::size_t kernel = 0;  // square conv kernel
  std::size_t stride = 1;
  Padding padding = Padding::valid;

  static LayerSpec conv(std::size_t channels, std::size_t kernel, std::size_t stride = 1,
                        Padding padding = Padding::valid);
  static LayerSpec dense(std::size_t units);
  static LayerSpec of(LayerKind kind);

  bool has_params() const { return kind == LayerKind::conv2d || kind == LayerKind::dense; }
  std::string to_string() const;
  bool operator==(const LayerSpec& other) const = default;
};

// Declarative layer stack. Text form is a whitespace separated list, e.g.
//   conv2d(32,3,1,valid) relu conv2d(64,3,2,valid) relu flatten dense(10)
struct ModelSpec {
  Shape input{1, 28, 28};
  std::vector<LayerSpec> layers;

  // Conv(32,3x3,s1) -> ReLU -> Conv(64,3x3,s2) -> ReLU -> Conv(128,3x3,s2)
  // -> ReLU -> Flatten -> Dense(10).
  static ModelSpec reference();
  static ModelSpec parse(const std::string& text, Shape input = {1, 28, 28});
  std::string to_string() const;

  // Output shape of every layer; throws a dimension error if the stack does
  // not compose or the head is not 10 wide.
  std::vector<Shape> output_shapes() const;

  bool operator==(const ModelSpec& other) const = default;
};

struct LayerParams {
  Tensor weight;  // conv: C_out×C_in×k×k, dense: out×in
  Tensor bias;

  bool operator==(const LayerParams& other) const = default;
};

// Precomputed per-layer geometry.
struct LayerPlan {
  LayerSpec spec;
  Shape in_shape;
  Shape out_shape;
  ConvGeometry conv;  // conv2d only

  std::size_t in_size() const { return shape_size(in_shape); }
  std::size_t out_size() const { return shape_size(out_shape); }
};

class Model {
 public:
  Model() = default;
  // He-normal fan-in initialisation of weights, zero biases.
  Model(ModelSpec spec, std::uint64_t seed);
  static Model zeros(ModelSpec spec);

  const ModelSpec& spec() const noexcept { return spec_; }
  const std::vector<LayerPlan>& plan() const noexcept { return plan_; }
  std::vector<LayerParams>& params() noexcept { return params_; }
  const std::vector<LayerParams>& params() const noexcept { return params_; }

  std::uint64_t seed() const noexcept { return seed_; }
  void set_seed(std::uint64_t s) noexcept { seed_ = s; }
  std::vector<double>& loss_log() noexcept { return loss_log_; }
  const std::vector<double>& loss_log() const noexcept { return loss_log_; }

  std::size_t input_size() const { return shape_size(spec_.input); }
  std::size_t output_size() const { return plan_.back().out_size(); }
  std::size_t parameter_count() const;

  // "conv2d_0.weight" style names, in params() order, weight before bias,
  // for parameterised layers only.
  std::vector<std::string> parameter_names() const;
  std::vector<Tensor*> parameter_tensors();
  std::vector<const Tensor*> parameter_tensors() const;

  // Throws when parameter shapes disagree with the spec or are non-finite.
  void validate() const;

  bool operator==(const Model& other) const;

 private:
  void build_plan();

  ModelSpec spec_;
  std::vector<LayerPlan> plan_;
  std::vector<LayerParams> params_;
  std::uint64_t seed_ = 0;
  std::vector<double> loss_log_;
};

// Applies one layer to a single example. `scratch` is resized as needed; it
// receives the im2col matrix for conv layers.
void apply_layer(const LayerPlan& plan, const LayerParams& params, std::span<const double> in,
                 std::span<double> out, std::vector<double>& scratch);

// Per-example activations kept for backpropagation.
struct ForwardTrace {
  std::vector<std::vector<double>> activations;  // [0] is the input
  std::vector<std::vector<double>> cols;         // im2col per conv layer
  std::vector<std::vector<std::size_t>> argmax;  // per maxpool layer

  std::span<const double> logits() const { return activations.back(); }
};

void forward_sample(const Model& model, std::span<const double> input, ForwardTrace& trace);

// Batch forward: batch is B×(input shape); returns B×10 logits.
Tensor forward(const Model& model, const Tensor& batch);

using Gradients = std::vector<LayerParams>;

Gradients zero_gradients(const Model& model);

// Reusable buffers for repeated gradient evaluation on one model.
class GradientWorkspace {
 public:
  explicit GradientWorkspace(const Model& model);

  // Mean cross-entropy over the examples plus l2/2·Σ‖W‖² (weights only).
  // `grads` receives the matching gradient. Inputs are flat examples.
  double loss_and_gradients(const Model& model, std::span<const std::span<const double>> inputs,
                            std::span<const int> labels, double l2, Gradients& grads);

 private:
  ForwardTrace trace_;
  std::vector<std::vector<double>> grad_act_;
  std::vector<Tensor> weight_t_;
  std::vector<double> cols_t_;
  std::vector<double> dcols_;
  std::vector<double> probs_;
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

// Labels must lie within the head width.
LossAndGradients backward(const Model& model, const Tensor& batch, std::span<const int> labels,
                          double l2);

}  // namespace spikecl
