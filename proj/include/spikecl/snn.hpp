#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spikecl/dataset.hpp"
#include "spikecl/model.hpp"
#include "spikecl/training.hpp"

namespace spikecl {

enum class NeuronMode { rate, spiking };

const char* to_string(NeuronMode mode);
NeuronMode neuron_mode_from_string(const std::string& s);

struct ConversionParams {
  NeuronMode mode = NeuronMode::spiking;
  double rate_scale = 15.0;  // dimensionless firing-rate scale s
  double tau = 0.001;        // synaptic lowpass time constant, seconds
  double dt = 0.001;         // simulation step, seconds

  void validate() const;
  bool operator==(const ConversionParams& other) const = default;
};

struct NeuronStep {
  double amplitude = 0.0;  // 0 or 1/(s·dt)
  double v = 0.0;
};

// Spiking rectified-linear update with subtractive reset:
//   v += max(s·u, 0)·dt; at most one spike per step when v >= 1.
NeuronStep neuron_step(double v, double drive, double rate_scale, double dt);

// Exponential-Euler lowpass; tau == 0 is a passthrough.
double lowpass_decay(double tau, double dt);
double lowpass_step(double y, double x, double tau, double dt);

// ReLU network with every ReLU replaced by a neuron layer. The weights are a
// verbatim copy of the source model.
class SpikingNetwork {
 public:
  const Model& model() const noexcept { return model_; }
  const ConversionParams& params() const noexcept { return params_; }

  // Plan indices of the neuron (former ReLU) layers, in order.
  const std::vector<std::size_t>& neuron_layers() const noexcept { return neuron_layers_; }

  double spike_amplitude() const { return 1.0 / (params_.rate_scale * params_.dt); }
  double filter_decay() const { return lowpass_decay(params_.tau, params_.dt); }

  // Position-major transposed weights used to scatter spike events; empty
  // for layers fed densely.
  const std::vector<std::vector<double>>& scatter_weights() const noexcept {
    return scatter_weights_;
  }
  // For each layer, the neuron layer whose spikes drive it by events, or -1.
  const std::vector<int>& event_source() const noexcept { return event_source_; }
  // Layers before the first neuron layer see only the constant image.
  std::size_t constant_prefix() const noexcept { return constant_prefix_; }

 private:
  friend SpikingNetwork convert(const Model& model, const ConversionParams& params);

  Model model_;
  ConversionParams params_;
  std::vector<std::size_t> neuron_layers_;
  std::vector<std::vector<double>> scatter_weights_;
  std::vector<int> event_source_;
  std::size_t constant_prefix_ = 0;
};

// Throws a conversion error naming the first unsupported layer.
SpikingNetwork convert(const Model& model, const ConversionParams& params);

struct SimConfig {
  std::size_t n_steps = 50;
  std::size_t readout_window = 20;
  bool record_traces = false;
  std::size_t trace_layer = 0;  // ordinal among neuron layers

  void validate(const SpikingNetwork& net) const;
};

struct SpikeEvent {
  std::uint32_t step = 0;
  std::uint32_t neuron = 0;
  double amplitude = 0.0;

  bool operator==(const SpikeEvent& other) const = default;
};

struct SpikeTrace {
  std::size_t layer = 0;  // plan index of the recorded neuron layer
  std::size_t neurons = 0;
  std::size_t steps = 0;
  double dt = 0.001;
  std::vector<SpikeEvent> events;  // step-major order
  std::vector<double> rates;       // (Σ amplitude·dt)/(T·dt) per neuron

  bool operator==(const SpikeTrace& other) const = default;
};

// Fills rates from events: (Σ amplitude·dt)/(steps·dt) per neuron.
void compute_trace_rates(SpikeTrace& trace);

struct SimResult {
  Tensor step_logits;    // n_steps×10
  Tensor probabilities;  // softmax of the readout-window mean
  std::size_t predicted = 0;
  std::optional<SpikeTrace> trace;

  bool operator==(const SimResult& other) const = default;
};

// Mutable per-presentation state; many may share one network.
struct SimState {
  std::vector<std::vector<double>> membrane;  // per layer, neuron layers only
  std::vector<std::vector<double>> filtered;  // per layer, neuron layers only
  std::vector<std::vector<double>> current;   // per layer, event-fed layers only

  bool operator==(const SimState& other) const = default;
};

class Simulator {
 public:
  explicit Simulator(const SpikingNetwork& net);

  // Presents `image` as constant drive for cfg.n_steps steps starting from
  // the current state. Call reset() between unrelated presentations.
  SimResult run(std::span<const double> image, const SimConfig& cfg);

  void reset();
  const SimState& state() const noexcept { return state_; }

 private:
  const SpikingNetwork* net_;
  SimState state_;
  std::vector<std::vector<double>> act_;
  std::vector<std::vector<std::uint32_t>> spikes_;
  std::vector<double> scratch_;
};

SimResult simulate(const SpikingNetwork& net, const Tensor& image, const SimConfig& cfg);

struct BatchSimResult {
  ClassificationStats stats;
  Tensor probabilities;  // N×10
};

// Resets between images. Results are independent of `threads`.
BatchSimResult batch_simulate(const SpikingNetwork& net, const Dataset& ds, const SimConfig& cfg,
                              std::size_t threads = 1);

}  // namespace spikecl
