#include "spikecl/snn.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "spikecl/error.hpp"

namespace spikecl {

const char* to_string(NeuronMode mode) { return mode == NeuronMode::rate ? "rate" : "spiking"; }

NeuronMode neuron_mode_from_string(const std::string& s) {
  if (s == "rate") return NeuronMode::rate;
  if (s == "spiking") return NeuronMode::spiking;
  fail(ErrorCode::config, "unknown neuron mode '" + s + "' (rate|spiking)");
}

void ConversionParams::validate() const {
  if (!(rate_scale > 0.0) || !std::isfinite(rate_scale)) {
    fail(ErrorCode::config, "firing-rate scale must be > 0");
  }
  if (!(tau >= 0.0) || !std::isfinite(tau)) fail(ErrorCode::config, "tau must be >= 0");
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorCode::config, "dt must be > 0");
}

NeuronStep neuron_step(double v, double drive, double rate_scale, double dt) {
  NeuronStep r;
  r.v = v + relu_value(rate_scale * drive) * dt;
  if (r.v >= 1.0) {
    r.amplitude = 1.0 / (rate_scale * dt);
    r.v -= 1.0;
  }
  return r;
}

double lowpass_decay(double tau, double dt) { return tau > 0.0 ? std::exp(-dt / tau) : 0.0; }

double lowpass_step(double y, double x, double tau, double dt) {
  if (tau == 0.0) return x;
  const double a = lowpass_decay(tau, dt);
  return a * y + (1.0 - a) * x;
}

SpikingNetwork convert(const Model& model, const ConversionParams& params) {
  params.validate();
  model.validate();
  const auto& plan = model.plan();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const LayerKind k = plan[i].spec.kind;
    if (k != LayerKind::conv2d && k != LayerKind::dense && k != LayerKind::relu &&
        k != LayerKind::maxpool2d && k != LayerKind::flatten) {
      fail(ErrorCode::conversion,
           "unsupported layer '" + plan[i].spec.to_string() + "' at index " + std::to_string(i));
    }
  }
  if (plan.back().spec.kind == LayerKind::relu) {
    fail(ErrorCode::conversion, "output layer must stay non-spiking; final ReLU at index " +
                                    std::to_string(plan.size() - 1));
  }

  SpikingNetwork net;
  net.model_ = model;
  net.params_ = params;
  net.scatter_weights_.resize(plan.size());
  net.event_source_.assign(plan.size(), -1);
  net.constant_prefix_ = plan.size();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (plan[i].spec.kind == LayerKind::relu) {
      if (net.neuron_layers_.empty()) net.constant_prefix_ = i;
      net.neuron_layers_.push_back(i);
    }
  }
  if (params.mode != NeuronMode::spiking) return net;

  for (std::size_t i = 0; i < plan.size(); ++i) {
    const LayerPlan& lp = plan[i];
    if (!lp.spec.has_params()) continue;
    std::size_t j = i;
    while (j > 0 && plan[j - 1].spec.kind == LayerKind::flatten) --j;
    if (j == 0 || plan[j - 1].spec.kind != LayerKind::relu) continue;
    net.event_source_[i] = static_cast<int>(j - 1);
    const Tensor& w = model.params()[i].weight;
    const std::size_t out = w.dim(0), fan_in = w.size() / w.dim(0);
    // [fan_in][out]: for conv, fan_in runs over (c, ky, kx).
    auto& wt = net.scatter_weights_[i];
    wt.resize(w.size());
    kernels::transpose(w.data(), wt, out, fan_in);
  }
  return net;
}

void SimConfig::validate(const SpikingNetwork& net) const {
  if (n_steps == 0) fail(ErrorCode::config, "n_steps must be positive");
  if (readout_window == 0) fail(ErrorCode::config, "readout window must be positive");
  if (readout_window > n_steps) {
    fail(ErrorCode::config, "readout window " + std::to_string(readout_window) +
                                " exceeds n_steps " + std::to_string(n_steps));
  }
  if (record_traces && trace_layer >= net.neuron_layers().size()) {
    fail(ErrorCode::config, "trace layer " + std::to_string(trace_layer) + " but network has " +
                                std::to_string(net.neuron_layers().size()) + " neuron layers");
  }
}

Simulator::Simulator(const SpikingNetwork& net) : net_(&net) {
  const auto& plan = net.model().plan();
  state_.membrane.resize(plan.size());
  state_.filtered.resize(plan.size());
  state_.current.resize(plan.size());
  act_.resize(plan.size());
  spikes_.resize(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (plan[i].spec.kind == LayerKind::relu) {
      state_.membrane[i].assign(plan[i].out_size(), 0.0);
      state_.filtered[i].assign(plan[i].out_size(), 0.0);
    } else {
      act_[i].assign(plan[i].out_size(), 0.0);
    }
    if (net.event_source()[i] >= 0) state_.current[i].assign(plan[i].out_size(), 0.0);
  }
}

void Simulator::reset() {
  for (auto* group : {&state_.membrane, &state_.filtered, &state_.current}) {
    for (auto& v : *group) std::fill(v.begin(), v.end(), 0.0);
  }
}

SimResult Simulator::run(std::span<const double> image, const SimConfig& cfg) {
  const SpikingNetwork& net = *net_;
  cfg.validate(net);
  const Model& model = net.model();
  const auto& plan = model.plan();
  const auto& params = model.params();
  if (image.size() != model.input_size()) {
    fail(ErrorCode::dimension, "image has " + std::to_string(image.size()) +
                                   " values, network expects " + shape_string(model.spec().input));
  }
  const ConversionParams& cp = net.params();
  const bool spiking = cp.mode == NeuronMode::spiking;
  const bool passthrough = cp.tau == 0.0;
  const double a = net.filter_decay();
  const double b = 1.0 - a;
  const double amp = net.spike_amplitude();
  const double s = cp.rate_scale, dt = cp.dt;
  const std::size_t traced = cfg.record_traces ? net.neuron_layers()[cfg.trace_layer] : plan.size();

  // Output buffer of each layer; flatten aliases its input.
  auto output = [&](std::size_t i) -> std::span<const double> {
    while (plan[i].spec.kind == LayerKind::flatten) {
      if (i == 0) return image;
      --i;
    }
    if (plan[i].spec.kind == LayerKind::relu) return state_.filtered[i];
    return act_[i];
  };
  auto input = [&](std::size_t i) -> std::span<const double> {
    return i == 0 ? image : output(i - 1);
  };

  for (std::size_t i = 0; i < net.constant_prefix(); ++i) {
    if (plan[i].spec.kind == LayerKind::flatten) continue;
    apply_layer(plan[i], params[i], input(i), act_[i], scratch_);
  }

  const std::size_t classes = model.output_size();
  SimResult result;
  result.step_logits = Tensor({cfg.n_steps, classes});
  SpikeTrace trace;
  if (cfg.record_traces) {
    trace.layer = traced;
    trace.neurons = plan[traced].out_size();
    trace.steps = cfg.n_steps;
    trace.dt = dt;
  }

  for (std::size_t t = 0; t < cfg.n_steps; ++t) {
    for (std::size_t i = net.constant_prefix(); i < plan.size(); ++i) {
      const LayerPlan& lp = plan[i];
      switch (lp.spec.kind) {
        case LayerKind::relu: {
          const auto u = input(i);
          auto& v = state_.membrane[i];
          auto& y = state_.filtered[i];
          auto& fired = spikes_[i];
          fired.clear();
          const bool record = i == traced;
          for (std::size_t k = 0; k < u.size(); ++k) {
            double x;
            if (spiking) {
              v[k] += relu_value(s * u[k]) * dt;
              if (v[k] >= 1.0) {
                v[k] -= 1.0;
                fired.push_back(static_cast<std::uint32_t>(k));
                x = amp;
              } else {
                x = 0.0;
              }
            } else {
              x = relu_value(u[k]);
            }
            y[k] = passthrough ? x : a * y[k] + b * x;
            if (record && x != 0.0) {
              trace.events.push_back(
                  {static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(k), x});
            }
          }
          break;
        }
        case LayerKind::conv2d:
        case LayerKind::dense: {
          const int src = net.event_source()[i];
          if (src < 0) {
            apply_layer(lp, params[i], input(i), act_[i], scratch_);
            break;
          }
          auto& cur = state_.current[i];
          const auto& wt = net.scatter_weights()[i];
          const double coeff = b * amp;
          if (passthrough) {
            std::fill(cur.begin(), cur.end(), 0.0);
          } else {
            for (double& c : cur) c *= a;
          }
          const std::size_t units = lp.spec.units;
          const auto& bias = params[i].bias;
          auto& out = act_[i];
          if (lp.spec.kind == LayerKind::dense) {
            for (std::uint32_t n : spikes_[static_cast<std::size_t>(src)]) {
              const double* w = wt.data() + std::size_t{n} * units;
              for (std::size_t o = 0; o < units; ++o) cur[o] += coeff * w[o];
            }
            for (std::size_t o = 0; o < units; ++o) out[o] = cur[o] + bias[o];
            break;
          }
          // cur is position-major [P][C_out].
          const ConvGeometry& g = lp.conv;
          const std::size_t plane = g.in_h * g.in_w, positions = g.positions();
          for (std::uint32_t n : spikes_[static_cast<std::size_t>(src)]) {
            const std::size_t c = n / plane;
            const long y = static_cast<long>((n % plane) / g.in_w);
            const long x = static_cast<long>(n % g.in_w);
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const long oy_num = y + static_cast<long>(g.pad_top) - static_cast<long>(ky);
              if (oy_num < 0 || oy_num % static_cast<long>(g.stride) != 0) continue;
              const std::size_t oy = static_cast<std::size_t>(oy_num) / g.stride;
              if (oy >= g.out_h) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long ox_num = x + static_cast<long>(g.pad_left) - static_cast<long>(kx);
                if (ox_num < 0 || ox_num % static_cast<long>(g.stride) != 0) continue;
                const std::size_t ox = static_cast<std::size_t>(ox_num) / g.stride;
                if (ox >= g.out_w) continue;
                const double* w = wt.data() + ((c * g.kernel_h + ky) * g.kernel_w + kx) * units;
                double* dst = cur.data() + (oy * g.out_w + ox) * units;
                for (std::size_t o = 0; o < units; ++o) dst[o] += coeff * w[o];
              }
            }
          }
          for (std::size_t o = 0; o < units; ++o) {
            for (std::size_t p = 0; p < positions; ++p) {
              out[o * positions + p] = cur[p * units + o] + bias[o];
            }
          }
          break;
        }
        case LayerKind::maxpool2d:
          apply_layer(lp, params[i], input(i), act_[i], scratch_);
          break;
        case LayerKind::flatten:
          break;
        case LayerKind::tanh:
          fail(ErrorCode::conversion, "tanh layer in spiking network");
      }
    }
    const auto logits = output(plan.size() - 1);
    std::copy(logits.begin(), logits.end(),
              result.step_logits.data().begin() + static_cast<std::ptrdiff_t>(t * classes));
  }

  // Readout mean around the last step: exact when every step agrees.
  const std::size_t last = cfg.n_steps - 1;
  std::vector<double> mean(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const double ref = result.step_logits.at(last, c);
    double dev = 0.0;
    for (std::size_t t = cfg.n_steps - cfg.readout_window; t < cfg.n_steps; ++t) {
      dev += result.step_logits.at(t, c) - ref;
    }
    mean[c] = ref + dev / static_cast<double>(cfg.readout_window);
  }
  result.probabilities = Tensor(Shape{classes});
  softmax(mean, result.probabilities.data());
  result.predicted = argmax(result.probabilities.data());

  if (cfg.record_traces) {
    compute_trace_rates(trace);
    result.trace = std::move(trace);
  }
  return result;
}

void compute_trace_rates(SpikeTrace& trace) {
  std::vector<double> charge(trace.neurons, 0.0);
  for (const auto& e : trace.events) {
    if (e.neuron >= trace.neurons || e.step >= trace.steps) {
      fail(ErrorCode::validation, "spike event outside the trace bounds");
    }
    charge[e.neuron] += e.amplitude * trace.dt;
  }
  const double span = static_cast<double>(trace.steps) * trace.dt;
  trace.rates.resize(trace.neurons);
  for (std::size_t k = 0; k < trace.neurons; ++k) trace.rates[k] = charge[k] / span;
}

SimResult simulate(const SpikingNetwork& net, const Tensor& image, const SimConfig& cfg) {
  Simulator sim(net);
  return sim.run(image.data(), cfg);
}

BatchSimResult batch_simulate(const SpikingNetwork& net, const Dataset& ds, const SimConfig& cfg,
                              std::size_t threads) {
  if (ds.empty()) fail(ErrorCode::empty_subset, "simulation dataset is empty");
  cfg.validate(net);
  SimConfig run_cfg = cfg;
  run_cfg.record_traces = false;
  const std::size_t classes = net.model().output_size();
  BatchSimResult r;
  r.probabilities = Tensor({ds.size(), classes});
  threads = std::clamp<std::size_t>(threads, 1, ds.size());

  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](std::size_t tid) {
    try {
      Simulator sim(net);
      std::vector<double> image(ds.pixels_per_image());
      for (std::size_t i = tid; i < ds.size(); i += threads) {
        sim.reset();
        ds.copy_image(i, image);
        const SimResult res = sim.run(image, run_cfg);
        std::copy(res.probabilities.data().begin(), res.probabilities.data().end(),
                  r.probabilities.data().begin() + static_cast<std::ptrdiff_t>(i * classes));
      }
    } catch (...) {
      errors[tid] = std::current_exception();
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  r.stats = classification_stats(r.probabilities, ds.labels());
  return r;
}

}  // namespace spikecl
