#include "spikecl/training.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "spikecl/error.hpp"

namespace spikecl {

AdamState AdamState::fresh(std::span<const Tensor* const> params) {
  AdamState s;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
  }
  return s;
}

void adam_step(const AdamConfig& cfg, AdamState& state, std::span<Tensor* const> params,
               std::span<const Tensor> grads, std::span<const std::string> names) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    fail(ErrorCode::dimension, "adam: parameter, gradient and moment counts differ");
  }
  const std::int64_t next = state.step + 1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i]->shape() || state.m[i].shape() != params[i]->shape()) {
      fail(ErrorCode::dimension, "adam: shape mismatch for parameter " + std::to_string(i));
    }
    if (!grads[i].all_finite()) {
      const std::string name = i < names.size() ? names[i] : "parameter " + std::to_string(i);
      fail(ErrorCode::numeric,
           "non-finite gradient in " + name + " at optimizer step " + std::to_string(next));
    }
  }
  state.step = next;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i]->data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      theta[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

std::vector<double> train_increment(Model& model, const Dataset& subset, const TrainConfig& cfg,
                                    std::uint64_t seed,
                                    const std::function<void(const EpochLog&)>& on_epoch) {
  if (subset.empty()) fail(ErrorCode::empty_subset, "training subset is empty");
  if (cfg.batch_size == 0) fail(ErrorCode::config, "batch size must be positive");
  if (cfg.epochs < 0) fail(ErrorCode::config, "epochs must be >= 0");
  for (int c : subset.classes()) {
    if (c < 0 || c >= kNumClasses) {
      fail(ErrorCode::validation, "training label " + std::to_string(c) + " outside 0..9");
    }
  }
  std::vector<double> epoch_losses;
  if (cfg.epochs == 0) return epoch_losses;

  const auto params = model.parameter_tensors();
  const auto names = model.parameter_names();
  AdamState state = AdamState::fresh(std::vector<const Tensor*>(params.begin(), params.end()));
  GradientWorkspace ws(model);
  Gradients grads;
  std::vector<Tensor> flat_grads;

  const std::size_t per = subset.pixels_per_image();
  std::vector<double> buffer(cfg.batch_size * per);
  std::vector<std::span<const double>> inputs;
  std::vector<int> labels;
  std::vector<std::size_t> order(subset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      inputs.clear();
      labels.clear();
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t idx = order[start + b];
        std::span<double> slot(buffer.data() + b * per, per);
        subset.copy_image(idx, slot);
        inputs.emplace_back(slot);
        labels.push_back(subset.label(idx));
      }
      const double loss = ws.loss_and_gradients(model, inputs, labels, cfg.adam.l2, grads);
      if (!std::isfinite(loss)) {
        fail(ErrorCode::numeric, "non-finite loss at epoch " + std::to_string(epoch) +
                                     ", batch starting " + std::to_string(start));
      }
      weighted += loss * static_cast<double>(n);
      flat_grads.clear();
      for (std::size_t i = 0; i < model.plan().size(); ++i) {
        if (!model.plan()[i].spec.has_params()) continue;
        flat_grads.push_back(std::move(grads[i].weight));
        flat_grads.push_back(std::move(grads[i].bias));
      }
      adam_step(cfg.adam, state, params, flat_grads, names);
    }
    const double mean = weighted / static_cast<double>(order.size());
    epoch_losses.push_back(mean);
    model.loss_log().push_back(mean);
    if (on_epoch) on_epoch({epoch, mean});
  }
  return epoch_losses;
}

Tensor predict_probabilities(const Model& model, const Dataset& ds) {
  const std::size_t classes = model.output_size();
  Tensor probs({ds.size(), classes});
  std::vector<double> image(ds.pixels_per_image());
  ForwardTrace trace;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ds.copy_image(i, image);
    forward_sample(model, image, trace);
    softmax(trace.logits(), probs.data().subspan(i * classes, classes));
  }
  return probs;
}

ClassificationStats classification_stats(const Tensor& probabilities,
                                         std::span<const std::uint8_t> labels) {
  if (labels.empty()) fail(ErrorCode::empty_subset, "evaluation set is empty");
  const std::size_t classes = probabilities.dim(1);
  if (probabilities.dim(0) != labels.size()) {
    fail(ErrorCode::dimension, "probability rows do not match label count");
  }
  ClassificationStats s;
  s.count = labels.size();
  std::map<int, std::size_t> hits, totals;
  std::size_t correct = 0;
  double true_prob = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = probabilities.data().subspan(i * classes, classes);
    const int y = labels[i];
    const bool ok = static_cast<int>(argmax(row)) == y;
    correct += ok;
    ++totals[y];
    hits[y] += ok;
    true_prob += row[static_cast<std::size_t>(y)];
  }
  s.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  s.mean_true_probability = true_prob / static_cast<double>(labels.size());
  for (const auto& [c, n] : totals) {
    s.per_class_accuracy[c] = static_cast<double>(hits[c]) / static_cast<double>(n);
  }
  return s;
}

Evaluation evaluate(const Model& model, const Dataset& test) {
  if (test.empty()) fail(ErrorCode::empty_subset, "evaluation set is empty");
  Evaluation e;
  e.probabilities = predict_probabilities(model, test);
  e.stats = classification_stats(e.probabilities, test.labels());
  return e;
}

}  // namespace spikecl
