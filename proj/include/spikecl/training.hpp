#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "spikecl/dataset.hpp"
#include "spikecl/model.hpp"

namespace spikecl {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l2 = 1e-4;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;

  static AdamState fresh(std::span<const Tensor* const> params);
};

// One bias-corrected Adam update. A non-finite gradient aborts before any
// parameter changes; the error names the tensor and the step.
void adam_step(const AdamConfig& cfg, AdamState& state, std::span<Tensor* const> params,
               std::span<const Tensor> grads, std::span<const std::string> names = {});

struct TrainConfig {
  int epochs = 10;
  std::size_t batch_size = 200;
  AdamConfig adam;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
};

// Trains on `subset` with a fresh optimizer state; weights carry over in
// `model`. Shuffling is driven by `seed`. Returns the per-epoch mean loss.
std::vector<double> train_increment(Model& model, const Dataset& subset, const TrainConfig& cfg,
                                    std::uint64_t seed,
                                    const std::function<void(const EpochLog&)>& on_epoch = {});

// Per-example class probabilities for a dataset (N×10).
Tensor predict_probabilities(const Model& model, const Dataset& ds);

struct ClassificationStats {
  double accuracy = 0.0;
  std::map<int, double> per_class_accuracy;
  double mean_true_probability = 0.0;
  std::size_t count = 0;
};

// Aggregates per-example probabilities: argmax with lowest-id tie-break,
// per-class accuracy over each class's own examples.
ClassificationStats classification_stats(const Tensor& probabilities,
                                         std::span<const std::uint8_t> labels);

struct Evaluation {
  ClassificationStats stats;
  Tensor probabilities;  // N×10
};

Evaluation evaluate(const Model& model, const Dataset& test);

}  // namespace spikecl
