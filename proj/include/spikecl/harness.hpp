#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "spikecl/config.hpp"
#include "spikecl/dataset.hpp"
#include "spikecl/tensor.hpp"

namespace spikecl {

struct RetentionStats {
  double mean_true_probability = 0.0;
  // rank_histogram[r-1] counts examples whose true class has rank r.
  std::array<std::size_t, kNumClasses> rank_histogram{};
  std::size_t count = 0;

  double rank1_fraction() const;
  bool operator==(const RetentionStats& other) const = default;
};

// Rank of the true class within the descending probability vector: 1 plus
// the number of classes that score higher, or equal with a lower class id.
std::size_t true_class_rank(std::span<const double> probabilities, int label);

// Rows of `probabilities` are per-example class distributions. Every label
// must be in `previously_trained`.
RetentionStats retention_metric(const Tensor& probabilities, std::span<const std::uint8_t> labels,
                                const std::set<int>& previously_trained);

struct IncrementEval {
  std::size_t increment = 0;  // 0-based
  std::vector<int> classes;   // the group trained at this increment
  // Row i of the accuracy matrix: one entry per group 0..=i.
  std::vector<double> group_accuracy;
  std::vector<std::size_t> group_correct;
  std::vector<std::size_t> group_total;
  double current_acc = 0.0;
  double cumulative_seen_acc = 0.0;
  std::size_t seen_correct = 0;
  std::size_t seen_total = 0;
  double full_test_acc = 0.0;
  std::size_t full_correct = 0;
  std::size_t full_total = 0;
  // Over test examples of classes trained before this increment; absent at
  // the first increment.
  std::optional<RetentionStats> retention;

  bool operator==(const IncrementEval& other) const = default;
};

// Metrics for one increment from per-example probabilities.
IncrementEval evaluate_increment(const Tensor& probabilities, std::span<const std::uint8_t> labels,
                                 const IncrementSchedule& schedule, std::size_t increment);

struct ModelEval {
  std::string tag;  // "ann" or "snn"
  std::vector<IncrementEval> increments;

  bool operator==(const ModelEval& other) const = default;
};

struct PhaseTiming {
  std::size_t increment = 0;
  std::string phase;  // train, evaluate_ann, convert, evaluate_snn
  double seconds = 0.0;
};

struct EvalReport {
  std::string dataset;
  IncrementSchedule schedule;
  std::string config;                             // ExperimentConfig::to_text()
  std::vector<std::vector<double>> epoch_losses;  // per increment
  std::vector<ModelEval> models;
  bool complete = false;
  // Wall-clock only; never serialized into the deterministic artifacts.
  std::vector<PhaseTiming> timings;

  const ModelEval* find(const std::string& tag) const;
  // Throws when the matrix is not lower-triangular, a cell is missing or a
  // value leaves [0,1].
  void validate() const;
  bool operator==(const EvalReport& other) const;
};

struct ComparisonRow {
  std::size_t increment = 0;
  double cumulative_delta = 0.0;
  double full_test_delta = 0.0;
  std::optional<double> retention_delta;

  bool operator==(const ComparisonRow& other) const = default;
};

struct Comparison {
  std::string baseline;
  std::string candidate;
  std::vector<ComparisonRow> rows;
  // Candidate assigns at least as much probability to forgotten classes as
  // the baseline after the last increment.
  std::optional<bool> retention_trend;

  bool operator==(const Comparison& other) const = default;
};

// candidate − baseline per increment. The reports must share dataset and
// schedule.
Comparison compare_models(const EvalReport& baseline_report, const std::string& baseline_tag,
                          const EvalReport& candidate_report, const std::string& candidate_tag);
Comparison compare_models(const EvalReport& report, const std::string& baseline_tag = "ann",
                          const std::string& candidate_tag = "snn");

struct RunOptions {
  // Receives report.partial.json on failure, probabilities.csv and
  // timings.json.
  std::optional<std::filesystem::path> out_dir;
  bool write_probabilities = true;
  // model_inc<i>.ckpt after each increment.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const std::string&)> log;
};

// Seed used for the shuffling of increment i.
std::uint64_t increment_seed(std::uint64_t seed, std::size_t increment);

// Training examples of `classes`, capped at `limit_per_class` each when
// nonzero (first examples in file order).
Dataset training_subset(const Dataset& train, const std::vector<int>& classes,
                        std::size_t limit_per_class);

EvalReport run_experiment(const ExperimentConfig& cfg, const Dataset& train, const Dataset& test,
                          const RunOptions& opts = {});
// Loads the configured dataset from cfg.data_dir.
EvalReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

}  // namespace spikecl
