#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spikecl/dataset.hpp"
#include "spikecl/model.hpp"
#include "spikecl/snn.hpp"
#include "spikecl/training.hpp"

namespace spikecl {

// Every experiment knob. The text form is a flat "key = value" document; see
// ExperimentConfig::keys() for the accepted keys.
struct ExperimentConfig {
  Source dataset = Source::mnist;
  std::filesystem::path data_dir;
  ModelSpec model = ModelSpec::reference();
  int group_size = 2;
  std::optional<std::vector<int>> class_order;
  TrainConfig train;
  std::uint64_t seed = 1;
  ConversionParams snn;
  SimConfig sim;
  bool evaluate_snn = true;
  std::size_t snn_eval_limit = 0;         // 0: whole test set
  std::size_t train_limit_per_class = 0;  // 0: every training example
  std::size_t threads = 1;

  ExperimentConfig();

  // Throws a config error for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Applies every assignment in a key/value document ('#' starts a comment).
  void apply_text(const std::string& text);
  void load_file(const std::filesystem::path& path);
  std::string to_text() const;

  void validate() const;
};

// Compiled-in default data directory, overridden by SPIKECL_DATA_DIR.
std::filesystem::path default_data_dir();

}  // namespace spikecl
