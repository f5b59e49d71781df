#include "spikecl/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "spikecl/error.hpp"

#ifndef SPIKECL_DEFAULT_DATA_DIR
#define SPIKECL_DEFAULT_DATA_DIR "data"
#endif

namespace spikecl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  fail(ErrorCode::config, "config key '" + key + "': '" + value + "' is not " + expected);
}

double parse_double(const std::string& key, const std::string& value) {
  double d = 0.0;
  const auto* end = value.data() + value.size();
  auto [p, ec] = std::from_chars(value.data(), end, d);
  if (ec != std::errc() || p != end || value.empty()) bad_value(key, value, "a number");
  return d;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  auto [p, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || p != end || value.empty()) {
    bad_value(key, value, "a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "a boolean");
}

std::string fmt_double(double d) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, p);
}

std::vector<int> parse_order(const std::string& key, const std::string& value) {
  std::vector<int> order;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto v = parse_unsigned(key, item);
    if (v >= static_cast<std::uint64_t>(kNumClasses)) bad_value(key, item, "a class id 0..9");
    order.push_back(static_cast<int>(v));
  }
  if (order.empty()) bad_value(key, value, "a comma separated class list");
  return order;
}

}  // namespace

std::filesystem::path default_data_dir() { return resolve_data_dir(SPIKECL_DEFAULT_DATA_DIR); }

ExperimentConfig::ExperimentConfig() : data_dir(default_data_dir()) {}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = {"dataset",
                                             "data_dir",
                                             "model",
                                             "group_size",
                                             "class_order",
                                             "epochs",
                                             "batch_size",
                                             "learning_rate",
                                             "beta1",
                                             "beta2",
                                             "epsilon",
                                             "l2",
                                             "seed",
                                             "snn_mode",
                                             "rate_scale",
                                             "tau",
                                             "dt",
                                             "n_steps",
                                             "readout_window",
                                             "trace_layer",
                                             "evaluate_snn",
                                             "snn_eval_limit",
                                             "train_limit_per_class",
                                             "threads"};
  return k;
}

void ExperimentConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  auto uint = [&] { return parse_unsigned(key, value); };
  auto num = [&] { return parse_double(key, value); };
  if (key == "dataset") {
    dataset = source_from_string(value);
  } else if (key == "data_dir") {
    data_dir = value;
  } else if (key == "model") {
    model = ModelSpec::parse(value, model.input);
    model.output_shapes();
  } else if (key == "group_size") {
    const auto v = uint();
    if (v == 0) bad_value(key, value, "a positive integer");
    group_size = static_cast<int>(v);
  } else if (key == "class_order") {
    if (value.empty() || value == "ascending") {
      class_order.reset();
    } else {
      class_order = parse_order(key, value);
    }
  } else if (key == "epochs") {
    train.epochs = static_cast<int>(uint());
  } else if (key == "batch_size") {
    const auto v = uint();
    if (v == 0) bad_value(key, value, "a positive integer");
    train.batch_size = v;
  } else if (key == "learning_rate") {
    train.adam.learning_rate = num();
  } else if (key == "beta1") {
    train.adam.beta1 = num();
  } else if (key == "beta2") {
    train.adam.beta2 = num();
  } else if (key == "epsilon") {
    train.adam.epsilon = num();
  } else if (key == "l2") {
    train.adam.l2 = num();
  } else if (key == "seed") {
    seed = uint();
  } else if (key == "snn_mode") {
    snn.mode = neuron_mode_from_string(value);
  } else if (key == "rate_scale") {
    snn.rate_scale = num();
  } else if (key == "tau") {
    snn.tau = num();
  } else if (key == "dt") {
    snn.dt = num();
  } else if (key == "n_steps") {
    sim.n_steps = uint();
  } else if (key == "readout_window") {
    sim.readout_window = uint();
  } else if (key == "trace_layer") {
    sim.trace_layer = uint();
  } else if (key == "evaluate_snn") {
    evaluate_snn = parse_bool(key, value);
  } else if (key == "snn_eval_limit") {
    snn_eval_limit = uint();
  } else if (key == "train_limit_per_class") {
    train_limit_per_class = uint();
  } else if (key == "threads") {
    threads = uint();
    if (threads == 0) bad_value(key, value, "a positive integer");
  } else {
    fail(ErrorCode::config, "unknown config key '" + key + "'");
  }
}

std::string ExperimentConfig::get(const std::string& key) const {
  if (key == "dataset") return to_string(dataset);
  if (key == "data_dir") return data_dir.string();
  if (key == "model") return model.to_string();
  if (key == "group_size") return std::to_string(group_size);
  if (key == "class_order") {
    if (!class_order) return "ascending";
    std::string s;
    for (int c : *class_order) s += (s.empty() ? "" : ",") + std::to_string(c);
    return s;
  }
  if (key == "epochs") return std::to_string(train.epochs);
  if (key == "batch_size") return std::to_string(train.batch_size);
  if (key == "learning_rate") return fmt_double(train.adam.learning_rate);
  if (key == "beta1") return fmt_double(train.adam.beta1);
  if (key == "beta2") return fmt_double(train.adam.beta2);
  if (key == "epsilon") return fmt_double(train.adam.epsilon);
  if (key == "l2") return fmt_double(train.adam.l2);
  if (key == "seed") return std::to_string(seed);
  if (key == "snn_mode") return to_string(snn.mode);
  if (key == "rate_scale") return fmt_double(snn.rate_scale);
  if (key == "tau") return fmt_double(snn.tau);
  if (key == "dt") return fmt_double(snn.dt);
  if (key == "n_steps") return std::to_string(sim.n_steps);
  if (key == "readout_window") return std::to_string(sim.readout_window);
  if (key == "trace_layer") return std::to_string(sim.trace_layer);
  if (key == "evaluate_snn") return evaluate_snn ? "true" : "false";
  if (key == "snn_eval_limit") return std::to_string(snn_eval_limit);
  if (key == "train_limit_per_class") return std::to_string(train_limit_per_class);
  if (key == "threads") return std::to_string(threads);
  fail(ErrorCode::config, "unknown config key '" + key + "'");
}

void ExperimentConfig::apply_text(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::config, "config line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + line + "'");
    }
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void ExperimentConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::config, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str());
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) {
    // data_dir and threads do not change results; keep them out so reports
    // stay byte-identical across machines.
    if (k == "data_dir" || k == "threads") continue;
    out += k + " = " + get(k) + "\n";
  }
  return out;
}

void ExperimentConfig::validate() const {
  model.output_shapes();
  snn.validate();
  if (sim.n_steps == 0 || sim.readout_window == 0 || sim.readout_window > sim.n_steps) {
    fail(ErrorCode::config, "need 0 < readout_window <= n_steps");
  }
  if (train.adam.learning_rate <= 0.0) fail(ErrorCode::config, "learning_rate must be > 0");
  if (train.adam.l2 < 0.0) fail(ErrorCode::config, "l2 must be >= 0");
  if (group_size < 1) fail(ErrorCode::config, "group_size must be >= 1");
}

}  // namespace spikecl
