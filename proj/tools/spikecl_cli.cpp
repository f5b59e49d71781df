// Command-line front end. Talks to the library only through spikecl.h.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spikecl/spikecl.h"

namespace {

struct Failure {
  spikecl_status status;
};

void check(spikecl_status s) {
  if (s != SPIKECL_OK) throw Failure{s};
}

int exit_code(spikecl_status s) {
  switch (s) {
    case SPIKECL_ERR_IO:
    case SPIKECL_ERR_NUMERIC:
    case SPIKECL_ERR_INTERNAL:
      return 2;
    default:
      return 1;
  }
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Config = Handle<spikecl_config, spikecl_config_free>;
using Dataset = Handle<spikecl_dataset, spikecl_dataset_free>;
using Model = Handle<spikecl_model, spikecl_model_free>;
using Network = Handle<spikecl_network, spikecl_network_free>;
using Report = Handle<spikecl_report, spikecl_report_free>;

void log_line(const char* msg, void*) { std::fprintf(stderr, "%s\n", msg); }

std::string config_value(const spikecl_config* cfg, const char* key) {
  std::size_t need = 0;
  check(spikecl_config_get(cfg, key, nullptr, 0, &need));
  std::string s(need, '\0');
  check(spikecl_config_get(cfg, key, s.data(), s.size(), nullptr));
  s.resize(need - 1);
  return s;
}

// Config keys exposed as flags on every subcommand; a flag overrides the
// value read from --config.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
    for (std::size_t i = 0; i < spikecl_config_key_count(); ++i) {
      const std::string key = spikecl_config_key(i);
      std::string dashed = key;
      for (char& c : dashed) {
        if (c == '_') c = '-';
      }
      std::string names = "--" + dashed;
      if (dashed != key) names += ",--" + key;
      app->add_option_function<std::string>(
          names, [this, key](const std::string& v) { values[key] = v; }, "config: " + key);
    }
  }

  void apply(spikecl_config* cfg) const {
    if (!file.empty()) check(spikecl_config_load_file(cfg, file.c_str()));
    for (const auto& [k, v] : values) check(spikecl_config_set(cfg, k.c_str(), v.c_str()));
    check(spikecl_config_validate(cfg));
  }
};

void print_probs(const double* p) {
  for (int c = 0; c < 10; ++c) std::printf("  p%d %.6f\n", c, p[c]);
}

int cmd_ingest(const spikecl_config* cfg) {
  for (auto split : {SPIKECL_TRAIN, SPIKECL_TEST}) {
    Dataset ds;
    check(spikecl_dataset_load(cfg, split, ds.out()));
    std::size_t counts[10];
    check(spikecl_dataset_histogram(ds.get(), counts));
    std::printf("%s: %zu images of %zux%zu\n", split == SPIKECL_TRAIN ? "train" : "test",
                spikecl_dataset_size(ds.get()), spikecl_dataset_rows(ds.get()),
                spikecl_dataset_cols(ds.get()));
    std::printf("  labels:");
    for (int c = 0; c < 10; ++c) std::printf(" %d:%zu", c, counts[c]);
    std::printf("\n");
  }
  return 0;
}

int cmd_train(const spikecl_config* cfg, const std::string& out_dir, std::size_t increments) {
  Dataset train, test;
  check(spikecl_dataset_load(cfg, SPIKECL_TRAIN, train.out()));
  check(spikecl_dataset_load(cfg, SPIKECL_TEST, test.out()));
  Model model;
  check(spikecl_model_new(cfg, model.out()));
  std::filesystem::create_directories(out_dir);
  const std::size_t total = spikecl_increment_count(cfg, train.get());
  const std::size_t n = increments == 0 ? total : std::min(increments, total);
  for (std::size_t i = 0; i < n; ++i) {
    double loss = 0.0, acc = 0.0;
    check(
        spikecl_model_train_increment(model.get(), cfg, train.get(), i, &loss, log_line, nullptr));
    const std::string path = out_dir + "/model_inc" + std::to_string(i + 1) + ".ckpt";
    check(spikecl_model_save(model.get(), path.c_str()));
    check(spikecl_model_accuracy(model.get(), test.get(), &acc));
    std::printf("increment %zu loss %.6f full_test_acc %.4f -> %s\n", i + 1, loss, acc,
                path.c_str());
  }
  return 0;
}

int cmd_convert(const spikecl_config* cfg, const std::string& model_path,
                const std::string& out_path) {
  Model model;
  check(spikecl_model_load(model_path.c_str(), model.out()));
  Network net;
  check(spikecl_network_convert(model.get(), cfg, net.out()));
  check(spikecl_network_save(net.get(), out_path.c_str()));
  std::printf("%s -> %s (mode %s, rate_scale %s, tau %s)\n", model_path.c_str(), out_path.c_str(),
              config_value(cfg, "snn_mode").c_str(), config_value(cfg, "rate_scale").c_str(),
              config_value(cfg, "tau").c_str());
  return 0;
}

int cmd_simulate(const spikecl_config* cfg, const std::string& network_path,
                 const std::string& model_path, std::size_t index, const std::string& split,
                 const std::string& out_dir) {
  Network net;
  if (!network_path.empty()) {
    check(spikecl_network_load(network_path.c_str(), net.out()));
  } else {
    Model model;
    check(spikecl_model_load(model_path.c_str(), model.out()));
    check(spikecl_network_convert(model.get(), cfg, net.out()));
  }
  Dataset ds;
  check(spikecl_dataset_load(cfg, split == "train" ? SPIKECL_TRAIN : SPIKECL_TEST, ds.out()));
  double probs[10];
  int predicted = -1, label = -1;
  std::size_t spikes = 0;
  check(spikecl_network_simulate(net.get(), cfg, ds.get(), index, out_dir.c_str(), probs,
                                 &predicted, &spikes));
  check(spikecl_dataset_label(ds.get(), index, &label));
  std::printf("image %zu label %d predicted %d traced spikes %zu\n", index, label, predicted,
              spikes);
  print_probs(probs);
  std::printf("wrote %s/trace.tsv, raster.svg, frames.svg\n", out_dir.c_str());
  return 0;
}

void print_report(const spikecl_report* report) {
  for (const char* tag : {"ann", "snn"}) {
    std::size_t need = 0;
    if (spikecl_report_table(report, tag, nullptr, 0, &need) != SPIKECL_OK) continue;
    std::string text(need, '\0');
    check(spikecl_report_table(report, tag, text.data(), text.size(), nullptr));
    text.resize(need - 1);
    std::fputs(text.c_str(), stdout);
  }
}

int cmd_run(const spikecl_config* cfg, const std::string& out_dir) {
  Report report;
  check(spikecl_run_experiment(cfg, out_dir.c_str(), log_line, nullptr, report.out()));
  print_report(report.get());
  std::printf("artifacts in %s\n", out_dir.c_str());
  return 0;
}

int cmd_report(const std::string& input, const std::string& out_dir) {
  Report report;
  check(spikecl_report_load(input.c_str(), report.out()));
  check(spikecl_report_emit(report.get(), out_dir.c_str()));
  print_report(report.get());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spikecl: class-incremental CNN training with spiking conversion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", spikecl_version());

  auto* ingest = app.add_subcommand("ingest", "validate and summarize the dataset files");
  auto* train = app.add_subcommand("train", "train increments and write checkpoints");
  auto* convert = app.add_subcommand("convert", "turn a model checkpoint into a spiking network");
  auto* simulate = app.add_subcommand("simulate", "simulate one image and draw its spikes");
  auto* run = app.add_subcommand("run", "full experiment: train, convert, evaluate, report");
  auto* report = app.add_subcommand("report", "render tables and figures from report.json");

  std::vector<ConfigFlags> flags(5);
  CLI::App* with_config[] = {ingest, train, convert, simulate, run};
  for (std::size_t i = 0; i < 5; ++i) flags[i].attach(with_config[i]);

  std::string train_out = "checkpoints";
  std::size_t increments = 0;
  train->add_option("--out", train_out, "checkpoint directory");
  train->add_option("--increments", increments, "stop after this many increments (0: all)");

  std::string model_path, network_out;
  convert->add_option("--checkpoint", model_path, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  convert->add_option("--out", network_out, "spiking network file")->required();

  std::string sim_network, sim_model, sim_split = "test", sim_out = "simulate";
  std::size_t sim_index = 0;
  auto* net_opt = simulate->add_option("--network", sim_network, "spiking network file")
                      ->check(CLI::ExistingFile);
  auto* model_opt =
      simulate->add_option("--checkpoint", sim_model, "model checkpoint, converted with the config")
          ->check(CLI::ExistingFile);
  net_opt->excludes(model_opt);
  simulate->add_option("--index", sim_index, "image index");
  simulate->add_option("--split", sim_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));
  simulate->add_option("--out", sim_out, "output directory");

  std::string run_out = "results";
  run->add_option("--out", run_out, "output directory");

  std::string report_in, report_out;
  report->add_option("--input", report_in, "report.json")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*report) return cmd_report(report_in, report_out);
    Config cfg;
    check(spikecl_config_new(cfg.out()));
    for (std::size_t i = 0; i < 5; ++i) {
      if (*with_config[i]) flags[i].apply(cfg.get());
    }
    if (*ingest) return cmd_ingest(cfg.get());
    if (*train) return cmd_train(cfg.get(), train_out, increments);
    if (*convert) return cmd_convert(cfg.get(), model_path, network_out);
    if (*simulate) {
      if (sim_network.empty() && sim_model.empty()) {
        std::cerr << "simulate needs --network or --checkpoint\n" << simulate->help();
        return 1;
      }
      return cmd_simulate(cfg.get(), sim_network, sim_model, sim_index, sim_split, sim_out);
    }
    if (*run) return cmd_run(cfg.get(), run_out);
  } catch (const Failure& f) {
    std::cerr << "error (" << spikecl_status_string(f.status) << "): " << spikecl_last_error()
              << "\n";
    if (f.status == SPIKECL_ERR_CONFIG) std::cerr << app.get_subcommands().front()->help();
    return exit_code(f.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
