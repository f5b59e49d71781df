#include "spikecl/spikecl.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "spikecl/checkpoint.hpp"
#include "spikecl/config.hpp"
#include "spikecl/error.hpp"
#include "spikecl/harness.hpp"
#include "spikecl/report.hpp"
#include "spikecl/snn.hpp"
#include "spikecl/training.hpp"

struct spikecl_config {
  spikecl::ExperimentConfig cfg;
};
struct spikecl_dataset {
  spikecl::Dataset ds;
};
struct spikecl_model {
  spikecl::Model model;
};
struct spikecl_network {
  spikecl::SpikingNetwork net;
};
struct spikecl_report {
  spikecl::EvalReport report;
};

namespace {

thread_local std::string g_last_error;

struct ArgumentError {
  std::string what;
};

void require(bool ok, const char* what) {
  if (!ok) throw ArgumentError{what};
}

template <class F>
spikecl_status guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return SPIKECL_OK;
  } catch (const spikecl::Error& e) {
    g_last_error = e.what();
    return static_cast<spikecl_status>(static_cast<int>(e.code()));
  } catch (const ArgumentError& e) {
    g_last_error = e.what;
    return SPIKECL_ERR_ARGUMENT;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return SPIKECL_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SPIKECL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SPIKECL_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return SPIKECL_ERR_INTERNAL;
  }
}

void copy_text(const std::string& text, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (!buf) return;
  if (cap < text.size() + 1) {
    spikecl::fail(spikecl::ErrorCode::length, "buffer of " + std::to_string(cap) + " bytes, need " +
                                                  std::to_string(text.size() + 1));
  }
  std::memcpy(buf, text.c_str(), text.size() + 1);
}

spikecl::Split to_split(spikecl_split s) {
  return s == SPIKECL_TEST ? spikecl::Split::test : spikecl::Split::train;
}

std::function<void(const spikecl::EpochLog&)> epoch_logger(size_t increment, spikecl_log_fn log,
                                                           void* user) {
  if (!log) return {};
  return [=](const spikecl::EpochLog& e) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "increment %zu epoch %d loss %.6f", increment + 1, e.epoch + 1,
                  e.mean_loss);
    log(buf, user);
  };
}

}  // namespace

extern "C" {

const char* spikecl_version(void) { return "0.1.0"; }

const char* spikecl_status_string(spikecl_status status) {
  switch (status) {
    case SPIKECL_OK:
      return "ok";
    case SPIKECL_ERR_ARGUMENT:
      return "argument";
    case SPIKECL_ERR_INTERNAL:
      return "internal";
    default:
      break;
  }
  const int code = static_cast<int>(status);
  if (code >= 1 && code <= 9) return spikecl::to_string(static_cast<spikecl::ErrorCode>(code));
  return "unknown";
}

const char* spikecl_last_error(void) { return g_last_error.c_str(); }

spikecl_status spikecl_config_new(spikecl_config** out) {
  return guarded([&] {
    require(out, "null output pointer");
    *out = new spikecl_config{};
  });
}

void spikecl_config_free(spikecl_config* cfg) { delete cfg; }

spikecl_status spikecl_config_set(spikecl_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg && key && value, "null argument");
    cfg->cfg.set(key, value);
  });
}

spikecl_status spikecl_config_get(const spikecl_config* cfg, const char* key, char* buf, size_t cap,
                                  size_t* needed) {
  return guarded([&] {
    require(cfg && key, "null argument");
    copy_text(cfg->cfg.get(key), buf, cap, needed);
  });
}

spikecl_status spikecl_config_load_file(spikecl_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg && path, "null argument");
    cfg->cfg.load_file(path);
  });
}

spikecl_status spikecl_config_to_text(const spikecl_config* cfg, char* buf, size_t cap,
                                      size_t* needed) {
  return guarded([&] {
    require(cfg, "null config");
    copy_text(cfg->cfg.to_text(), buf, cap, needed);
  });
}

spikecl_status spikecl_config_validate(const spikecl_config* cfg) {
  return guarded([&] {
    require(cfg, "null config");
    cfg->cfg.validate();
  });
}

size_t spikecl_config_key_count(void) { return spikecl::ExperimentConfig::keys().size(); }

const char* spikecl_config_key(size_t index) {
  const auto& keys = spikecl::ExperimentConfig::keys();
  return index < keys.size() ? keys[index].c_str() : nullptr;
}

spikecl_status spikecl_dataset_load(const spikecl_config* cfg, spikecl_split split,
                                    spikecl_dataset** out) {
  return guarded([&] {
    require(cfg && out, "null argument");
    *out = new spikecl_dataset{
        spikecl::load_dataset(cfg->cfg.data_dir, cfg->cfg.dataset, to_split(split))};
  });
}

spikecl_status spikecl_dataset_load_files(const char* images_path, const char* labels_path,
                                          spikecl_split split, spikecl_dataset** out) {
  return guarded([&] {
    require(images_path && labels_path && out, "null argument");
    *out = new spikecl_dataset{spikecl::load_dataset(
        spikecl::DatasetFiles{images_path, labels_path}, to_split(split), spikecl::Source::mnist)};
  });
}

void spikecl_dataset_free(spikecl_dataset* ds) { delete ds; }

size_t spikecl_dataset_size(const spikecl_dataset* ds) { return ds ? ds->ds.size() : 0; }
size_t spikecl_dataset_rows(const spikecl_dataset* ds) { return ds ? ds->ds.rows() : 0; }
size_t spikecl_dataset_cols(const spikecl_dataset* ds) { return ds ? ds->ds.cols() : 0; }

spikecl_status spikecl_dataset_label(const spikecl_dataset* ds, size_t index, int* label) {
  return guarded([&] {
    require(ds && label, "null argument");
    require(index < ds->ds.size(), "index outside dataset");
    *label = ds->ds.label(index);
  });
}

spikecl_status spikecl_dataset_histogram(const spikecl_dataset* ds, size_t* counts) {
  return guarded([&] {
    require(ds && counts, "null argument");
    const auto h = ds->ds.label_histogram();
    for (size_t c = 0; c < h.size(); ++c) counts[c] = h[c];
  });
}

spikecl_status spikecl_dataset_image(const spikecl_dataset* ds, size_t index, double* out,
                                     size_t cap) {
  return guarded([&] {
    require(ds && out, "null argument");
    require(index < ds->ds.size(), "index outside dataset");
    if (cap < ds->ds.pixels_per_image()) {
      spikecl::fail(spikecl::ErrorCode::length, "image buffer of " + std::to_string(cap) +
                                                    " values, need " +
                                                    std::to_string(ds->ds.pixels_per_image()));
    }
    ds->ds.copy_image(index, std::span<double>(out, ds->ds.pixels_per_image()));
  });
}

spikecl_status spikecl_model_new(const spikecl_config* cfg, spikecl_model** out) {
  return guarded([&] {
    require(cfg && out, "null argument");
    *out = new spikecl_model{spikecl::Model(cfg->cfg.model, cfg->cfg.seed)};
  });
}

spikecl_status spikecl_model_load(const char* path, spikecl_model** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new spikecl_model{spikecl::load_model(path)};
  });
}

spikecl_status spikecl_model_save(const spikecl_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "null argument");
    spikecl::save_model(model->model, path);
  });
}

void spikecl_model_free(spikecl_model* model) { delete model; }

size_t spikecl_model_parameter_count(const spikecl_model* model) {
  return model ? model->model.parameter_count() : 0;
}

size_t spikecl_increment_count(const spikecl_config* cfg, const spikecl_dataset* train) {
  if (!cfg || !train) return 0;
  try {
    return spikecl::build_increments(train->ds.classes(), cfg->cfg.group_size, cfg->cfg.class_order)
        .size();
  } catch (...) {
    return 0;
  }
}

spikecl_status spikecl_model_train_increment(spikecl_model* model, const spikecl_config* cfg,
                                             const spikecl_dataset* train, size_t increment,
                                             double* final_loss, spikecl_log_fn log, void* user) {
  return guarded([&] {
    require(model && cfg && train, "null argument");
    const auto& c = cfg->cfg;
    c.validate();
    const auto schedule =
        spikecl::build_increments(train->ds.classes(), c.group_size, c.class_order);
    if (increment >= schedule.size()) {
      spikecl::fail(spikecl::ErrorCode::validation, "increment " + std::to_string(increment + 1) +
                                                        " beyond schedule of " +
                                                        std::to_string(schedule.size()));
    }
    const auto subset =
        spikecl::training_subset(train->ds, schedule.groups[increment], c.train_limit_per_class);
    const auto losses = spikecl::train_increment(model->model, subset, c.train,
                                                 spikecl::increment_seed(c.seed, increment),
                                                 epoch_logger(increment, log, user));
    if (final_loss) *final_loss = losses.empty() ? NAN : losses.back();
  });
}

spikecl_status spikecl_model_accuracy(const spikecl_model* model, const spikecl_dataset* ds,
                                      double* accuracy) {
  return guarded([&] {
    require(model && ds && accuracy, "null argument");
    *accuracy = spikecl::evaluate(model->model, ds->ds).stats.accuracy;
  });
}

spikecl_status spikecl_model_predict(const spikecl_model* model, const spikecl_dataset* ds,
                                     size_t index, double* probs) {
  return guarded([&] {
    require(model && ds && probs, "null argument");
    require(index < ds->ds.size(), "index outside dataset");
    const auto one = ds->ds.select(std::vector<std::size_t>{index});
    const auto p = spikecl::predict_probabilities(model->model, one);
    std::copy(p.data().begin(), p.data().end(), probs);
  });
}

spikecl_status spikecl_network_convert(const spikecl_model* model, const spikecl_config* cfg,
                                       spikecl_network** out) {
  return guarded([&] {
    require(model && cfg && out, "null argument");
    *out = new spikecl_network{spikecl::convert(model->model, cfg->cfg.snn)};
  });
}

spikecl_status spikecl_network_load(const char* path, spikecl_network** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new spikecl_network{spikecl::load_network(path)};
  });
}

spikecl_status spikecl_network_save(const spikecl_network* net, const char* path) {
  return guarded([&] {
    require(net && path, "null argument");
    spikecl::save_network(net->net, path);
  });
}

void spikecl_network_free(spikecl_network* net) { delete net; }

spikecl_status spikecl_network_accuracy(const spikecl_network* net, const spikecl_config* cfg,
                                        const spikecl_dataset* ds, double* accuracy) {
  return guarded([&] {
    require(net && cfg && ds && accuracy, "null argument");
    *accuracy =
        spikecl::batch_simulate(net->net, ds->ds, cfg->cfg.sim, cfg->cfg.threads).stats.accuracy;
  });
}

spikecl_status spikecl_network_simulate(const spikecl_network* net, const spikecl_config* cfg,
                                        const spikecl_dataset* ds, size_t index,
                                        const char* out_dir, double* probs, int* predicted,
                                        size_t* spike_count) {
  return guarded([&] {
    require(net && cfg && ds, "null argument");
    require(index < ds->ds.size(), "index outside dataset");
    spikecl::SimConfig sim = cfg->cfg.sim;
    sim.record_traces = true;
    const spikecl::Tensor image = ds->ds.image(index);
    const spikecl::SimResult r = spikecl::simulate(net->net, image, sim);
    if (out_dir) {
      const std::filesystem::path dir(out_dir);
      std::filesystem::create_directories(dir);
      spikecl::write_text(dir / "trace.tsv", spikecl::trace_tsv(*r.trace));
      spikecl::emit_raster(*r.trace, dir / "raster.svg");
      spikecl::write_text(
          dir / "frames.svg",
          spikecl::three_frame_svg(image, *r.trace, r.probabilities, ds->ds.label(index)));
    }
    if (probs) std::copy(r.probabilities.data().begin(), r.probabilities.data().end(), probs);
    if (predicted) *predicted = static_cast<int>(r.predicted);
    if (spike_count) *spike_count = r.trace->events.size();
  });
}

spikecl_status spikecl_run_experiment(const spikecl_config* cfg, const char* out_dir,
                                      spikecl_log_fn log, void* user, spikecl_report** out) {
  return guarded([&] {
    require(cfg, "null config");
    spikecl::RunOptions opts;
    if (out_dir) opts.out_dir = std::filesystem::path(out_dir);
    if (log) opts.log = [=](const std::string& m) { log(m.c_str(), user); };
    spikecl::EvalReport report = spikecl::run_experiment(cfg->cfg, opts);
    if (out_dir) spikecl::emit_tables(report, out_dir);
    if (out) *out = new spikecl_report{std::move(report)};
  });
}

spikecl_status spikecl_report_load(const char* path, spikecl_report** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new spikecl_report{spikecl::load_report_json(path)};
  });
}

void spikecl_report_free(spikecl_report* report) { delete report; }

spikecl_status spikecl_report_emit(const spikecl_report* report, const char* out_dir) {
  return guarded([&] {
    require(report && out_dir, "null argument");
    spikecl::emit_tables(report->report, out_dir);
  });
}

spikecl_status spikecl_report_table(const spikecl_report* report, const char* tag, char* buf,
                                    size_t cap, size_t* needed) {
  return guarded([&] {
    require(report && tag, "null argument");
    const auto* m = report->report.find(tag);
    if (!m) spikecl::fail(spikecl::ErrorCode::validation, std::string("no model tagged ") + tag);
    copy_text(spikecl::table_csv(*m), buf, cap, needed);
  });
}

size_t spikecl_report_increments(const spikecl_report* report) {
  return report ? report->report.schedule.size() : 0;
}

spikecl_status spikecl_report_value(const spikecl_report* report, const char* tag, size_t increment,
                                    const char* column, double* value) {
  return guarded([&] {
    require(report && tag && column && value, "null argument");
    const auto* m = report->report.find(tag);
    if (!m) spikecl::fail(spikecl::ErrorCode::validation, std::string("no model tagged ") + tag);
    require(increment >= 1 && increment <= m->increments.size(), "increment out of range");
    const auto& e = m->increments[increment - 1];
    const std::string col = column;
    if (col == "current_acc") {
      *value = e.current_acc;
    } else if (col == "cumulative_seen_acc") {
      *value = e.cumulative_seen_acc;
    } else if (col == "full_test_acc") {
      *value = e.full_test_acc;
    } else if (col == "retention_mean") {
      *value = e.retention ? e.retention->mean_true_probability : NAN;
    } else if (col == "retention_rank1_frac") {
      *value = e.retention ? e.retention->rank1_fraction() : NAN;
    } else {
      throw ArgumentError{"unknown column " + col};
    }
  });
}

}  // extern "C"
