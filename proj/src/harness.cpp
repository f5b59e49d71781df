#include "spikecl/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "spikecl/checkpoint.hpp"
#include "spikecl/error.hpp"
#include "spikecl/report.hpp"
#include "spikecl/snn.hpp"
#include "spikecl/training.hpp"

namespace spikecl {

double RetentionStats::rank1_fraction() const {
  return count == 0 ? 0.0 : static_cast<double>(rank_histogram[0]) / static_cast<double>(count);
}

std::size_t true_class_rank(std::span<const double> probabilities, int label) {
  const auto t = static_cast<std::size_t>(label);
  if (label < 0 || t >= probabilities.size()) {
    fail(ErrorCode::validation, "label " + std::to_string(label) + " outside probability vector");
  }
  const double pt = probabilities[t];
  std::size_t rank = 1;
  for (std::size_t c = 0; c < probabilities.size(); ++c) {
    if (probabilities[c] > pt || (probabilities[c] == pt && c < t)) ++rank;
  }
  return rank;
}

RetentionStats retention_metric(const Tensor& probabilities, std::span<const std::uint8_t> labels,
                                const std::set<int>& previously_trained) {
  if (labels.empty()) fail(ErrorCode::empty_subset, "retention metric over an empty example set");
  if (probabilities.rank() != 2 || probabilities.dim(0) != labels.size() ||
      probabilities.dim(1) != static_cast<std::size_t>(kNumClasses)) {
    fail(ErrorCode::dimension, "retention metric needs N×10 probabilities for N labels, got " +
                                   shape_string(probabilities.shape()));
  }
  RetentionStats r;
  const std::size_t classes = probabilities.dim(1);
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (!previously_trained.contains(y)) {
      fail(ErrorCode::validation, "example " + std::to_string(i) + " has label " +
                                      std::to_string(y) +
                                      " outside the previously trained classes");
    }
    const auto row = probabilities.data().subspan(i * classes, classes);
    sum += row[static_cast<std::size_t>(y)];
    ++r.rank_histogram[true_class_rank(row, y) - 1];
  }
  r.count = labels.size();
  r.mean_true_probability = sum / static_cast<double>(r.count);
  return r;
}

IncrementEval evaluate_increment(const Tensor& probabilities, std::span<const std::uint8_t> labels,
                                 const IncrementSchedule& schedule, std::size_t increment) {
  if (increment >= schedule.size()) {
    fail(ErrorCode::validation, "increment " + std::to_string(increment) + " beyond schedule of " +
                                    std::to_string(schedule.size()));
  }
  if (probabilities.rank() != 2 || probabilities.dim(0) != labels.size()) {
    fail(ErrorCode::dimension, "probabilities " + shape_string(probabilities.shape()) +
                                   " do not match " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = probabilities.dim(1);
  IncrementEval e;
  e.increment = increment;
  e.classes = schedule.groups[increment];
  e.group_correct.assign(increment + 1, 0);
  e.group_total.assign(increment + 1, 0);

  std::vector<std::size_t> prev_idx;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const auto row = probabilities.data().subspan(i * classes, classes);
    const bool correct = argmax(row) == static_cast<std::size_t>(y);
    ++e.full_total;
    if (correct) ++e.full_correct;
    const int g = schedule.group_of(y);
    if (g < 0 || static_cast<std::size_t>(g) > increment) continue;
    ++e.group_total[static_cast<std::size_t>(g)];
    if (correct) ++e.group_correct[static_cast<std::size_t>(g)];
    if (static_cast<std::size_t>(g) < increment) prev_idx.push_back(i);
  }
  if (e.full_total == 0) fail(ErrorCode::empty_subset, "evaluation set is empty");
  for (std::size_t j = 0; j <= increment; ++j) {
    if (e.group_total[j] == 0) {
      fail(ErrorCode::empty_subset,
           "no test examples for increment group " + std::to_string(j + 1));
    }
    e.group_accuracy.push_back(static_cast<double>(e.group_correct[j]) /
                               static_cast<double>(e.group_total[j]));
    e.seen_correct += e.group_correct[j];
    e.seen_total += e.group_total[j];
  }
  e.current_acc = e.group_accuracy.back();
  e.cumulative_seen_acc = static_cast<double>(e.seen_correct) / static_cast<double>(e.seen_total);
  e.full_test_acc = static_cast<double>(e.full_correct) / static_cast<double>(e.full_total);

  if (increment > 0) {
    Tensor p({prev_idx.size(), classes});
    std::vector<std::uint8_t> y(prev_idx.size());
    for (std::size_t k = 0; k < prev_idx.size(); ++k) {
      const auto row = probabilities.data().subspan(prev_idx[k] * classes, classes);
      std::copy(row.begin(), row.end(),
                p.data().begin() + static_cast<std::ptrdiff_t>(k * classes));
      y[k] = labels[prev_idx[k]];
    }
    e.retention = retention_metric(p, y, schedule.seen_classes(increment - 1));
  }
  return e;
}

const ModelEval* EvalReport::find(const std::string& tag) const {
  for (const auto& m : models) {
    if (m.tag == tag) return &m;
  }
  return nullptr;
}

void EvalReport::validate() const {
  auto unit = [](double v, const std::string& what) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::validation, what + " outside [0,1]");
  };
  for (const auto& m : models) {
    if (complete && m.increments.size() != schedule.size()) {
      fail(ErrorCode::validation, "model " + m.tag + " has " + std::to_string(m.increments.size()) +
                                      " of " + std::to_string(schedule.size()) + " increments");
    }
    for (std::size_t i = 0; i < m.increments.size(); ++i) {
      const auto& e = m.increments[i];
      const std::string where = m.tag + " increment " + std::to_string(i + 1);
      if (e.increment != i || e.group_accuracy.size() != i + 1 || e.group_correct.size() != i + 1 ||
          e.group_total.size() != i + 1) {
        fail(ErrorCode::validation, where + ": accuracy row is not lower-triangular");
      }
      for (double a : e.group_accuracy) unit(a, where + " accuracy");
      unit(e.current_acc, where + " current accuracy");
      unit(e.cumulative_seen_acc, where + " cumulative accuracy");
      unit(e.full_test_acc, where + " full-test accuracy");
      if (i > 0 && !e.retention) fail(ErrorCode::validation, where + ": retention missing");
      if (e.retention) unit(e.retention->mean_true_probability, where + " retention mean");
    }
  }
}

bool EvalReport::operator==(const EvalReport& other) const {
  return dataset == other.dataset && schedule == other.schedule && config == other.config &&
         epoch_losses == other.epoch_losses && models == other.models && complete == other.complete;
}

namespace {

void check_aligned(const EvalReport& a, const EvalReport& b) {
  if (a.dataset != b.dataset) {
    fail(ErrorCode::validation,
         "reports use different datasets: " + a.dataset + " vs " + b.dataset);
  }
  if (!(a.schedule == b.schedule)) {
    fail(ErrorCode::validation, "reports use different increment schedules");
  }
}

const ModelEval& require_model(const EvalReport& r, const std::string& tag) {
  const ModelEval* m = r.find(tag);
  if (!m) fail(ErrorCode::validation, "report has no model tagged '" + tag + "'");
  return *m;
}

}  // namespace

Comparison compare_models(const EvalReport& baseline_report, const std::string& baseline_tag,
                          const EvalReport& candidate_report, const std::string& candidate_tag) {
  check_aligned(baseline_report, candidate_report);
  const ModelEval& base = require_model(baseline_report, baseline_tag);
  const ModelEval& cand = require_model(candidate_report, candidate_tag);
  if (base.increments.size() != cand.increments.size()) {
    fail(ErrorCode::validation, "models cover different numbers of increments");
  }
  Comparison c;
  c.baseline = baseline_tag;
  c.candidate = candidate_tag;
  for (std::size_t i = 0; i < base.increments.size(); ++i) {
    const auto& b = base.increments[i];
    const auto& k = cand.increments[i];
    ComparisonRow row;
    row.increment = i;
    row.cumulative_delta = k.cumulative_seen_acc - b.cumulative_seen_acc;
    row.full_test_delta = k.full_test_acc - b.full_test_acc;
    if (b.retention && k.retention) {
      row.retention_delta = k.retention->mean_true_probability - b.retention->mean_true_probability;
    }
    c.rows.push_back(row);
  }
  if (!c.rows.empty() && c.rows.back().retention_delta) {
    c.retention_trend = *c.rows.back().retention_delta >= 0.0;
  }
  return c;
}

Comparison compare_models(const EvalReport& report, const std::string& baseline_tag,
                          const std::string& candidate_tag) {
  return compare_models(report, baseline_tag, report, candidate_tag);
}

std::uint64_t increment_seed(std::uint64_t seed, std::size_t increment) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (increment + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Dataset training_subset(const Dataset& train, const std::vector<int>& classes,
                        std::size_t limit_per_class) {
  const std::set<int> wanted(classes.begin(), classes.end());
  if (limit_per_class == 0) return subset_by_classes(train, wanted);
  std::vector<std::size_t> taken(kNumClasses, 0);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const int y = train.label(i);
    if (wanted.contains(y) && taken[static_cast<std::size_t>(y)] < limit_per_class) {
      ++taken[static_cast<std::size_t>(y)];
      idx.push_back(i);
    }
  }
  if (idx.empty()) fail(ErrorCode::empty_subset, "no training examples for the requested classes");
  return train.select(idx);
}

namespace {

using Clock = std::chrono::steady_clock;

class ProbabilityDump {
 public:
  explicit ProbabilityDump(const std::filesystem::path& path) : out_(path) {
    if (!out_) fail(ErrorCode::io, "cannot write " + path.string());
    out_ << "example,label";
    for (int c = 0; c < kNumClasses; ++c) out_ << ",p" << c;
    out_ << ",model,increment\n";
  }

  void write(const Tensor& probs, const Dataset& ds, const std::string& tag,
             std::size_t increment) {
    const std::size_t classes = probs.dim(1);
    char buf[32];
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::size_t id = ds.source_indices().empty() ? i : ds.source_indices()[i];
      out_ << id << ',' << ds.label(i);
      for (std::size_t c = 0; c < classes; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", probs.data()[i * classes + c]);
        out_ << ',' << buf;
      }
      out_ << ',' << tag << ',' << increment + 1 << '\n';
    }
    if (!out_) fail(ErrorCode::io, "probability dump write failed");
  }

 private:
  std::ofstream out_;
};

std::vector<std::size_t> spread_indices(std::size_t n, std::size_t limit) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < limit; ++k) idx.push_back(k * n / limit);
  return idx;
}

void write_timings(const EvalReport& report, const std::filesystem::path& path) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& t : report.timings) {
    j.push_back({{"increment", t.increment + 1}, {"phase", t.phase}, {"seconds", t.seconds}});
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

EvalReport run_experiment(const ExperimentConfig& cfg, const Dataset& train, const Dataset& test,
                          const RunOptions& opts) {
  cfg.validate();
  if (train.empty()) fail(ErrorCode::empty_subset, "training set is empty");
  if (test.empty()) fail(ErrorCode::empty_subset, "test set is empty");
  auto log = [&](const std::string& msg) {
    if (opts.log) opts.log(msg);
  };

  EvalReport report;
  report.dataset = to_string(train.source());
  report.schedule = build_increments(train.classes(), cfg.group_size, cfg.class_order);
  report.config = cfg.to_text();
  report.models.push_back({"ann", {}});
  if (cfg.evaluate_snn) report.models.push_back({"snn", {}});

  Dataset snn_test;
  if (cfg.evaluate_snn) {
    snn_test = cfg.snn_eval_limit == 0 || cfg.snn_eval_limit >= test.size()
                   ? test
                   : test.select(spread_indices(test.size(), cfg.snn_eval_limit));
  }
  SimConfig sim = cfg.sim;
  sim.record_traces = false;

  if (opts.out_dir) std::filesystem::create_directories(*opts.out_dir);
  if (opts.checkpoint_dir) std::filesystem::create_directories(*opts.checkpoint_dir);
  std::optional<ProbabilityDump> dump;
  if (opts.out_dir && opts.write_probabilities) dump.emplace(*opts.out_dir / "probabilities.csv");

  auto timed = [&](std::size_t inc, const char* phase, auto&& fn) {
    const auto t0 = Clock::now();
    fn();
    report.timings.push_back(
        {inc, phase, std::chrono::duration<double>(Clock::now() - t0).count()});
  };

  try {
    Model model(cfg.model, cfg.seed);
    for (std::size_t i = 0; i < report.schedule.size(); ++i) {
      const auto& group = report.schedule.groups[i];
      const Dataset subset = training_subset(train, group, cfg.train_limit_per_class);
      timed(i, "train", [&] {
        report.epoch_losses.push_back(train_increment(
            model, subset, cfg.train, increment_seed(cfg.seed, i), [&](const EpochLog& e) {
              char buf[96];
              std::snprintf(buf, sizeof buf, "increment %zu epoch %d loss %.6f", i + 1, e.epoch + 1,
                            e.mean_loss);
              log(buf);
            }));
      });
      if (opts.checkpoint_dir) {
        save_model(model, *opts.checkpoint_dir / ("model_inc" + std::to_string(i + 1) + ".ckpt"));
      }

      timed(i, "evaluate_ann", [&] {
        const Tensor probs = predict_probabilities(model, test);
        report.models[0].increments.push_back(
            evaluate_increment(probs, test.labels(), report.schedule, i));
        if (dump) dump->write(probs, test, "ann", i);
      });
      const auto& ann = report.models[0].increments.back();
      char buf[160];
      std::snprintf(buf, sizeof buf, "increment %zu ann current %.4f cumulative %.4f full %.4f",
                    i + 1, ann.current_acc, ann.cumulative_seen_acc, ann.full_test_acc);
      log(buf);

      if (cfg.evaluate_snn) {
        std::optional<SpikingNetwork> net;
        timed(i, "convert", [&] { net.emplace(convert(model, cfg.snn)); });
        timed(i, "evaluate_snn", [&] {
          const BatchSimResult b = batch_simulate(*net, snn_test, sim, cfg.threads);
          report.models[1].increments.push_back(
              evaluate_increment(b.probabilities, snn_test.labels(), report.schedule, i));
          if (dump) dump->write(b.probabilities, snn_test, "snn", i);
        });
        const auto& snn = report.models[1].increments.back();
        std::snprintf(buf, sizeof buf, "increment %zu snn current %.4f cumulative %.4f full %.4f",
                      i + 1, snn.current_acc, snn.cumulative_seen_acc, snn.full_test_acc);
        log(buf);
      }
    }
    report.complete = true;
    report.validate();
  } catch (...) {
    if (opts.out_dir) {
      try {
        write_report_json(report, *opts.out_dir / "report.partial.json");
        write_timings(report, *opts.out_dir / "timings.json");
      } catch (...) {
      }
    }
    throw;
  }
  if (opts.out_dir) write_timings(report, *opts.out_dir / "timings.json");
  return report;
}

EvalReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  const Dataset train = load_dataset(cfg.data_dir, cfg.dataset, Split::train);
  const Dataset test = load_dataset(cfg.data_dir, cfg.dataset, Split::test);
  return run_experiment(cfg, train, test, opts);
}

}  // namespace spikecl
