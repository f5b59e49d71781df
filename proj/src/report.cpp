#include "spikecl/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "spikecl/error.hpp"

namespace spikecl {

using ojson = nlohmann::ordered_json;

namespace {

std::string fixed4(double v) {
  if (std::isnan(v)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::io, "write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string table_csv(const ModelEval& model) {
  std::string out = std::string(kTableHeader) + "\n";
  for (const auto& e : model.increments) {
    const double rmean = e.retention ? e.retention->mean_true_probability : NAN;
    const double rank1 = e.retention ? e.retention->rank1_fraction() : NAN;
    out += model.tag + "," + std::to_string(e.increment + 1) + "," + fixed4(e.current_acc) + "," +
           fixed4(e.cumulative_seen_acc) + "," + fixed4(e.full_test_acc) + "," + fixed4(rmean) +
           "," + fixed4(rank1) + "\n";
  }
  return out;
}

std::string comparison_csv(const Comparison& c) {
  std::string out = std::string(kComparisonHeader) + "\n";
  for (const auto& r : c.rows) {
    out += c.baseline + "," + c.candidate + "," + std::to_string(r.increment + 1) + "," +
           fixed4(r.cumulative_delta) + "," + fixed4(r.full_test_delta) + "," +
           fixed4(r.retention_delta.value_or(NAN)) + "\n";
  }
  return out;
}

namespace {

ojson retention_json(const std::optional<RetentionStats>& r) {
  if (!r) return nullptr;
  return {{"mean_true_probability", r->mean_true_probability},
          {"rank1_fraction", r->rank1_fraction()},
          {"count", r->count},
          {"rank_histogram", r->rank_histogram}};
}

ojson comparison_json(const Comparison& c) {
  ojson rows = ojson::array();
  for (const auto& r : c.rows) {
    rows.push_back({{"increment", r.increment + 1},
                    {"cumulative_delta", r.cumulative_delta},
                    {"full_test_delta", r.full_test_delta},
                    {"retention_delta", r.retention_delta ? ojson(*r.retention_delta) : ojson()}});
  }
  ojson trend =
      c.retention_trend ? ojson(*c.retention_trend ? "reproduced" : "not_reproduced") : ojson();
  return {{"baseline", c.baseline},
          {"candidate", c.candidate},
          {"rows", rows},
          {"retention_trend", trend}};
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  ojson j;
  j["format"] = "spikecl-report";
  j["version"] = 1;
  j["dataset"] = report.dataset;
  j["complete"] = report.complete;
  j["config"] = report.config;
  j["schedule"] = {{"group_size", report.schedule.group_size}, {"groups", report.schedule.groups}};
  j["epoch_losses"] = report.epoch_losses;
  ojson models = ojson::array();
  for (const auto& m : report.models) {
    ojson incs = ojson::array();
    for (const auto& e : m.increments) {
      incs.push_back({{"increment", e.increment + 1},
                      {"classes", e.classes},
                      {"accuracy_row", e.group_accuracy},
                      {"group_correct", e.group_correct},
                      {"group_total", e.group_total},
                      {"current_acc", e.current_acc},
                      {"cumulative_seen_acc", e.cumulative_seen_acc},
                      {"seen_correct", e.seen_correct},
                      {"seen_total", e.seen_total},
                      {"full_test_acc", e.full_test_acc},
                      {"full_correct", e.full_correct},
                      {"full_total", e.full_total},
                      {"retention", retention_json(e.retention)}});
    }
    models.push_back({{"tag", m.tag}, {"increments", incs}});
  }
  j["models"] = models;
  if (report.find("ann") && report.find("snn")) {
    j["comparison"] = comparison_json(compare_models(report));
  }
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const ojson j = ojson::parse(text);
    if (j.at("format").get<std::string>() != "spikecl-report") {
      fail(ErrorCode::format, "not a spikecl report");
    }
    r.dataset = j.at("dataset").get<std::string>();
    r.complete = j.at("complete").get<bool>();
    r.config = j.at("config").get<std::string>();
    r.schedule.group_size = j.at("schedule").at("group_size").get<int>();
    r.schedule.groups = j.at("schedule").at("groups").get<std::vector<std::vector<int>>>();
    r.epoch_losses = j.at("epoch_losses").get<std::vector<std::vector<double>>>();
    for (const auto& m : j.at("models")) {
      ModelEval me;
      me.tag = m.at("tag").get<std::string>();
      for (const auto& e : m.at("increments")) {
        IncrementEval ie;
        ie.increment = e.at("increment").get<std::size_t>() - 1;
        ie.classes = e.at("classes").get<std::vector<int>>();
        ie.group_accuracy = e.at("accuracy_row").get<std::vector<double>>();
        ie.group_correct = e.at("group_correct").get<std::vector<std::size_t>>();
        ie.group_total = e.at("group_total").get<std::vector<std::size_t>>();
        ie.current_acc = e.at("current_acc").get<double>();
        ie.cumulative_seen_acc = e.at("cumulative_seen_acc").get<double>();
        ie.seen_correct = e.at("seen_correct").get<std::size_t>();
        ie.seen_total = e.at("seen_total").get<std::size_t>();
        ie.full_test_acc = e.at("full_test_acc").get<double>();
        ie.full_correct = e.at("full_correct").get<std::size_t>();
        ie.full_total = e.at("full_total").get<std::size_t>();
        const auto& ret = e.at("retention");
        if (!ret.is_null()) {
          RetentionStats rs;
          rs.mean_true_probability = ret.at("mean_true_probability").get<double>();
          rs.count = ret.at("count").get<std::size_t>();
          rs.rank_histogram = ret.at("rank_histogram").get<std::array<std::size_t, kNumClasses>>();
          ie.retention = rs;
        }
        me.increments.push_back(std::move(ie));
      }
      r.models.push_back(std::move(me));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("report json: ") + e.what());
  }
  r.validate();
  return r;
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
  write_text(path, report_to_json(report));
}

EvalReport load_report_json(const std::filesystem::path& path) {
  return report_from_json(read_text(path));
}

std::vector<std::filesystem::path> emit_tables(const EvalReport& report,
                                               const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    fail(ErrorCode::io, "cannot create output directory " + out_dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& m : report.models) {
    files.push_back(out_dir / (m.tag + "_table.csv"));
    write_text(files.back(), table_csv(m));
  }
  files.push_back(out_dir / "report.json");
  write_text(files.back(), report_to_json(report));
  if (report.find("ann") && report.find("snn")) {
    files.push_back(out_dir / "comparison.csv");
    write_text(files.back(), comparison_csv(compare_models(report)));
  }
  files.push_back(out_dir / "accuracy.svg");
  write_text(files.back(), accuracy_svg(report));
  return files;
}

namespace {

struct Frame {
  double x, y, w, h;
};

void axes(std::ostringstream& o, const Frame& f, const std::string& xlabel,
          const std::string& ylabel) {
  o << "<g class=\"axes\" stroke=\"#000\" stroke-width=\"1\">"
    << "<line x1=\"" << num(f.x) << "\" y1=\"" << num(f.y + f.h) << "\" x2=\"" << num(f.x + f.w)
    << "\" y2=\"" << num(f.y + f.h) << "\"/>"
    << "<line x1=\"" << num(f.x) << "\" y1=\"" << num(f.y) << "\" x2=\"" << num(f.x) << "\" y2=\""
    << num(f.y + f.h) << "\"/></g>\n";
  o << "<text x=\"" << num(f.x + f.w / 2) << "\" y=\"" << num(f.y + f.h + 34)
    << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(xlabel) << "</text>\n";
  o << "<text x=\"" << num(f.x - 40) << "\" y=\"" << num(f.y + f.h / 2)
    << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 " << num(f.x - 40) << " "
    << num(f.y + f.h / 2) << ")\">" << xml_escape(ylabel) << "</text>\n";
}

void svg_open(std::ostringstream& o, double w, double h) {
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
    << "\" viewBox=\"0 0 " << num(w) << " " << num(h) << "\" font-family=\"sans-serif\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
}

void draw_raster(std::ostringstream& o, const SpikeTrace& trace, const Frame& f) {
  const std::size_t stride = raster_stride(trace.neurons);
  const std::size_t rows = (trace.neurons + stride - 1) / stride;
  const double dx = f.w / static_cast<double>(trace.steps);
  const double dy = f.h / static_cast<double>(rows);
  const double r = std::clamp(std::min(dx, dy) / 2, 0.5, 3.0);
  o << "<g class=\"raster\" fill=\"#1f3a93\">\n";
  for (const auto& e : trace.events) {
    if (e.neuron % stride != 0) continue;
    const double x = f.x + (e.step + 0.5) * dx;
    const double y = f.y + (static_cast<double>(e.neuron / stride) + 0.5) * dy;
    o << "<circle class=\"spike\" cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r)
      << "\"/>\n";
  }
  o << "</g>\n";
  const std::string ylabel =
      stride == 1 ? "neuron" : "neuron (every " + std::to_string(stride) + "th)";
  axes(o, f, "timestep", ylabel);
  o << "<text x=\"" << num(f.x) << "\" y=\"" << num(f.y + f.h + 16)
    << "\" font-size=\"10\">0</text>"
    << "<text x=\"" << num(f.x + f.w) << "\" y=\"" << num(f.y + f.h + 16)
    << "\" font-size=\"10\" text-anchor=\"end\">" << trace.steps << "</text>\n";
}

void require_spikes(const SpikeTrace& trace) {
  if (trace.neurons == 0 || trace.steps == 0 || trace.events.empty()) {
    fail(ErrorCode::validation, "spike trace has no spikes to plot");
  }
}

}  // namespace

std::size_t raster_stride(std::size_t neurons) {
  return neurons <= kRasterMaxNeurons ? 1 : (neurons + kRasterMaxNeurons - 1) / kRasterMaxNeurons;
}

std::string raster_svg(const SpikeTrace& trace) {
  require_spikes(trace);
  std::ostringstream o;
  svg_open(o, 800, 600);
  o << "<text x=\"400\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">spikes, layer "
    << trace.layer << " (" << trace.neurons << " neurons)</text>\n";
  draw_raster(o, trace, {70, 30, 710, 512});
  o << "</svg>\n";
  return o.str();
}

void emit_raster(const SpikeTrace& trace, const std::filesystem::path& path) {
  write_text(path, raster_svg(trace));
}

std::string three_frame_svg(const Tensor& image, const SpikeTrace& trace,
                            const Tensor& probabilities, int label) {
  require_spikes(trace);
  if (image.rank() < 2) fail(ErrorCode::dimension, "image must be at least rank 2");
  const std::size_t h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
  const auto probs = probabilities.data();
  std::ostringstream o;
  svg_open(o, 1040, 360);

  const double px = 256.0 / static_cast<double>(std::max(h, w));
  o << "<text x=\"148\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">input";
  if (label >= 0) o << " (label " << label << ")";
  o << "</text>\n<g class=\"image\">\n";
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double v = std::clamp(image.data()[r * w + c], 0.0, 1.0);
      const int g = static_cast<int>(std::lround(v * 255.0));
      o << "<rect x=\"" << num(20 + c * px) << "\" y=\"" << num(40 + r * px) << "\" width=\""
        << num(px) << "\" height=\"" << num(px) << "\" fill=\"rgb(" << g << "," << g << "," << g
        << ")\"/>\n";
    }
  }
  o << "</g>\n";

  o << "<text x=\"500\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">spikes, layer "
    << trace.layer << "</text>\n";
  draw_raster(o, trace, {360, 40, 280, 256});

  const std::size_t pred = argmax(probs);
  const Frame bars{740, 40, 280, 256};
  o << "<text x=\"880\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">output (predicted " << pred
    << ")</text>\n<g class=\"bars\">\n";
  const double bw = bars.w / static_cast<double>(probs.size());
  for (std::size_t c = 0; c < probs.size(); ++c) {
    const double bh = std::clamp(probs[c], 0.0, 1.0) * bars.h;
    const char* fill = c == pred ? "#c0392b" : "#7f8c8d";
    o << "<rect class=\"bar\" x=\"" << num(bars.x + c * bw + 2) << "\" y=\""
      << num(bars.y + bars.h - bh) << "\" width=\"" << num(bw - 4) << "\" height=\"" << num(bh)
      << "\" fill=\"" << fill << "\"/>\n";
    o << "<text x=\"" << num(bars.x + (c + 0.5) * bw) << "\" y=\"" << num(bars.y + bars.h + 16)
      << "\" text-anchor=\"middle\" font-size=\"11\">" << c << "</text>\n";
  }
  o << "</g>\n";
  axes(o, bars, "class", "probability");
  o << "</svg>\n";
  return o.str();
}

std::string accuracy_svg(const EvalReport& report) {
  const Frame f{70, 40, 520, 300};
  std::ostringstream o;
  svg_open(o, 800, 400);
  o << "<text x=\"330\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">accuracy by increment ("
    << xml_escape(report.dataset) << ")</text>\n";
  const std::size_t n = std::max<std::size_t>(report.schedule.size(), 1);
  auto xat = [&](std::size_t i) {
    return n == 1 ? f.x + f.w / 2 : f.x + f.w * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  auto yat = [&](double a) { return f.y + f.h * (1.0 - a); };
  o << "<g class=\"grid\" stroke=\"#ddd\" stroke-width=\"1\">\n";
  for (int t = 0; t <= 10; t += 2) {
    o << "<line x1=\"" << num(f.x) << "\" y1=\"" << num(yat(t / 10.0)) << "\" x2=\""
      << num(f.x + f.w) << "\" y2=\"" << num(yat(t / 10.0)) << "\"/>\n";
  }
  o << "</g>\n";
  for (int t = 0; t <= 10; t += 2) {
    o << "<text x=\"" << num(f.x - 6) << "\" y=\"" << num(yat(t / 10.0) + 4)
      << "\" text-anchor=\"end\" font-size=\"10\">" << num(t / 10.0) << "</text>\n";
  }
  for (std::size_t i = 0; i < report.schedule.size(); ++i) {
    o << "<text x=\"" << num(xat(i)) << "\" y=\"" << num(f.y + f.h + 16)
      << "\" text-anchor=\"middle\" font-size=\"10\">" << i + 1 << "</text>\n";
  }
  axes(o, f, "increment", "accuracy");

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  struct Series {
    const char* name;
    const char* dash;
    double IncrementEval::* field;
  };
  const Series series[] = {{"current", "", &IncrementEval::current_acc},
                           {"seen", "6 3", &IncrementEval::cumulative_seen_acc},
                           {"full test", "2 2", &IncrementEval::full_test_acc}};
  double legend_y = f.y + 10;
  for (std::size_t m = 0; m < report.models.size(); ++m) {
    const auto& model = report.models[m];
    const char* color = colors[m % 4];
    for (const auto& s : series) {
      if (model.increments.empty()) continue;
      o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"";
      if (*s.dash) o << " stroke-dasharray=\"" << s.dash << "\"";
      o << " points=\"";
      for (std::size_t i = 0; i < model.increments.size(); ++i) {
        if (i) o << ' ';
        o << num(xat(i)) << ',' << num(yat(model.increments[i].*s.field));
      }
      o << "\"/>\n";
      o << "<line x1=\"610\" y1=\"" << num(legend_y) << "\" x2=\"640\" y2=\"" << num(legend_y)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"";
      if (*s.dash) o << " stroke-dasharray=\"" << s.dash << "\"";
      o << "/><text x=\"646\" y=\"" << num(legend_y + 4) << "\" font-size=\"11\">"
        << xml_escape(model.tag) << " " << s.name << "</text>\n";
      legend_y += 18;
    }
  }
  o << "</svg>\n";
  return o.str();
}

std::string trace_tsv(const SpikeTrace& trace) {
  std::string out;
  char buf[96];
  std::snprintf(buf, sizeof buf, "# layer=%zu neurons=%zu steps=%zu dt=%.17g\n", trace.layer,
                trace.neurons, trace.steps, trace.dt);
  out += buf;
  out += "step\tneuron\tamplitude\n";
  for (const auto& e : trace.events) {
    std::snprintf(buf, sizeof buf, "%u\t%u\t%.17g\n", e.step, e.neuron, e.amplitude);
    out += buf;
  }
  return out;
}

SpikeTrace parse_trace_tsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  SpikeTrace t;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "# layer=%zu neurons=%zu steps=%zu dt=%lf", &t.layer, &t.neurons,
                  &t.steps, &t.dt) != 4) {
    fail(ErrorCode::format, "trace file lacks its '# layer=.. neurons=.. steps=.. dt=..' line");
  }
  if (!std::getline(in, line) || line != "step\tneuron\tamplitude") {
    fail(ErrorCode::format, "trace file lacks the step/neuron/amplitude header");
  }
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    SpikeEvent e;
    unsigned step = 0, neuron = 0;
    char extra = 0;
    if (std::sscanf(line.c_str(), "%u\t%u\t%lf%c", &step, &neuron, &e.amplitude, &extra) != 3) {
      fail(ErrorCode::format, "trace line " + std::to_string(lineno) + " is malformed");
    }
    e.step = step;
    e.neuron = neuron;
    t.events.push_back(e);
  }
  compute_trace_rates(t);
  return t;
}

}  // namespace spikecl
