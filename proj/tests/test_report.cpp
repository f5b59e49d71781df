#include <cmath>
#include <sstream>

#include "doctest.h"
#include "spikecl/error.hpp"
#include "spikecl/report.hpp"
#include "support.hpp"

using namespace spikecl;

namespace {

EvalReport sample() { return load_report_json(testing::fixtures_dir() / "sample_report.json"); }

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

void check_close(const std::string& field, std::optional<double> value) {
  if (!value) {
    CHECK(field == "nan");
    return;
  }
  CHECK(std::fabs(std::stod(field) - *value) <= 5e-5 + 1e-12);
}

SpikeTrace constant_trace(double rate_hz, std::size_t neurons, std::size_t steps) {
  // Each neuron integrates rate·dt per step and fires on crossing 1.
  SpikeTrace t;
  t.layer = 1;
  t.neurons = neurons;
  t.steps = steps;
  t.dt = 0.001;
  std::vector<double> v(neurons, 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t n = 0; n < neurons; ++n) {
      const NeuronStep r = neuron_step(v[n], rate_hz * double(n + 1) / double(neurons), 1.0, t.dt);
      v[n] = r.v;
      if (r.amplitude > 0.0) t.events.push_back({std::uint32_t(s), std::uint32_t(n), r.amplitude});
    }
  }
  compute_trace_rates(t);
  return t;
}

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("tables match the golden files") {
    const EvalReport r = sample();
    CHECK(table_csv(*r.find("ann")) ==
          testing::read_file_text(testing::fixtures_dir() / "ann_table.csv"));
    CHECK(table_csv(*r.find("snn")) ==
          testing::read_file_text(testing::fixtures_dir() / "snn_table.csv"));
    CHECK(comparison_csv(compare_models(r)) ==
          testing::read_file_text(testing::fixtures_dir() / "comparison.csv"));
  }

  TEST_CASE("csv schema: constant field count and values within rounding") {
    const EvalReport r = sample();
    for (const auto& m : r.models) {
      const auto rows = parse_csv(table_csv(m));
      REQUIRE(rows.size() == m.increments.size() + 1);
      CHECK(rows[0].size() == 7);
      for (std::size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() == rows[0].size());
        const auto& e = m.increments[i - 1];
        CHECK(rows[i][0] == m.tag);
        CHECK(rows[i][1] == std::to_string(i));
        check_close(rows[i][2], e.current_acc);
        check_close(rows[i][3], e.cumulative_seen_acc);
        check_close(rows[i][4], e.full_test_acc);
        check_close(rows[i][5],
                    e.retention ? std::optional(e.retention->mean_true_probability) : std::nullopt);
        check_close(rows[i][6],
                    e.retention ? std::optional(e.retention->rank1_fraction()) : std::nullopt);
      }
    }
    const Comparison c = compare_models(r);
    const auto rows = parse_csv(comparison_csv(c));
    for (std::size_t i = 1; i < rows.size(); ++i) {
      REQUIRE(rows[i].size() == 6);
      check_close(rows[i][3], c.rows[i - 1].cumulative_delta);
      check_close(rows[i][4], c.rows[i - 1].full_test_delta);
      check_close(rows[i][5], c.rows[i - 1].retention_delta);
    }
  }

  TEST_CASE("json round trip is exact") {
    const EvalReport r = sample();
    CHECK(r.complete);
    CHECK(r.schedule.size() == 2);
    const EvalReport back = report_from_json(report_to_json(r));
    CHECK(back == r);
    CHECK(report_to_json(back) == report_to_json(r));
    const auto j = report_to_json(r);
    CHECK(j.find("\"retention_trend\": \"reproduced\"") != std::string::npos);
    CHECK(j.find("\"retention\": null") != std::string::npos);
  }

  TEST_CASE("malformed json is a format error") {
    for (const char* bad :
         {"{", "[]", "{\"format\": \"other\"}", "{\"format\": \"spikecl-report\"}"}) {
      try {
        report_from_json(bad);
        FAIL("accepted " << bad);
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::format);
      }
    }
    std::string text = testing::read_file_text(testing::fixtures_dir() / "sample_report.json");
    text.replace(text.find("[0.2, 0.96]"), 11, "[0.2]");
    CHECK_THROWS_AS(report_from_json(text), Error);
  }

  TEST_CASE("emitted files") {
    testing::TempDir dir;
    const auto files = emit_tables(sample(), dir.path());
    CHECK(files.size() == 5);
    for (const auto& f : files) CHECK(std::filesystem::exists(f));
    CHECK(testing::read_file_text(dir / "ann_table.csv") ==
          testing::read_file_text(testing::fixtures_dir() / "ann_table.csv"));
    CHECK(testing::xml_problem(testing::read_file_text(dir / "accuracy.svg")) == "");
    CHECK(load_report_json(dir / "report.json") == sample());

    const auto blocker = dir / "file";
    write_text(blocker, "x");
    try {
      emit_tables(sample(), blocker / "sub");
      FAIL("wrote below a regular file");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io);
    }
  }

  TEST_CASE("svg output is strict xml") {
    const EvalReport r = sample();
    CHECK(testing::xml_problem(accuracy_svg(r)) == "");
    EvalReport odd = r;
    odd.dataset = "a<b & \"c\"";
    CHECK(testing::xml_problem(accuracy_svg(odd)) == "");
    const SpikeTrace t = constant_trace(80.0, 20, 100);
    CHECK(testing::xml_problem(raster_svg(t)) == "");
    Tensor img({1, 4, 4}, testing::random_vector(16, 2, 0.0, 1.0));
    Tensor probs({10}, 0.1);
    CHECK(testing::xml_problem(three_frame_svg(img, t, probs, 3)) == "");
    // The checker itself rejects broken documents.
    CHECK(testing::xml_problem("<svg><g></svg>") != "");
    CHECK(testing::xml_problem("<svg a=\"1\" a=\"2\"/>") != "");
    CHECK(testing::xml_problem("<svg>&nbsp;</svg>") != "");
  }

  TEST_CASE("raster markers match the integrate-and-fire count") {
    for (double rate : {5.0, 40.0, 250.0}) {
      const std::size_t steps = 200;
      const SpikeTrace t = constant_trace(rate, 1, steps);
      const std::string svg = raster_svg(t);
      const long markers = long(testing::count_occurrences(svg, "class=\"spike\""));
      const long expect = long(std::floor(rate * double(steps) * 0.001));
      CHECK(std::labs(markers - expect) <= 1);
      CHECK(markers == long(t.events.size()));
    }
    SpikeTrace silent;
    silent.neurons = 3;
    silent.steps = 10;
    CHECK_THROWS_AS(raster_svg(silent), Error);
  }

  TEST_CASE("large layers are subsampled") {
    CHECK(raster_stride(100) == 1);
    CHECK(raster_stride(512) == 1);
    CHECK(raster_stride(513) == 2);
    CHECK(raster_stride(21632) == 43);
    const SpikeTrace t = constant_trace(300.0, 1200, 20);
    const std::string svg = raster_svg(t);
    std::size_t drawn = 0;
    for (const auto& e : t.events) drawn += e.neuron % raster_stride(1200) == 0;
    CHECK(testing::count_occurrences(svg, "class=\"spike\"") == drawn);
  }

  TEST_CASE("identical traces render identical bytes") {
    const SpikeTrace a = constant_trace(90.0, 30, 50), b = constant_trace(90.0, 30, 50);
    CHECK(raster_svg(a) == raster_svg(b));
    CHECK(trace_tsv(a) == trace_tsv(b));
  }

  TEST_CASE("trace tsv round trip") {
    const SpikeTrace t = constant_trace(120.0, 7, 60);
    const std::string text = trace_tsv(t);
    CHECK(text.rfind("# layer=1 neurons=7 steps=60 dt=", 0) == 0);
    CHECK(text.find("step\tneuron\tamplitude\n") != std::string::npos);
    CHECK(parse_trace_tsv(text) == t);
    CHECK_THROWS_AS(parse_trace_tsv("garbage"), Error);
  }
}
