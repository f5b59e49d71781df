#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spikecl/harness.hpp"
#include "spikecl/snn.hpp"

namespace spikecl {

// Exact header of every <tag>_table.csv. Numbers carry 4 decimals; the
// retention columns read "nan" where no earlier classes exist.
inline constexpr const char* kTableHeader =
    "model,increment,current_acc,cumulative_seen_acc,full_test_acc,retention_mean,"
    "retention_rank1_frac";
inline constexpr const char* kComparisonHeader =
    "baseline,candidate,increment,cumulative_delta,full_test_delta,retention_delta";

std::string table_csv(const ModelEval& model);
std::string comparison_csv(const Comparison& c);

// Full-precision JSON mirror of the report, including every accuracy matrix
// cell and the ann/snn comparison when both models are present.
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void write_report_json(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report_json(const std::filesystem::path& path);

// <tag>_table.csv per model, report.json, comparison.csv (when ann and snn
// are present) and accuracy.svg. Returns the written paths.
std::vector<std::filesystem::path> emit_tables(const EvalReport& report,
                                               const std::filesystem::path& out_dir);

std::string accuracy_svg(const EvalReport& report);

// At most this many neuron rows are drawn; larger layers keep every k-th
// neuron for the smallest k that fits.
inline constexpr std::size_t kRasterMaxNeurons = 512;

std::size_t raster_stride(std::size_t neurons);
// One <circle class="spike"> per drawn spike. Throws on a trace without
// spikes.
std::string raster_svg(const SpikeTrace& trace);
void emit_raster(const SpikeTrace& trace, const std::filesystem::path& path);

// Input image, first-layer raster and output probability bars side by side.
std::string three_frame_svg(const Tensor& image, const SpikeTrace& trace,
                            const Tensor& probabilities, int label);

// "step\tneuron\tamplitude" rows after a "# layer=.. neurons=.. steps=.. dt=.."
// line.
std::string trace_tsv(const SpikeTrace& trace);
SpikeTrace parse_trace_tsv(const std::string& text);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace spikecl
