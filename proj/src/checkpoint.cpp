#include "spikecl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string_view>

#include "json.hpp"
#include "spikecl/dataset.hpp"
#include "spikecl/error.hpp"

namespace spikecl {

namespace {

constexpr std::string_view kMagic = "SPKCLCKP";

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{in[off + i]} << (8 * i);
  return v;
}

double get_f64(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{in[off + i]} << (8 * i);
  return std::bit_cast<double>(v);
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io, "write failed for " + path.string());
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model,
                                               const ConversionParams* conversion) {
  nlohmann::json header;
  header["kind"] = conversion ? "spiking_network" : "model";
  header["spec"] = model.spec().to_string();
  header["input"] = model.spec().input;
  header["seed"] = model.seed();
  header["loss_log"] = model.loss_log();
  auto tensors = nlohmann::json::array();
  const auto names = model.parameter_names();
  const auto params = model.parameter_tensors();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", names[i]}, {"shape", params[i]->shape()}});
  }
  header["tensors"] = tensors;
  if (conversion) {
    header["conversion"] = {{"mode", to_string(conversion->mode)},
                            {"rate_scale", conversion->rate_scale},
                            {"tau", conversion->tau},
                            {"dt", conversion->dt}};
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const Tensor* t : params) {
    for (double d : t->data()) put_f64(out, d);
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    fail(ErrorCode::format, "not a spikecl checkpoint (bad magic)");
  }
  if (bytes.size() < 16) fail(ErrorCode::length, "checkpoint preamble truncated");
  const std::uint32_t version = get_u32(bytes, 8);
  if (version != kCheckpointVersion) {
    fail(ErrorCode::format, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::size_t header_len = get_u32(bytes, 12);
  if (bytes.size() < 16 + header_len) {
    fail(ErrorCode::length, "checkpoint header truncated");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16,
                                   bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  try {
    const Shape input = header.at("input").get<Shape>();
    ck.model = Model::zeros(ModelSpec::parse(header.at("spec").get<std::string>(), input));
    ck.model.set_seed(header.at("seed").get<std::uint64_t>());
    ck.model.loss_log() = header.at("loss_log").get<std::vector<double>>();
    const auto& tensors = header.at("tensors");
    auto params = ck.model.parameter_tensors();
    const auto names = ck.model.parameter_names();
    if (tensors.size() != params.size()) {
      fail(ErrorCode::validation, "checkpoint holds " + std::to_string(tensors.size()) +
                                      " tensors, spec needs " + std::to_string(params.size()));
    }
    std::size_t off = 16 + header_len;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Shape shape = tensors[i].at("shape").get<Shape>();
      if (shape != params[i]->shape() || tensors[i].at("name").get<std::string>() != names[i]) {
        fail(ErrorCode::validation,
             "checkpoint tensor " + std::to_string(i) + " does not match spec (" + names[i] + ")");
      }
      const std::size_t need = params[i]->size() * 8;
      if (bytes.size() < off + need) {
        fail(ErrorCode::length, "checkpoint payload truncated in " + names[i]);
      }
      for (double& d : params[i]->data()) {
        d = get_f64(bytes, off);
        off += 8;
      }
    }
    if (off != bytes.size()) fail(ErrorCode::length, "trailing bytes after checkpoint payload");
    if (header.contains("conversion")) {
      const auto& c = header["conversion"];
      ConversionParams p;
      p.mode = neuron_mode_from_string(c.at("mode").get<std::string>());
      p.rate_scale = c.at("rate_scale").get<double>();
      p.tau = c.at("tau").get<double>();
      p.dt = c.at("dt").get<double>();
      ck.conversion = p;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("checkpoint header: ") + e.what());
  }
  ck.model.validate();
  return ck;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  write_bytes(serialize_checkpoint(model), path);
}

Model load_model(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path)).model;
}

void save_network(const SpikingNetwork& net, const std::filesystem::path& path) {
  write_bytes(serialize_checkpoint(net.model(), &net.params()), path);
}

SpikingNetwork load_network(const std::filesystem::path& path) {
  Checkpoint ck = deserialize_checkpoint(read_file(path));
  if (!ck.conversion) {
    fail(ErrorCode::validation, path.string() + " is a model checkpoint, not a spiking network");
  }
  return convert(ck.model, *ck.conversion);
}

}  // namespace spikecl
