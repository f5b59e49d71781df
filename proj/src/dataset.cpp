#include "spikecl/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "spikecl/error.hpp"

namespace spikecl {

namespace {

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t off) {
  return (std::uint32_t{bytes[off]} << 24) | (std::uint32_t{bytes[off + 1]} << 16) |
         (std::uint32_t{bytes[off + 2]} << 8) | std::uint32_t{bytes[off + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

bool is_gzip(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

// Holds either the caller's bytes or a decompressed copy.
struct Payload {
  std::vector<std::uint8_t> owned;
  std::span<const std::uint8_t> view;
};

Payload unwrap(std::span<const std::uint8_t> bytes) {
  Payload p;
  if (is_gzip(bytes)) {
    p.owned = gunzip(bytes);
    p.view = p.owned;
  } else {
    p.view = bytes;
  }
  return p;
}

void check_header(std::span<const std::uint8_t> bytes, std::size_t header_len,
                  std::uint32_t expected_magic, const char* what) {
  if (bytes.size() < 4) {
    fail(ErrorCode::length, std::string(what) + ": stream too short for IDX magic (" +
                                std::to_string(bytes.size()) + " bytes)");
  }
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != expected_magic) {
    fail(ErrorCode::format, std::string(what) + ": bad IDX magic " + hex32(magic) + ", expected " +
                                hex32(expected_magic));
  }
  if (bytes.size() < header_len) {
    fail(ErrorCode::length, std::string(what) + ": truncated header, expected " +
                                std::to_string(header_len) + " bytes, got " +
                                std::to_string(bytes.size()));
  }
}

}  // namespace

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    fail(ErrorCode::format, "gzip: inflateInit failed");
  }
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 20);
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      fail(ErrorCode::format, "gzip: corrupt stream (zlib code " + std::to_string(rc) + ")");
    }
    out.insert(out.end(), chunk.begin(),
               chunk.begin() + static_cast<std::ptrdiff_t>(chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      fail(ErrorCode::length, "gzip: stream ended before end marker");
    }
  }
  inflateEnd(&zs);
  return out;
}

RawImages load_idx_images(std::span<const std::uint8_t> input) {
  const Payload p = unwrap(input);
  const auto bytes = p.view;
  check_header(bytes, 16, kIdxImageMagic, "IDX images");
  RawImages r;
  r.count = read_be32(bytes, 4);
  r.rows = read_be32(bytes, 8);
  r.cols = read_be32(bytes, 12);
  const std::size_t expected = r.count * r.rows * r.cols;
  const std::size_t actual = bytes.size() - 16;
  if (actual != expected) {
    fail(ErrorCode::length, "IDX images: payload length mismatch, expected " +
                                std::to_string(expected) + " bytes, got " + std::to_string(actual));
  }
  r.pixels.assign(bytes.begin() + 16, bytes.end());
  return r;
}

std::vector<std::uint8_t> load_idx_labels(std::span<const std::uint8_t> input) {
  const Payload p = unwrap(input);
  const auto bytes = p.view;
  check_header(bytes, 8, kIdxLabelMagic, "IDX labels");
  const std::size_t count = read_be32(bytes, 4);
  const std::size_t actual = bytes.size() - 8;
  if (actual != count) {
    fail(ErrorCode::length, "IDX labels: payload length mismatch, expected " +
                                std::to_string(count) + " bytes, got " + std::to_string(actual));
  }
  std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= kNumClasses) {
      fail(ErrorCode::validation, "IDX labels: label " + std::to_string(labels[i]) + " at index " +
                                      std::to_string(i) + " outside 0..9");
    }
  }
  return labels;
}

std::vector<std::uint8_t> write_idx_images(const RawImages& images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.count));
  write_be32(out, static_cast<std::uint32_t>(images.rows));
  write_be32(out, static_cast<std::uint32_t>(images.cols));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> write_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, kIdxLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

const char* to_string(Source s) {
  switch (s) {
    case Source::mnist:
      return "mnist";
    case Source::fashion_mnist:
      return "fashion-mnist";
    case Source::synthetic:
      return "synthetic";
  }
  return "?";
}

Source source_from_string(const std::string& s) {
  if (s == "mnist") return Source::mnist;
  if (s == "fashion-mnist" || s == "fashion_mnist" || s == "fmnist") {
    return Source::fashion_mnist;
  }
  if (s == "synthetic") return Source::synthetic;
  fail(ErrorCode::config, "unknown dataset '" + s + "'");
}

Dataset::Dataset(RawImages images, std::vector<std::uint8_t> labels, Split split, Source source)
    : rows_(images.rows),
      cols_(images.cols),
      pixels_(std::move(images.pixels)),
      labels_(std::move(labels)),
      split_(split),
      source_(source) {
  if (images.count != labels_.size()) {
    fail(ErrorCode::validation, "image count " + std::to_string(images.count) + " != label count " +
                                    std::to_string(labels_.size()));
  }
  for (std::uint8_t l : labels_) {
    if (l >= kNumClasses) {
      fail(ErrorCode::validation, "label " + std::to_string(l) + " outside 0..9");
    }
  }
  source_indices_.resize(labels_.size());
  std::iota(source_indices_.begin(), source_indices_.end(), std::size_t{0});
}

std::span<const std::uint8_t> Dataset::raw_image(std::size_t i) const {
  return std::span<const std::uint8_t>(pixels_).subspan(i * rows_ * cols_, rows_ * cols_);
}

void Dataset::copy_image(std::size_t i, std::span<double> out) const {
  const auto raw = raw_image(i);
  for (std::size_t p = 0; p < raw.size(); ++p) {
    out[p] = static_cast<double>(raw[p]) / 255.0;
  }
}

Tensor Dataset::image(std::size_t i) const {
  Tensor t({1, rows_, cols_});
  copy_image(i, t.data());
  return t;
}

std::set<int> Dataset::classes() const { return std::set<int>(labels_.begin(), labels_.end()); }

std::vector<std::size_t> Dataset::label_histogram() const {
  std::vector<std::size_t> h(kNumClasses, 0);
  for (std::uint8_t l : labels_) ++h[l];
  return h;
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
  Dataset d;
  d.rows_ = rows_;
  d.cols_ = cols_;
  d.split_ = split_;
  d.source_ = source_;
  const std::size_t n = rows_ * cols_;
  d.pixels_.reserve(indices.size() * n);
  d.labels_.reserve(indices.size());
  d.source_indices_.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) {
      fail(ErrorCode::validation,
           "index " + std::to_string(i) + " outside dataset of " + std::to_string(size()));
    }
    const auto raw = raw_image(i);
    d.pixels_.insert(d.pixels_.end(), raw.begin(), raw.end());
    d.labels_.push_back(labels_[i]);
    d.source_indices_.push_back(source_indices_[i]);
  }
  return d;
}

std::set<int> IncrementSchedule::seen_classes(std::size_t upto) const {
  std::set<int> s;
  for (std::size_t g = 0; g <= upto && g < groups.size(); ++g) {
    s.insert(groups[g].begin(), groups[g].end());
  }
  return s;
}

int IncrementSchedule::group_of(int c) const {
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (std::find(groups[g].begin(), groups[g].end(), c) != groups[g].end()) {
      return static_cast<int>(g);
    }
  }
  return -1;
}

IncrementSchedule build_increments(const std::set<int>& class_ids, int group_size,
                                   const std::optional<std::vector<int>>& order) {
  if (group_size < 1) {
    fail(ErrorCode::validation, "group size must be >= 1, got " + std::to_string(group_size));
  }
  std::vector<int> seq;
  if (order) {
    seq = *order;
    std::vector<int> sorted = seq;
    std::sort(sorted.begin(), sorted.end());
    if (!std::equal(sorted.begin(), sorted.end(), class_ids.begin(), class_ids.end())) {
      fail(ErrorCode::validation, "class order is not a permutation of the dataset's classes");
    }
  } else {
    seq.assign(class_ids.begin(), class_ids.end());
  }
  IncrementSchedule s;
  s.group_size = group_size;
  for (std::size_t i = 0; i < seq.size(); i += static_cast<std::size_t>(group_size)) {
    const std::size_t end = std::min(seq.size(), i + static_cast<std::size_t>(group_size));
    s.groups.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(i),
                          seq.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return s;
}

Dataset subset_by_classes(const Dataset& ds, const std::set<int>& classes) {
  if (classes.empty()) fail(ErrorCode::validation, "subset class set is empty");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (classes.count(ds.label(i))) idx.push_back(i);
  }
  if (idx.empty()) {
    std::string names;
    for (int c : classes) names += (names.empty() ? "" : ",") + std::to_string(c);
    fail(ErrorCode::empty_subset, "no examples with classes {" + names + "}");
  }
  return ds.select(idx);
}

DatasetFiles standard_files(const std::filesystem::path& data_dir, Source source, Split split) {
  const std::filesystem::path dir = data_dir / to_string(source);
  const std::string prefix = split == Split::train ? "train" : "t10k";
  auto pick = [&](const std::string& name) {
    const auto plain = dir / name;
    if (std::filesystem::exists(plain)) return plain;
    return dir / (name + ".gz");
  };
  return {pick(prefix + "-images-idx3-ubyte"), pick(prefix + "-labels-idx1-ubyte")};
}

Dataset load_dataset(const DatasetFiles& files, Split split, Source source) {
  RawImages images = load_idx_images(read_file(files.images));
  std::vector<std::uint8_t> labels = load_idx_labels(read_file(files.labels));
  return Dataset(std::move(images), std::move(labels), split, source);
}

Dataset load_dataset(const std::filesystem::path& data_dir, Source source, Split split) {
  return load_dataset(standard_files(data_dir, source, split), split, source);
}

std::filesystem::path resolve_data_dir(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("SPIKECL_DATA_DIR"); env && *env) return env;
  return fallback;
}

}  // namespace spikecl
