#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "spikecl/tensor.hpp"

namespace spikecl {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr int kNumClasses = 10;

struct RawImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count·rows·cols bytes
};

// Bytes may be a raw IDX stream or its gzip wrapper (detected by the 1f 8b
// signature).
RawImages load_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> load_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> write_idx_images(const RawImages& images);
std::vector<std::uint8_t> write_idx_labels(std::span<const std::uint8_t> labels);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes);

enum class Split { train, test };
enum class Source { mnist, fashion_mnist, synthetic };

const char* to_string(Split s);
const char* to_string(Source s);
Source source_from_string(const std::string& s);

// Labeled single-channel images. Pixels are kept as bytes and exposed scaled
// by 1/255, so every pixel lies in [0,1].
class Dataset {
 public:
  Dataset() = default;
  Dataset(RawImages images, std::vector<std::uint8_t> labels, Split split, Source source);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t pixels_per_image() const noexcept { return rows_ * cols_; }
  Split split() const noexcept { return split_; }
  Source source() const noexcept { return source_; }

  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<std::uint8_t>& labels() const noexcept { return labels_; }
  std::span<const std::uint8_t> raw_image(std::size_t i) const;

  double pixel(std::size_t i, std::size_t p) const {
    return static_cast<double>(pixels_[i * rows_ * cols_ + p]) / 255.0;
  }
  void copy_image(std::size_t i, std::span<double> out) const;
  // 1×rows×cols tensor.
  Tensor image(std::size_t i) const;

  std::set<int> classes() const;
  std::vector<std::size_t> label_histogram() const;

  // Positions in this dataset that produced a derived subset.
  const std::vector<std::size_t>& source_indices() const noexcept { return source_indices_; }

  Dataset select(std::span<const std::size_t> indices) const;

  bool operator==(const Dataset& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> pixels_;
  std::vector<std::uint8_t> labels_;
  std::vector<std::size_t> source_indices_;
  Split split_ = Split::train;
  Source source_ = Source::synthetic;
};

struct IncrementSchedule {
  std::vector<std::vector<int>> groups;
  int group_size = 2;

  std::size_t size() const noexcept { return groups.size(); }
  // Union of groups 0..=upto.
  std::set<int> seen_classes(std::size_t upto) const;
  // Index of the group holding class c, or -1.
  int group_of(int c) const;

  bool operator==(const IncrementSchedule& other) const = default;
};

// Contiguous chunks of `order` (ascending class_ids when absent); the last
// chunk may be short.
IncrementSchedule build_increments(const std::set<int>& class_ids, int group_size,
                                   const std::optional<std::vector<int>>& order);

// Examples whose label is in `classes`, original order preserved.
Dataset subset_by_classes(const Dataset& ds, const std::set<int>& classes);

struct DatasetFiles {
  std::filesystem::path images;
  std::filesystem::path labels;
};

// Standard file names inside `<data_dir>/<source>/`; a ".gz" sibling is used
// when the plain file is absent.
DatasetFiles standard_files(const std::filesystem::path& data_dir, Source source, Split split);

Dataset load_dataset(const DatasetFiles& files, Split split, Source source);
Dataset load_dataset(const std::filesystem::path& data_dir, Source source, Split split);

// SPIKECL_DATA_DIR when set, otherwise `fallback`.
std::filesystem::path resolve_data_dir(const std::filesystem::path& fallback);

}  // namespace spikecl
