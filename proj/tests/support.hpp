#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "spikecl/dataset.hpp"
#include "spikecl/model.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return SPIKECL_TEST_DATA_DIR; }
inline std::filesystem::path fixtures_dir() { return SPIKECL_TEST_FIXTURES_DIR; }

inline bool have_dataset(spikecl::Source source) {
  using spikecl::Split;
  for (auto split : {Split::train, Split::test}) {
    const auto f = spikecl::standard_files(data_dir(), source, split);
    if (!std::filesystem::exists(f.images) || !std::filesystem::exists(f.labels)) return false;
  }
  return true;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "spikecl") {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::vector<std::uint8_t> gzip_bytes(const std::vector<std::uint8_t>& raw);

// Each class lights up its own pair of pixel blocks over faint noise, so a
// tiny conv net separates the classes within a few epochs.
spikecl::Dataset pattern_dataset(std::size_t per_class, std::size_t side,
                                 const std::vector<int>& classes, std::uint64_t seed,
                                 spikecl::Split split = spikecl::Split::train);

spikecl::Dataset random_dataset(std::size_t n, std::size_t rows, std::size_t cols,
                                std::uint64_t seed);

// conv2d(4,3,1,valid) relu flatten dense(10) on 1×side×side inputs.
spikecl::ModelSpec tiny_spec(std::size_t side = 8);

std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                  double hi = 1.0);

// Strict XML 1.0 well-formedness check of a complete document. Returns an
// empty string when the document is well-formed, otherwise the first problem.
std::string xml_problem(const std::string& doc);

std::size_t count_occurrences(const std::string& haystack, const std::string& needle);

std::string read_file_text(const std::filesystem::path& path);

struct GradCase {
  const char* name;
  const char* spec;
  spikecl::Shape input;
};
struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Every layer type appears in at least one case.
const std::vector<GradCase>& gradient_cases();

// Central differences against backward() on a batch of three, skipping
// coordinates whose perturbation crosses a ReLU or maxpool kink.
GradCheck gradient_check(const GradCase& gc, std::uint64_t seed);

}  // namespace testing
