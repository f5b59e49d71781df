#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "spikecl/dataset.hpp"
#include "spikecl/error.hpp"
#include "support.hpp"

using namespace spikecl;

namespace {

std::vector<std::uint8_t> header(std::uint32_t magic, std::initializer_list<std::uint32_t> dims) {
  std::vector<std::uint8_t> out;
  auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  put(magic);
  for (auto d : dims) put(d);
  return out;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::io;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("minimal image stream") {
    auto bytes = header(0x803, {1, 2, 2});
    bytes.insert(bytes.end(), {0, 255, 128, 64});
    const RawImages r = load_idx_images(bytes);
    CHECK(r.count == 1);
    CHECK(r.rows == 2);
    CHECK(r.cols == 2);
    const Dataset ds(r, {3}, Split::test, Source::synthetic);
    CHECK(ds.pixel(0, 0) == 0.0);
    CHECK(ds.pixel(0, 1) == 1.0);
    CHECK(ds.pixel(0, 2) == 128.0 / 255.0);
    CHECK(ds.pixel(0, 3) == 64.0 / 255.0);
  }

  TEST_CASE("label stream") {
    auto bytes = header(0x801, {3});
    bytes.insert(bytes.end(), {0, 9, 5});
    CHECK(load_idx_labels(bytes) == std::vector<std::uint8_t>{0, 9, 5});
    bytes.back() = 10;
    CHECK(code_of([&] { load_idx_labels(bytes); }) == ErrorCode::validation);
  }

  TEST_CASE("wrong magic is a format error naming the observed value") {
    auto bytes = header(0x801, {1, 2, 2});
    bytes.insert(bytes.end(), {0, 0, 0, 0});
    CHECK(code_of([&] { load_idx_images(bytes); }) == ErrorCode::format);
    CHECK(message_of([&] { load_idx_images(bytes); }).find("00000801") != std::string::npos);
    auto labels = header(0x803, {1});
    labels.push_back(0);
    CHECK(code_of([&] { load_idx_labels(labels); }) == ErrorCode::format);
  }

  TEST_CASE("truncated payload reports expected and actual bytes") {
    auto bytes = header(0x803, {2, 2, 2});
    bytes.insert(bytes.end(), {1, 2, 3, 4, 5});
    CHECK(code_of([&] { load_idx_images(bytes); }) == ErrorCode::length);
    const std::string msg = message_of([&] { load_idx_images(bytes); });
    CHECK(msg.find("8") != std::string::npos);
    CHECK(msg.find("5") != std::string::npos);
    CHECK(code_of([&] { load_idx_images(std::vector<std::uint8_t>{0, 0, 8}); }) ==
          ErrorCode::length);
    auto labels = header(0x801, {4});
    labels.push_back(1);
    CHECK(code_of([&] { load_idx_labels(labels); }) == ErrorCode::length);
  }

  TEST_CASE("gzip wrapped streams decode transparently") {
    auto bytes = header(0x803, {1, 2, 2});
    bytes.insert(bytes.end(), {0, 255, 128, 64});
    CHECK(load_idx_images(testing::gzip_bytes(bytes)).pixels == load_idx_images(bytes).pixels);
    auto gz = testing::gzip_bytes(bytes);
    gz.resize(gz.size() / 2);
    CHECK_THROWS_AS(load_idx_images(gz), Error);
  }

  TEST_CASE("write then parse round-trips") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Dataset ds = testing::random_dataset(17, 5, 3, seed);
      RawImages raw;
      raw.count = ds.size();
      raw.rows = ds.rows();
      raw.cols = ds.cols();
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto px = ds.raw_image(i);
        raw.pixels.insert(raw.pixels.end(), px.begin(), px.end());
      }
      const auto img_bytes = write_idx_images(raw);
      const auto lab_bytes = write_idx_labels(ds.labels());
      const Dataset back(load_idx_images(img_bytes), load_idx_labels(lab_bytes), ds.split(),
                         ds.source());
      CHECK(back == ds);
    }
  }

  TEST_CASE("files on disk, plain and gzipped") {
    testing::TempDir dir;
    const Dataset ds = testing::random_dataset(6, 28, 28, 9);
    RawImages raw{ds.size(), 28, 28, {}};
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto px = ds.raw_image(i);
      raw.pixels.insert(raw.pixels.end(), px.begin(), px.end());
    }
    std::filesystem::create_directories(dir / "mnist");
    auto write = [](const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
      std::ofstream(p, std::ios::binary)
          .write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    };
    write(dir / "mnist/t10k-images-idx3-ubyte", write_idx_images(raw));
    write(dir / "mnist/t10k-labels-idx1-ubyte.gz",
          testing::gzip_bytes(write_idx_labels(ds.labels())));
    const Dataset back = load_dataset(dir.path(), Source::mnist, Split::test);
    CHECK(back.labels() == ds.labels());
    CHECK(back.source() == Source::mnist);
    CHECK(code_of([&] { load_dataset(dir.path(), Source::mnist, Split::train); }) == ErrorCode::io);
  }

  TEST_CASE("pixels lie in [0,1]") {
    const Dataset ds = testing::random_dataset(20, 4, 4, 3);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const Tensor t = ds.image(i);
      CHECK(t.shape() == Shape{1, 4, 4});
      for (double p : t.data()) CHECK((p >= 0.0 && p <= 1.0));
    }
  }

  TEST_CASE("schedule examples") {
    std::set<int> all;
    for (int c = 0; c < 10; ++c) all.insert(c);
    CHECK(build_increments(all, 2, std::nullopt).groups ==
          std::vector<std::vector<int>>{{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}});
    CHECK(build_increments(all, 10, std::nullopt).groups.size() == 1);
    CHECK(build_increments(all, 3, std::nullopt).groups ==
          std::vector<std::vector<int>>{{0, 1, 2}, {3, 4, 5}, {6, 7, 8}, {9}});
    const auto custom = build_increments(all, 5, std::vector<int>{9, 8, 7, 6, 5, 4, 3, 2, 1, 0});
    CHECK(custom.groups.front() == std::vector<int>{9, 8, 7, 6, 5});
    CHECK(custom.group_of(2) == 1);
    CHECK(custom.seen_classes(0) == std::set<int>{5, 6, 7, 8, 9});
    CHECK(code_of([&] { build_increments(all, 2, std::vector<int>{0, 1, 2}); }) ==
          ErrorCode::validation);
    CHECK(code_of([&] {
            build_increments(all, 2, std::vector<int>{0, 0, 2, 3, 4, 5, 6, 7, 8, 9});
          }) == ErrorCode::validation);
    CHECK(code_of([&] { build_increments(all, 0, std::nullopt); }) == ErrorCode::validation);
  }

  TEST_CASE("schedule groups are disjoint, cover the classes and are full except the last") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<int> order(10);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      const int g = 1 + trial % 10;
      const auto s = build_increments({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, g, order);
      std::vector<int> flat;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size()) CHECK(s.groups[i].size() == std::size_t(g));
        flat.insert(flat.end(), s.groups[i].begin(), s.groups[i].end());
      }
      CHECK(flat == order);
    }
  }

  TEST_CASE("subset keeps order and the groups partition the dataset") {
    const Dataset ds = testing::random_dataset(300, 3, 3, 4);
    CHECK(subset_by_classes(ds, ds.classes()) == ds);
    const auto s = build_increments(ds.classes(), 3, std::nullopt);
    std::vector<std::size_t> covered;
    for (const auto& g : s.groups) {
      const Dataset sub = subset_by_classes(ds, {g.begin(), g.end()});
      CHECK(std::is_sorted(sub.source_indices().begin(), sub.source_indices().end()));
      for (std::size_t i = 0; i < sub.size(); ++i) {
        const std::size_t src = sub.source_indices()[i];
        CHECK(sub.label(i) == ds.label(src));
        CHECK(std::equal(sub.raw_image(i).begin(), sub.raw_image(i).end(),
                         ds.raw_image(src).begin()));
      }
      covered.insert(covered.end(), sub.source_indices().begin(), sub.source_indices().end());
    }
    std::sort(covered.begin(), covered.end());
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    CHECK(covered == all);
  }

  TEST_CASE("empty subsets are errors") {
    const Dataset ds = testing::pattern_dataset(3, 8, {0, 1, 2}, 1);
    CHECK(code_of([&] { subset_by_classes(ds, {7}); }) == ErrorCode::empty_subset);
    CHECK(code_of([&] { subset_by_classes(ds, {}); }) == ErrorCode::validation);
    const std::vector<std::size_t> bad{ds.size()};
    CHECK(code_of([&] { ds.select(bad); }) == ErrorCode::validation);
  }

  TEST_CASE("mismatched image and label counts are rejected") {
    RawImages raw{2, 1, 1, {1, 2}};
    CHECK(code_of([&] { Dataset(raw, {1}, Split::train, Source::synthetic); }) ==
          ErrorCode::validation);
  }

  TEST_CASE("data directory override") {
    ::setenv("SPIKECL_DATA_DIR", "/tmp/elsewhere", 1);
    CHECK(resolve_data_dir("/fallback") == "/tmp/elsewhere");
    ::unsetenv("SPIKECL_DATA_DIR");
    CHECK(resolve_data_dir("/fallback") == "/fallback");
  }

  TEST_CASE("official MNIST files") {
    if (!testing::have_dataset(Source::mnist)) {
      MESSAGE("MNIST files not present; skipped");
      return;
    }
    const Dataset train = load_dataset(testing::data_dir(), Source::mnist, Split::train);
    const Dataset test = load_dataset(testing::data_dir(), Source::mnist, Split::test);
    CHECK(train.size() == 60000);
    CHECK(test.size() == 10000);
    CHECK(train.rows() == 28);
    CHECK(train.cols() == 28);
    for (const Dataset* ds : {&train, &test}) {
      const auto h = ds->label_histogram();
      for (std::size_t c : h) {
        CHECK(c >= ds->size() * 5 / 100);
        CHECK(c <= ds->size() * 15 / 100);
      }
    }
    // Counted independently from the label file.
    CHECK(train.label_histogram() ==
          std::vector<std::size_t>{5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949});
    CHECK(subset_by_classes(train, {0, 1}).size() == 12665);
  }
}
