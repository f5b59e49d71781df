#include <cmath>

#include "doctest.h"
#include "spikecl/error.hpp"
#include "spikecl/model.hpp"
#include "support.hpp"

using namespace spikecl;

TEST_SUITE("model") {
  TEST_CASE("reference topology shapes and parameter count") {
    const ModelSpec spec = ModelSpec::reference();
    const auto shapes = spec.output_shapes();
    CHECK(shapes[0] == Shape{32, 26, 26});
    CHECK(shapes[2] == Shape{64, 12, 12});
    CHECK(shapes[4] == Shape{128, 5, 5});
    CHECK(shapes.back() == Shape{10});
    CHECK(Model(spec, 1).parameter_count() == 320 + 18496 + 73856 + 32010);
    CHECK(ModelSpec::parse(spec.to_string()) == spec);
  }

  TEST_CASE("spec parsing errors") {
    try {
      ModelSpec::parse("conv2d(4,3) flatten dense(9)").output_shapes();
      FAIL("accepted a 9-wide head");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::dimension);
    }
    for (const char* bad :
         {"", "conv2d(4", "dense(x)", "wobble", "relu(3)", "conv2d(4,3,1,diag)"}) {
      try {
        ModelSpec::parse(bad);
        FAIL("accepted " << bad);
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config);
      }
    }
    // Shapes that do not compose.
    CHECK_THROWS_AS(Model(ModelSpec::parse("dense(10)", {1, 4, 4}), 1), Error);
    CHECK_THROWS_AS(Model(ModelSpec::parse("conv2d(2,5) flatten dense(10)", {1, 4, 4}), 1), Error);
    CHECK_THROWS_AS(Model(ModelSpec::parse("maxpool2d flatten dense(10)", {1, 3, 3}), 1), Error);
  }

  TEST_CASE("zero-weight model gives zero logits") {
    const Model m = Model::zeros(ModelSpec::reference());
    const Tensor batch({2, 1, 28, 28}, testing::random_vector(2 * 784, 1, 0.0, 1.0));
    const Tensor logits = forward(m, batch);
    CHECK(logits.shape() == Shape{2, 10});
    for (double v : logits.data()) CHECK(v == 0.0);
  }

  TEST_CASE("batch rows are independent") {
    const Model m(testing::tiny_spec(8), 3);
    const auto img = testing::random_vector(64, 2, 0.0, 1.0);
    std::vector<double> two(img);
    two.insert(two.end(), img.begin(), img.end());
    const Tensor one = forward(m, Tensor({1, 1, 8, 8}, img));
    const Tensor dup = forward(m, Tensor({2, 1, 8, 8}, two));
    for (std::size_t j = 0; j < 10; ++j) {
      CHECK(dup.at(0, j) == one.at(0, j));
      CHECK(dup.at(1, j) == one.at(0, j));
    }
    CHECK_THROWS_AS(forward(m, Tensor({1, 1, 7, 8})), Error);
  }

  TEST_CASE("hand-computed forward pass") {
    Model m = Model::zeros(ModelSpec::parse("conv2d(1,2,1,valid) flatten dense(10)", {1, 4, 4}));
    auto& conv = m.params()[0];
    conv.weight = Tensor({1, 1, 2, 2}, {1, 0, 0, -1});
    conv.bias = Tensor({1}, {0.5});
    auto& dense = m.params()[2];
    for (std::size_t j = 0; j < 9; ++j) dense.weight.at(j, j) = 1.0;
    for (std::size_t j = 0; j < 10; ++j) dense.bias[j] = double(j);
    std::vector<double> x(16);
    for (std::size_t i = 0; i < 16; ++i) x[i] = double(i);
    // Each conv output is x[y][x] - x[y+1][x+1] + 0.5 = -5 + 0.5.
    const Tensor logits = forward(m, Tensor({1, 1, 4, 4}, x));
    for (std::size_t j = 0; j < 9; ++j) CHECK(logits.at(0, j) == -4.5 + double(j));
    CHECK(logits.at(0, 9) == 9.0);
  }

  TEST_CASE("uniform prediction costs ln 10 and confident prediction costs nothing") {
    Model m = Model::zeros(testing::tiny_spec(8));
    const Tensor batch({2, 1, 8, 8}, testing::random_vector(128, 5, 0.0, 1.0));
    const std::vector<int> labels{3, 8};
    CHECK(backward(m, batch, labels, 0.0).loss == doctest::Approx(std::log(10.0)).epsilon(1e-15));
    Model hot = Model::zeros(testing::tiny_spec(8));
    hot.params().back().bias[5] = 100.0;
    const std::vector<int> fives{5, 5};
    CHECK(backward(hot, batch, fives, 0.0).loss < 1e-6);
  }

  TEST_CASE("labels outside the head are rejected") {
    const Model m(testing::tiny_spec(8), 1);
    const std::vector<int> labels{10};
    try {
      backward(m, Tensor({1, 1, 8, 8}), labels, 0.0);
      FAIL("accepted label 10");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::validation);
    }
  }

  TEST_CASE("l2 term covers weights but not biases") {
    Model m = Model::zeros(testing::tiny_spec(8));
    m.params()[0].weight.fill(0.5);
    m.params()[0].bias.fill(3.0);
    const Tensor batch({1, 1, 8, 8});
    const std::vector<int> labels{0};
    const double l0 = backward(m, batch, labels, 0.0).loss;
    const auto r = backward(m, batch, labels, 0.2);
    const double sq = 0.25 * double(m.params()[0].weight.size());
    CHECK(r.loss - l0 == doctest::Approx(0.1 * sq).epsilon(1e-12));
  }

  TEST_CASE("fresh model loss on a balanced batch is near ln 10") {
    std::vector<int> classes(10);
    for (int c = 0; c < 10; ++c) classes[std::size_t(c)] = c;
    const Dataset ds = testing::pattern_dataset(2, 28, classes, 11);
    Tensor batch({ds.size(), 1, 28, 28});
    std::vector<int> labels;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      ds.copy_image(i, batch.data().subspan(i * 784, 784));
      labels.push_back(ds.label(i));
    }
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const double loss = backward(Model(ModelSpec::reference(), seed), batch, labels, 0.0).loss;
      CHECK(loss >= 0.9 * std::log(10.0));
      CHECK(loss <= 1.3 * std::log(10.0));
    }
  }

  TEST_CASE("gradients match central finite differences") {
    for (const auto& gc : testing::gradient_cases()) {
      SUBCASE(gc.name) {
        double worst = 0.0;
        std::size_t checked = 0, skipped = 0;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
          const testing::GradCheck r = testing::gradient_check(gc, seed);
          worst = std::max(worst, r.max_rel);
          checked += r.checked;
          skipped += r.skipped;
        }
        INFO(gc.name << ": checked " << checked << ", skipped " << skipped);
        CHECK(worst < 1e-4);
        CHECK(checked > 20 * skipped);
      }
    }
  }

  TEST_CASE("validate rejects non-finite and misshapen parameters") {
    Model m(testing::tiny_spec(8), 1);
    CHECK_NOTHROW(m.validate());
    m.params()[0].weight[3] = NAN;
    try {
      m.validate();
      FAIL("accepted NaN");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::numeric);
    }
    m.params()[0].weight = Tensor({1, 1, 3, 3});
    CHECK_THROWS_AS(m.validate(), Error);
  }

  TEST_CASE("initialisation is seeded") {
    CHECK(Model(testing::tiny_spec(8), 4) == Model(testing::tiny_spec(8), 4));
    CHECK_FALSE(Model(testing::tiny_spec(8), 4) == Model(testing::tiny_spec(8), 5));
    const Model m(testing::tiny_spec(8), 4);
    for (const auto& p : m.params()) {
      for (double b : p.bias.data()) CHECK(b == 0.0);
    }
  }
}
