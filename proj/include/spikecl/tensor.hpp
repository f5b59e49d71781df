#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace spikecl {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major tensor of doubles. Shape is explicit metadata; the flat
// buffer always holds exactly shape_size(shape) elements.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  Tensor(Shape shape, std::initializer_list<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t c, std::size_t i, std::size_t j);
  double at(std::size_t c, std::size_t i, std::size_t j) const;

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  void reshape(Shape shape);

  void fill(double value);
  bool all_finite() const;

  static Tensor identity(std::size_t n);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class Padding { valid, same };

const char* to_string(Padding p);
Padding padding_from_string(const std::string& s);

// Geometry of a 2-D convolution over a C×H×W input.
struct ConvGeometry {
  std::size_t in_channels = 0, in_h = 0, in_w = 0;
  std::size_t kernel_h = 0, kernel_w = 0, stride = 1;
  std::size_t pad_top = 0, pad_left = 0;
  std::size_t out_h = 0, out_w = 0;

  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
  std::size_t positions() const { return out_h * out_w; }
};

// Resolves output size and padding; "same" splits the total padding with the
// extra row/column on the bottom/right. Throws a dimension error when the
// kernel does not fit.
ConvGeometry conv_geometry(const Shape& input, std::size_t kernel_h, std::size_t kernel_w,
                           std::size_t stride, Padding padding);

namespace kernels {

// C[M×N] = A[M×K]·B[K×N] (or C += A·B when accumulate). Every output element
// is summed over k in ascending order with a single accumulator, so results
// are bit-identical to the textbook triple loop.
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate = false);

// out[K×N] = in[N×K]^T
void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols);

// Unfolds a C×H×W input into [patch_size × positions] columns.
void im2col(std::span<const double> input, const ConvGeometry& g, std::span<double> cols);

// Adjoint of im2col: scatters columns back, summing overlaps into `input`.
void col2im(std::span<const double> cols, const ConvGeometry& g, std::span<double> input);

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Cross-correlation (no kernel flip). input C_in×H×W, kernels
// C_out×C_in×kh×kw -> C_out×H'×W'.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, Padding padding);

struct PoolResult {
  Tensor output;
  // Flat input index of the selected element for every output element.
  std::vector<std::size_t> argmax;
};

// 2×2 window, stride 2. Ties resolve to the first element in row-major order.
PoolResult maxpool2d(const Tensor& input);

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);

inline double relu_value(double x) { return x > 0.0 ? x : 0.0; }

// Numerically stable softmax (max subtraction).
Tensor softmax(const Tensor& logits);
void softmax(std::span<const double> logits, std::span<double> out);

// log(sum(exp(x))) with max subtraction.
double log_sum_exp(std::span<const double> x);

// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> x);

}  // namespace spikecl
