#include "spikecl/tensor.hpp"

#include <cstring>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "spikecl/error.hpp"

namespace spikecl {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    fail(ErrorCode::dimension, "tensor shape " + shape_string(shape_) + " does not match " +
                                   std::to_string(data_.size()) + " values");
  }
}

Tensor::Tensor(Shape shape, std::initializer_list<double> data)
    : Tensor(std::move(shape), std::vector<double>(data)) {}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
double& Tensor::at(std::size_t c, std::size_t i, std::size_t j) {
  return data_[(c * shape_[1] + i) * shape_[2] + j];
}
double Tensor::at(std::size_t c, std::size_t i, std::size_t j) const {
  return data_[(c * shape_[1] + i) * shape_[2] + j];
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor t = *this;
  t.reshape(std::move(shape));
  return t;
}

void Tensor::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) {
    fail(ErrorCode::dimension,
         "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

const char* to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

Padding padding_from_string(const std::string& s) {
  if (s == "valid") return Padding::valid;
  if (s == "same") return Padding::same;
  fail(ErrorCode::validation, "unknown padding '" + s + "'");
}

ConvGeometry conv_geometry(const Shape& input, std::size_t kernel_h, std::size_t kernel_w,
                           std::size_t stride, Padding padding) {
  if (input.size() != 3) {
    fail(ErrorCode::dimension, "convolution expects C×H×W input, got " + shape_string(input));
  }
  if (stride == 0 || kernel_h == 0 || kernel_w == 0) {
    fail(ErrorCode::dimension, "convolution stride and kernel must be positive");
  }
  ConvGeometry g;
  g.in_channels = input[0];
  g.in_h = input[1];
  g.in_w = input[2];
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  std::size_t pad_h = 0, pad_w = 0;
  if (padding == Padding::same) {
    const std::size_t oh = (g.in_h + stride - 1) / stride;
    const std::size_t ow = (g.in_w + stride - 1) / stride;
    const std::size_t need_h = (oh - 1) * stride + kernel_h;
    const std::size_t need_w = (ow - 1) * stride + kernel_w;
    pad_h = need_h > g.in_h ? need_h - g.in_h : 0;
    pad_w = need_w > g.in_w ? need_w - g.in_w : 0;
  }
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  if (kernel_h > g.in_h + pad_h || kernel_w > g.in_w + pad_w) {
    fail(ErrorCode::dimension, "kernel " + std::to_string(kernel_h) + "x" +
                                   std::to_string(kernel_w) + " larger than padded input " +
                                   shape_string(input));
  }
  g.out_h = (g.in_h + pad_h - kernel_h) / stride + 1;
  g.out_w = (g.in_w + pad_w - kernel_w) / stride + 1;
  return g;
}

namespace kernels {

namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 16;

}  // namespace

namespace {

using v8d = double __attribute__((vector_size(64)));
constexpr std::size_t kLanes = 8;

inline v8d load8(const double* p) {
  v8d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, v8d v) { std::memcpy(p, &v, sizeof v); }

// kRowBlock rows × (Vecs·8) columns of C, accumulated over kk in order.
template <std::size_t Vecs>
void gemm_block(const double* __restrict ap, const double* __restrict bp, double* __restrict cp,
                std::size_t k, std::size_t n) {
  v8d acc[kRowBlock][Vecs];
#pragma GCC unroll 8
  for (std::size_t r = 0; r < kRowBlock; ++r) {
#pragma GCC unroll 8
    for (std::size_t q = 0; q < Vecs; ++q) acc[r][q] = load8(cp + r * n + q * kLanes);
  }
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* brow = bp + kk * n;
    v8d bv[Vecs];
#pragma GCC unroll 8
    for (std::size_t q = 0; q < Vecs; ++q) bv[q] = load8(brow + q * kLanes);
#pragma GCC unroll 8
    for (std::size_t r = 0; r < kRowBlock; ++r) {
      const v8d av = v8d{} + ap[r * k + kk];
#pragma GCC unroll 8
      for (std::size_t q = 0; q < Vecs; ++q) acc[r][q] += av * bv[q];
    }
  }
#pragma GCC unroll 8
  for (std::size_t r = 0; r < kRowBlock; ++r) {
#pragma GCC unroll 8
    for (std::size_t q = 0; q < Vecs; ++q) store8(cp + r * n + q * kLanes, acc[r][q]);
  }
}

void gemm_rows(const double* __restrict ap, const double* __restrict bp, double* __restrict cp,
               std::size_t rows, std::size_t k, std::size_t n, std::size_t j0) {
  for (std::size_t i = 0; i < rows; ++i) {
    double* crow = cp + i * n;
    const double* arow = ap + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = bp + kk * n;
      for (std::size_t j = j0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  if (!accumulate) std::fill(cp, cp + m * n, 0.0);
  const std::size_t m_blocked = m - m % kRowBlock;
  const std::size_t n_wide = n - n % kColBlock;
  const std::size_t n_narrow = n - n % kLanes;
  // Every path sums each output element over kk in ascending order, so the
  // result matches the naive triple loop bit for bit.
  for (std::size_t i = 0; i < m_blocked; i += kRowBlock) {
    for (std::size_t j = 0; j < n_wide; j += kColBlock) {
      gemm_block<kColBlock / kLanes>(ap + i * k, bp + j, cp + i * n + j, k, n);
    }
    if (n_narrow > n_wide) {
      gemm_block<1>(ap + i * k, bp + n_wide, cp + i * n + n_wide, k, n);
    }
  }
  if (n_narrow < n) gemm_rows(ap, bp, cp, m_blocked, k, n, n_narrow);
  gemm_rows(ap + m_blocked * k, bp, cp + m_blocked * n, m - m_blocked, k, n, 0);
}

void transpose(std::span<const double> in, std::span<double> out, std::size_t rows,
               std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
}

void im2col(std::span<const double> input, const ConvGeometry& g, std::span<double> cols) {
  const std::size_t positions = g.positions();
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < g.in_channels; ++ch) {
    const double* plane = input.data() + ch * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
        double* dst = cols.data() + row * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          // Signed arithmetic for the padded border.
          const long y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_top);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad_left);
            const bool inside =
                y >= 0 && x >= 0 && y < static_cast<long>(g.in_h) && x < static_cast<long>(g.in_w);
            dst[oy * g.out_w + ox] =
                inside ? plane[static_cast<std::size_t>(y) * g.in_w + static_cast<std::size_t>(x)]
                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im(std::span<const double> cols, const ConvGeometry& g, std::span<double> input) {
  const std::size_t positions = g.positions();
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < g.in_channels; ++ch) {
    double* plane = input.data() + ch * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
        const double* src = cols.data() + row * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_top);
          if (y < 0 || y >= static_cast<long>(g.in_h)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad_left);
            if (x < 0 || x >= static_cast<long>(g.in_w)) continue;
            plane[static_cast<std::size_t>(y) * g.in_w + static_cast<std::size_t>(x)] +=
                src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    fail(ErrorCode::dimension,
         "matmul shape mismatch: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  kernels::gemm(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    fail(ErrorCode::dimension, "transpose expects a matrix, got " + shape_string(a.shape()));
  }
  Tensor t({a.dim(1), a.dim(0)});
  kernels::transpose(a.data(), t.data(), a.dim(0), a.dim(1));
  return t;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, Padding padding) {
  if (kernels.rank() != 4) {
    fail(ErrorCode::dimension,
         "conv2d kernels must be C_out×C_in×kh×kw, got " + shape_string(kernels.shape()));
  }
  const ConvGeometry g =
      conv_geometry(input.shape(), kernels.dim(2), kernels.dim(3), stride, padding);
  if (kernels.dim(1) != g.in_channels) {
    fail(ErrorCode::dimension, "conv2d channel mismatch: input " + shape_string(input.shape()) +
                                   ", kernels " + shape_string(kernels.shape()));
  }
  const std::size_t out_c = kernels.dim(0);
  std::vector<double> cols(g.patch_size() * g.positions());
  kernels::im2col(input.data(), g, cols);
  Tensor out({out_c, g.out_h, g.out_w});
  kernels::gemm(kernels.data(), cols, out.data(), out_c, g.patch_size(), g.positions());
  return out;
}

PoolResult maxpool2d(const Tensor& input) {
  if (input.rank() != 3 || input.dim(1) % 2 != 0 || input.dim(2) % 2 != 0) {
    fail(ErrorCode::dimension,
         "maxpool2d needs C×H×W with even H and W, got " + shape_string(input.shape()));
  }
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  PoolResult r{Tensor({c, h / 2, w / 2}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; y += 2) {
      for (std::size_t x = 0; x < w; x += 2, ++o) {
        std::size_t best = (ch * h + y) * w + x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (ch * h + y + dy) * w + x + dx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        r.output[o] = input[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = relu_value(v);
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::dimension,
         "add shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

void softmax(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) fail(ErrorCode::dimension, "softmax of empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
}

Tensor softmax(const Tensor& logits) {
  Tensor out(Shape{logits.size()});
  softmax(logits.data(), out.data());
  return out;
}

double log_sum_exp(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

std::size_t argmax(std::span<const double> x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[best]) best = i;
  }
  return best;
}

}  // namespace spikecl
