#include "support.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace testing {

using namespace spikecl;

std::vector<std::uint8_t> gzip_bytes(const std::vector<std::uint8_t>& raw) {
  z_stream zs{};
  if (deflateInit2(&zs, 9, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw std::runtime_error("deflateInit2 failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&zs, raw.size()) + 32);
  zs.next_in = const_cast<Bytef*>(raw.data());
  zs.avail_in = static_cast<uInt>(raw.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  if (deflate(&zs, Z_FINISH) != Z_STREAM_END) throw std::runtime_error("deflate failed");
  out.resize(zs.total_out);
  deflateEnd(&zs);
  return out;
}

spikecl::Dataset pattern_dataset(std::size_t per_class, std::size_t side,
                                 const std::vector<int>& classes, std::uint64_t seed,
                                 spikecl::Split split) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> noise(0, 40);
  spikecl::RawImages img;
  img.rows = side;
  img.cols = side;
  std::vector<std::uint8_t> labels;
  const std::size_t cells = side * side;
  for (std::size_t k = 0; k < per_class; ++k) {
    for (int c : classes) {
      std::vector<std::uint8_t> px(cells);
      for (auto& p : px) p = static_cast<std::uint8_t>(noise(rng));
      // Two 2×2 blocks whose placement encodes the class (side >= 8).
      const std::size_t r = (static_cast<std::size_t>(c) % 4) * 2;
      const std::size_t q = (static_cast<std::size_t>(c) / 4) * 2;
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          px[(r + dy) * side + (q + dx)] = 255;
          px[(side - 2 - r + dy) * side + (side - 2 - q + dx)] = 230;
        }
      }
      img.pixels.insert(img.pixels.end(), px.begin(), px.end());
      labels.push_back(static_cast<std::uint8_t>(c));
      ++img.count;
    }
  }
  return spikecl::Dataset(std::move(img), std::move(labels), split, spikecl::Source::synthetic);
}

spikecl::Dataset random_dataset(std::size_t n, std::size_t rows, std::size_t cols,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> px(0, 255), lab(0, 9);
  spikecl::RawImages img;
  img.count = n;
  img.rows = rows;
  img.cols = cols;
  img.pixels.resize(n * rows * cols);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(px(rng));
  std::vector<std::uint8_t> labels(n);
  for (auto& l : labels) l = static_cast<std::uint8_t>(lab(rng));
  return spikecl::Dataset(std::move(img), std::move(labels), spikecl::Split::test,
                          spikecl::Source::synthetic);
}

spikecl::ModelSpec tiny_spec(std::size_t side) {
  return spikecl::ModelSpec::parse("conv2d(4,3,1,valid) relu flatten dense(10)", {1, side, side});
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

class XmlChecker {
 public:
  explicit XmlChecker(const std::string& s) : s_(s) {}

  std::string run() {
    try {
      if (s_.compare(0, 5, "<?xml") == 0) {
        const auto end = s_.find("?>");
        if (end == std::string::npos) return "unterminated XML declaration";
        pos_ = end + 2;
      }
      misc();
      if (pos_ >= s_.size() || s_[pos_] != '<') return "missing root element";
      element();
      misc();
      if (pos_ != s_.size())
        return "content after the root element at offset " + std::to_string(pos_);
    } catch (const std::string& e) {
      return e;
    }
    return {};
  }

 private:
  [[noreturn]] void bad(const std::string& what) {
    throw what + " at offset " + std::to_string(pos_);
  }

  static bool name_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == ':';
  }
  static bool name_char(char c) {
    return name_start(c) || std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.';
  }

  void space() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  void misc() {
    for (;;) {
      space();
      if (s_.compare(pos_, 4, "<!--") == 0) {
        comment();
      } else {
        return;
      }
    }
  }

  void comment() {
    const auto end = s_.find("-->", pos_ + 4);
    if (end == std::string::npos) bad("unterminated comment");
    if (s_.substr(pos_ + 4, end - pos_ - 4).find("--") != std::string::npos) bad("'--' in comment");
    pos_ = end + 3;
  }

  std::string name() {
    if (pos_ >= s_.size() || !name_start(s_[pos_])) bad("expected a name");
    const auto start = pos_;
    while (pos_ < s_.size() && name_char(s_[pos_])) ++pos_;
    return s_.substr(start, pos_ - start);
  }

  void reference() {
    const auto end = s_.find(';', pos_);
    if (end == std::string::npos) bad("unterminated entity reference");
    const std::string ent = s_.substr(pos_ + 1, end - pos_ - 1);
    static const std::set<std::string> predefined = {"amp", "lt", "gt", "quot", "apos"};
    bool ok = predefined.contains(ent);
    if (!ok && ent.size() > 1 && ent[0] == '#') {
      const bool hex = ent[1] == 'x';
      const std::string digits = ent.substr(hex ? 2 : 1);
      ok = !digits.empty();
      for (char c : digits) {
        ok = ok && (hex ? std::isxdigit(static_cast<unsigned char>(c))
                        : std::isdigit(static_cast<unsigned char>(c)));
      }
    }
    if (!ok) bad("undefined entity '&" + ent + ";'");
    pos_ = end + 1;
  }

  void element() {
    ++pos_;  // '<'
    const std::string tag = name();
    std::set<std::string> attrs;
    for (;;) {
      const auto before = pos_;
      space();
      if (pos_ >= s_.size()) bad("unterminated start tag <" + tag + ">");
      if (s_.compare(pos_, 2, "/>") == 0) {
        pos_ += 2;
        return;
      }
      if (s_[pos_] == '>') {
        ++pos_;
        break;
      }
      if (pos_ == before) bad("attributes must be separated by whitespace");
      const std::string attr = name();
      if (!attrs.insert(attr).second) bad("duplicate attribute '" + attr + "'");
      space();
      if (pos_ >= s_.size() || s_[pos_] != '=') bad("expected '=' after attribute");
      ++pos_;
      space();
      if (pos_ >= s_.size() || (s_[pos_] != '"' && s_[pos_] != '\'')) bad("unquoted attribute");
      const char q = s_[pos_++];
      while (pos_ < s_.size() && s_[pos_] != q) {
        if (s_[pos_] == '<') bad("'<' inside attribute value");
        if (s_[pos_] == '&') {
          reference();
        } else {
          ++pos_;
        }
      }
      if (pos_ >= s_.size()) bad("unterminated attribute value");
      ++pos_;
    }
    // content
    for (;;) {
      if (pos_ >= s_.size()) bad("missing </" + tag + ">");
      const char c = s_[pos_];
      if (c == '<') {
        if (s_.compare(pos_, 2, "</") == 0) {
          pos_ += 2;
          const std::string closing = name();
          if (closing != tag) bad("</" + closing + "> closes <" + tag + ">");
          space();
          if (pos_ >= s_.size() || s_[pos_] != '>') bad("malformed end tag");
          ++pos_;
          return;
        }
        if (s_.compare(pos_, 4, "<!--") == 0) {
          comment();
        } else if (s_.compare(pos_, 9, "<![CDATA[") == 0) {
          const auto end = s_.find("]]>", pos_);
          if (end == std::string::npos) bad("unterminated CDATA");
          pos_ = end + 3;
        } else {
          element();
        }
      } else if (c == '&') {
        reference();
      } else {
        if (s_.compare(pos_, 3, "]]>") == 0) bad("']]>' in text");
        ++pos_;
      }
    }
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string xml_problem(const std::string& doc) { return XmlChecker(doc).run(); }

// Every layer type appears in at least one case.
const std::vector<GradCase>& gradient_cases() {
  static const std::vector<GradCase> cases = {
      {"conv2d valid", "conv2d(3,3,1,valid) flatten dense(10)", {1, 5, 5}},
      {"conv2d same stride 2", "conv2d(2,3,2,same) flatten dense(10)", {2, 5, 6}},
      {"dense", "flatten dense(7) dense(10)", {1, 3, 3}},
      {"relu", "flatten dense(8) relu dense(10)", {1, 3, 3}},
      {"maxpool2d", "conv2d(2,3,1,same) maxpool2d flatten dense(10)", {1, 4, 4}},
      {"tanh", "flatten dense(6) tanh dense(10)", {1, 2, 3}},
      {"flatten", "conv2d(2,2,1,valid) relu flatten dense(10)", {1, 4, 3}},
  };
  return cases;
}

namespace {

// Signature of every piecewise choice in the forward pass: ReLU signs and
// maxpool winners. A coordinate whose ±h perturbation changes it sits on a
// kink, where the finite difference is not a derivative.
std::vector<std::size_t> kink_signature(const Model& m, const Tensor& batch) {
  std::vector<std::size_t> sig;
  const std::size_t per = m.input_size();
  ForwardTrace tr;
  for (std::size_t b = 0; b < batch.dim(0); ++b) {
    forward_sample(m, batch.data().subspan(b * per, per), tr);
    for (std::size_t l = 0; l < m.plan().size(); ++l) {
      if (m.plan()[l].spec.kind == LayerKind::relu) {
        for (double a : tr.activations[l + 1]) sig.push_back(a > 0.0);
      }
    }
    for (const auto& am : tr.argmax) sig.insert(sig.end(), am.begin(), am.end());
  }
  return sig;
}

}  // namespace

GradCheck gradient_check(const GradCase& gc, std::uint64_t seed) {
  Model model(ModelSpec::parse(gc.spec, gc.input), seed);
  // Nonzero biases so bias gradients are exercised away from trivial points.
  std::size_t k = 0;
  for (auto& p : model.params()) {
    for (double& b : p.bias.data()) b = 0.1 * std::sin(double(++k) + double(seed));
  }
  const std::size_t batch_n = 3;
  Shape bs{batch_n};
  bs.insert(bs.end(), gc.input.begin(), gc.input.end());
  const Tensor batch(bs, random_vector(shape_size(bs), seed * 7 + 1));
  const std::vector<int> labels{int(seed % 10), int((seed + 3) % 10), int((seed + 7) % 10)};
  const double l2 = 1e-3, h = 1e-4;

  const LossAndGradients analytic = backward(model, batch, labels, l2);
  const auto base_sig = kink_signature(model, batch);
  GradCheck out;
  auto tensors = model.parameter_tensors();
  // parameter_tensors lists weight then bias for parameterised layers only.
  std::vector<const Tensor*> flat_grads;
  for (std::size_t l = 0; l < model.plan().size(); ++l) {
    if (!model.plan()[l].spec.has_params()) continue;
    flat_grads.push_back(&analytic.grads[l].weight);
    flat_grads.push_back(&analytic.grads[l].bias);
  }
  if (flat_grads.size() != tensors.size()) throw std::logic_error("gradient layout mismatch");
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    for (std::size_t i = 0; i < tensors[t]->size(); ++i) {
      double& w = (*tensors[t])[i];
      const double orig = w;
      w = orig + h;
      const bool kink_p = kink_signature(model, batch) != base_sig;
      const double lp = backward(model, batch, labels, l2).loss;
      w = orig - h;
      const bool kink_m = kink_signature(model, batch) != base_sig;
      const double lm = backward(model, batch, labels, l2).loss;
      w = orig;
      if (kink_p || kink_m) {
        ++out.skipped;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = (*flat_grads[t])[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      out.max_rel = std::max(out.max_rel, std::fabs(a - numeric) / denom);
      ++out.checked;
    }
  }
  return out;
}

}  // namespace testing
