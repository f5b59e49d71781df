#include "spikecl/model.hpp"

#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include "spikecl/dataset.hpp"
#include "spikecl/error.hpp"

namespace spikecl {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d:
      return "conv2d";
    case LayerKind::maxpool2d:
      return "maxpool2d";
    case LayerKind::dense:
      return "dense";
    case LayerKind::relu:
      return "relu";
    case LayerKind::tanh:
      return "tanh";
    case LayerKind::flatten:
      return "flatten";
  }
  return "?";
}

LayerSpec LayerSpec::conv(std::size_t channels, std::size_t kernel, std::size_t stride,
                          Padding padding) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.units = channels;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::dense(std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.units = units;
  return s;
}

LayerSpec LayerSpec::of(LayerKind kind) {
  LayerSpec s;
  s.kind = kind;
  return s;
}

std::string LayerSpec::to_string() const {
  std::ostringstream os;
  os << spikecl::to_string(kind);
  if (kind == LayerKind::conv2d) {
    os << '(' << units << ',' << kernel << ',' << stride << ',' << spikecl::to_string(padding)
       << ')';
  } else if (kind == LayerKind::dense) {
    os << '(' << units << ')';
  }
  return os.str();
}

ModelSpec ModelSpec::reference() {
  ModelSpec s;
  s.layers = {LayerSpec::conv(32, 3, 1),         LayerSpec::of(LayerKind::relu),
              LayerSpec::conv(64, 3, 2),         LayerSpec::of(LayerKind::relu),
              LayerSpec::conv(128, 3, 2),        LayerSpec::of(LayerKind::relu),
              LayerSpec::of(LayerKind::flatten), LayerSpec::dense(10)};
  return s;
}

namespace {

std::vector<std::string> split_args(const std::string& inner) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : inner) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::size_t parse_count(const std::string& s, const std::string& token) {
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || v == 0) {
    fail(ErrorCode::config, "bad layer argument '" + s + "' in '" + token + "'");
  }
  return v;
}

LayerSpec parse_layer(const std::string& token) {
  const auto open = token.find('(');
  std::string name = token.substr(0, open);
  for (char& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  std::vector<std::string> args;
  if (open != std::string::npos) {
    if (token.back() != ')') fail(ErrorCode::config, "unbalanced layer '" + token + "'");
    args = split_args(token.substr(open + 1, token.size() - open - 2));
  }
  if (name == "conv2d" || name == "conv") {
    if (args.size() < 2 || args.size() > 4) {
      fail(ErrorCode::config, "conv2d takes (channels,kernel[,stride[,padding]]): '" + token + "'");
    }
    LayerSpec s = LayerSpec::conv(parse_count(args[0], token), parse_count(args[1], token));
    if (args.size() > 2) s.stride = parse_count(args[2], token);
    if (args.size() > 3) {
      try {
        s.padding = padding_from_string(args[3]);
      } catch (const Error&) {
        fail(ErrorCode::config, "bad padding in '" + token + "'");
      }
    }
    return s;
  }
  if (name == "dense") {
    if (args.size() != 1) fail(ErrorCode::config, "dense takes (units): '" + token + "'");
    return LayerSpec::dense(parse_count(args[0], token));
  }
  if (!args.empty()) fail(ErrorCode::config, "layer '" + name + "' takes no arguments");
  if (name == "relu") return LayerSpec::of(LayerKind::relu);
  if (name == "tanh") return LayerSpec::of(LayerKind::tanh);
  if (name == "flatten") return LayerSpec::of(LayerKind::flatten);
  if (name == "maxpool2d" || name == "maxpool") return LayerSpec::of(LayerKind::maxpool2d);
  fail(ErrorCode::config, "unknown layer '" + token + "'");
}

}  // namespace

ModelSpec ModelSpec::parse(const std::string& text, Shape input) {
  ModelSpec s;
  s.input = std::move(input);
  std::string token;
  int depth = 0;
  auto flush = [&] {
    if (!token.empty()) s.layers.push_back(parse_layer(token));
    token.clear();
  };
  for (char ch : text) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (depth == 0 && (std::isspace(static_cast<unsigned char>(ch)) || ch == ';' || ch == '|')) {
      flush();
    } else {
      token += ch;
    }
  }
  flush();
  if (s.layers.empty()) fail(ErrorCode::config, "model spec has no layers");
  return s;
}

std::string ModelSpec::to_string() const {
  std::string out;
  for (const auto& l : layers) {
    if (!out.empty()) out += ' ';
    out += l.to_string();
  }
  return out;
}

std::vector<Shape> ModelSpec::output_shapes() const {
  std::vector<Shape> shapes;
  Shape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + l.to_string() + ")";
    switch (l.kind) {
      case LayerKind::conv2d: {
        if (cur.size() != 3) {
          fail(ErrorCode::dimension, where + " needs C×H×W input, got " + shape_string(cur));
        }
        const ConvGeometry g = conv_geometry(cur, l.kernel, l.kernel, l.stride, l.padding);
        cur = {l.units, g.out_h, g.out_w};
        break;
      }
      case LayerKind::maxpool2d:
        if (cur.size() != 3 || cur[1] % 2 || cur[2] % 2) {
          fail(ErrorCode::dimension,
               where + " needs C×H×W with even H, W; got " + shape_string(cur));
        }
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::dense:
        if (cur.size() != 1) {
          fail(ErrorCode::dimension, where + " needs flat input, got " + shape_string(cur));
        }
        cur = {l.units};
        break;
      case LayerKind::flatten:
        cur = {shape_size(cur)};
        break;
      case LayerKind::relu:
      case LayerKind::tanh:
        break;
    }
    shapes.push_back(cur);
  }
  if (shapes.empty() || shapes.back() != Shape{static_cast<std::size_t>(kNumClasses)}) {
    fail(ErrorCode::dimension,
         "model head must be 10 wide, got " +
             (shapes.empty() ? std::string("nothing") : shape_string(shapes.back())));
  }
  return shapes;
}

Model::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  build_plan();
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < plan_.size(); ++i) {
    auto& p = params_[i];
    if (p.weight.empty()) continue;
    const std::size_t fan_in = p.weight.size() / p.weight.dim(0);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& w : p.weight.data()) w = dist(rng);
  }
}

Model Model::zeros(ModelSpec spec) {
  Model m;
  m.spec_ = std::move(spec);
  m.build_plan();
  return m;
}

void Model::build_plan() {
  const std::vector<Shape> shapes = spec_.output_shapes();
  plan_.clear();
  params_.clear();
  Shape in = spec_.input;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    LayerPlan p;
    p.spec = spec_.layers[i];
    p.in_shape = in;
    p.out_shape = shapes[i];
    LayerParams lp;
    if (p.spec.kind == LayerKind::conv2d) {
      p.conv = conv_geometry(in, p.spec.kernel, p.spec.kernel, p.spec.stride, p.spec.padding);
      lp.weight = Tensor({p.spec.units, in[0], p.spec.kernel, p.spec.kernel});
      lp.bias = Tensor({p.spec.units});
    } else if (p.spec.kind == LayerKind::dense) {
      lp.weight = Tensor({p.spec.units, in[0]});
      lp.bias = Tensor({p.spec.units});
    }
    plan_.push_back(std::move(p));
    params_.push_back(std::move(lp));
    in = shapes[i];
  }
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weight.size() + p.bias.size();
  return n;
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < plan_.size(); ++i) {
    if (!plan_[i].spec.has_params()) continue;
    const std::string base = std::string(to_string(plan_[i].spec.kind)) + "_" + std::to_string(i);
    names.push_back(base + ".weight");
    names.push_back(base + ".bias");
  }
  return names;
}

std::vector<Tensor*> Model::parameter_tensors() {
  std::vector<Tensor*> out;
  for (std::size_t i = 0; i < plan_.size(); ++i) {
    if (!plan_[i].spec.has_params()) continue;
    out.push_back(&params_[i].weight);
    out.push_back(&params_[i].bias);
  }
  return out;
}

std::vector<const Tensor*> Model::parameter_tensors() const {
  std::vector<const Tensor*> out;
  for (std::size_t i = 0; i < plan_.size(); ++i) {
    if (!plan_[i].spec.has_params()) continue;
    out.push_back(&params_[i].weight);
    out.push_back(&params_[i].bias);
  }
  return out;
}

void Model::validate() const {
  const Model shape_ref = Model::zeros(spec_);
  if (params_.size() != shape_ref.params_.size()) {
    fail(ErrorCode::validation, "parameter list does not match model spec");
  }
  const auto names = shape_ref.parameter_names();
  const auto want = shape_ref.parameter_tensors();
  const auto have = parameter_tensors();
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i]->shape() != have[i]->shape()) {
      fail(ErrorCode::validation, names[i] + " has shape " + shape_string(have[i]->shape()) +
                                      ", spec requires " + shape_string(want[i]->shape()));
    }
    if (!have[i]->all_finite()) {
      fail(ErrorCode::numeric, names[i] + " contains non-finite values");
    }
  }
}

bool Model::operator==(const Model& other) const {
  return spec_ == other.spec_ && params_ == other.params_ && seed_ == other.seed_ &&
         loss_log_ == other.loss_log_;
}

namespace {

void apply_layer_impl(const LayerPlan& plan, const LayerParams& params, std::span<const double> in,
                      std::span<double> out, std::vector<double>& cols,
                      std::vector<std::size_t>* argmax) {
  switch (plan.spec.kind) {
    case LayerKind::conv2d: {
      const ConvGeometry& g = plan.conv;
      const std::size_t positions = g.positions();
      cols.resize(g.patch_size() * positions);
      kernels::im2col(in, g, cols);
      kernels::gemm(params.weight.data(), cols, out, plan.spec.units, g.patch_size(), positions);
      for (std::size_t c = 0; c < plan.spec.units; ++c) {
        const double b = params.bias[c];
        double* row = out.data() + c * positions;
        for (std::size_t p = 0; p < positions; ++p) row[p] += b;
      }
      break;
    }
    case LayerKind::dense: {
      kernels::gemm(params.weight.data(), in, out, plan.spec.units, in.size(), 1);
      for (std::size_t o = 0; o < plan.spec.units; ++o) out[o] += params.bias[o];
      break;
    }
    case LayerKind::relu:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = relu_value(in[i]);
      break;
    case LayerKind::tanh:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
      break;
    case LayerKind::flatten:
      std::copy(in.begin(), in.end(), out.begin());
      break;
    case LayerKind::maxpool2d: {
      const std::size_t c = plan.in_shape[0], h = plan.in_shape[1], w = plan.in_shape[2];
      if (argmax) argmax->resize(out.size());
      std::size_t o = 0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; y += 2) {
          for (std::size_t x = 0; x < w; x += 2, ++o) {
            std::size_t best = (ch * h + y) * w + x;
            for (std::size_t dy = 0; dy < 2; ++dy) {
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t idx = (ch * h + y + dy) * w + x + dx;
                if (in[idx] > in[best]) best = idx;
              }
            }
            out[o] = in[best];
            if (argmax) (*argmax)[o] = best;
          }
        }
      }
      break;
    }
  }
}

}  // namespace

void apply_layer(const LayerPlan& plan, const LayerParams& params, std::span<const double> in,
                 std::span<double> out, std::vector<double>& scratch) {
  apply_layer_impl(plan, params, in, out, scratch, nullptr);
}

void forward_sample(const Model& model, std::span<const double> input, ForwardTrace& trace) {
  const auto& plan = model.plan();
  if (input.size() != model.input_size()) {
    fail(ErrorCode::dimension, "input has " + std::to_string(input.size()) +
                                   " values, model expects " + shape_string(model.spec().input));
  }
  trace.activations.resize(plan.size() + 1);
  trace.cols.resize(plan.size());
  trace.argmax.resize(plan.size());
  trace.activations[0].assign(input.begin(), input.end());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    trace.activations[i + 1].resize(plan[i].out_size());
    apply_layer_impl(plan[i], model.params()[i], trace.activations[i], trace.activations[i + 1],
                     trace.cols[i], &trace.argmax[i]);
  }
}

Tensor forward(const Model& model, const Tensor& batch) {
  const std::size_t per = model.input_size();
  if (batch.rank() != model.spec().input.size() + 1 ||
      !std::equal(model.spec().input.begin(), model.spec().input.end(),
                  batch.shape().begin() + 1)) {
    fail(ErrorCode::dimension, "batch shape " + shape_string(batch.shape()) +
                                   " does not match model input " +
                                   shape_string(model.spec().input));
  }
  const std::size_t n = batch.dim(0);
  const std::size_t classes = model.output_size();
  Tensor logits({n, classes});
  ForwardTrace trace;
  for (std::size_t b = 0; b < n; ++b) {
    forward_sample(model, batch.data().subspan(b * per, per), trace);
    std::copy(trace.logits().begin(), trace.logits().end(),
              logits.data().begin() + static_cast<std::ptrdiff_t>(b * classes));
  }
  return logits;
}

Gradients zero_gradients(const Model& model) {
  Gradients g;
  for (const auto& p : model.params()) {
    g.push_back({Tensor(p.weight.shape()), Tensor(p.bias.shape())});
  }
  return g;
}

GradientWorkspace::GradientWorkspace(const Model& model) {
  grad_act_.resize(model.plan().size() + 1);
  weight_t_.resize(model.plan().size());
}

double GradientWorkspace::loss_and_gradients(const Model& model,
                                             std::span<const std::span<const double>> inputs,
                                             std::span<const int> labels, double l2,
                                             Gradients& grads) {
  const auto& plan = model.plan();
  const auto& params = model.params();
  const std::size_t batch = inputs.size();
  if (batch == 0 || labels.size() != batch) {
    fail(ErrorCode::validation, "gradient batch needs matching nonempty inputs and labels");
  }
  const std::size_t classes = model.output_size();
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      fail(ErrorCode::validation,
           "label " + std::to_string(y) + " outside head width " + std::to_string(classes));
    }
  }
  grads = zero_gradients(model);
  grad_act_.resize(plan.size() + 1);
  weight_t_.resize(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (!plan[i].spec.has_params() || i == 0) continue;
    const Tensor& w = params[i].weight;
    const std::size_t rows = w.dim(0), cols = w.size() / w.dim(0);
    weight_t_[i] = Tensor({cols, rows});
    kernels::transpose(w.data(), weight_t_[i].data(), rows, cols);
  }

  double loss_sum = 0.0;
  probs_.resize(classes);
  for (std::size_t b = 0; b < batch; ++b) {
    forward_sample(model, inputs[b], trace_);
    const auto logits = trace_.logits();
    loss_sum += log_sum_exp(logits) - logits[static_cast<std::size_t>(labels[b])];
    softmax(logits, probs_);
    auto& top = grad_act_[plan.size()];
    top.assign(probs_.begin(), probs_.end());
    top[static_cast<std::size_t>(labels[b])] -= 1.0;

    for (std::size_t i = plan.size(); i-- > 0;) {
      const LayerPlan& lp = plan[i];
      const auto& in = trace_.activations[i];
      const auto& out = trace_.activations[i + 1];
      const auto& gout = grad_act_[i + 1];
      auto& gin = grad_act_[i];
      const bool need_input_grad = i > 0;
      if (need_input_grad) gin.assign(lp.in_size(), 0.0);
      switch (lp.spec.kind) {
        case LayerKind::dense: {
          const std::size_t units = lp.spec.units;
          kernels::gemm(gout, in, grads[i].weight.data(), units, 1, in.size(), true);
          for (std::size_t o = 0; o < units; ++o) grads[i].bias[o] += gout[o];
          if (need_input_grad) {
            kernels::gemm(weight_t_[i].data(), gout, gin, in.size(), units, 1);
          }
          break;
        }
        case LayerKind::conv2d: {
          const ConvGeometry& g = lp.conv;
          const std::size_t positions = g.positions(), patch = g.patch_size();
          const std::size_t units = lp.spec.units;
          cols_t_.resize(patch * positions);
          kernels::transpose(trace_.cols[i], cols_t_, patch, positions);
          kernels::gemm(gout, cols_t_, grads[i].weight.data(), units, positions, patch, true);
          for (std::size_t c = 0; c < units; ++c) {
            double s = grads[i].bias[c];
            for (std::size_t p = 0; p < positions; ++p) s += gout[c * positions + p];
            grads[i].bias[c] = s;
          }
          if (need_input_grad) {
            dcols_.resize(patch * positions);
            kernels::gemm(weight_t_[i].data(), gout, dcols_, patch, units, positions);
            kernels::col2im(dcols_, g, gin);
          }
          break;
        }
        case LayerKind::relu:
          if (need_input_grad) {
            for (std::size_t k = 0; k < gin.size(); ++k) gin[k] = in[k] > 0.0 ? gout[k] : 0.0;
          }
          break;
        case LayerKind::tanh:
          if (need_input_grad) {
            for (std::size_t k = 0; k < gin.size(); ++k) gin[k] = gout[k] * (1.0 - out[k] * out[k]);
          }
          break;
        case LayerKind::flatten:
          if (need_input_grad) gin.assign(gout.begin(), gout.end());
          break;
        case LayerKind::maxpool2d:
          if (need_input_grad) {
            const auto& am = trace_.argmax[i];
            for (std::size_t o = 0; o < am.size(); ++o) gin[am[o]] += gout[o];
          }
          break;
      }
    }
  }

  const double n = static_cast<double>(batch);
  double loss = loss_sum / n;
  double sq = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (!plan[i].spec.has_params()) continue;
    auto& gw = grads[i].weight;
    const auto& w = params[i].weight;
    for (std::size_t k = 0; k < gw.size(); ++k) {
      gw[k] = gw[k] / n + l2 * w[k];
      sq += w[k] * w[k];
    }
    for (double& gb : grads[i].bias.data()) gb /= n;
  }
  loss += 0.5 * l2 * sq;
  return loss;
}

LossAndGradients backward(const Model& model, const Tensor& batch, std::span<const int> labels,
                          double l2) {
  const std::size_t per = model.input_size();
  if (batch.rank() != model.spec().input.size() + 1 || batch.size() != batch.dim(0) * per) {
    fail(ErrorCode::dimension, "batch shape " + shape_string(batch.shape()) +
                                   " does not match model input " +
                                   shape_string(model.spec().input));
  }
  std::vector<std::span<const double>> inputs;
  for (std::size_t b = 0; b < batch.dim(0); ++b) {
    inputs.push_back(batch.data().subspan(b * per, per));
  }
  GradientWorkspace ws(model);
  LossAndGradients r;
  r.loss = ws.loss_and_gradients(model, inputs, labels, l2, r.grads);
  return r;
}

}  // namespace spikecl
