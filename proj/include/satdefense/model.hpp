#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "satdefense/errors.hpp"
#include "satdefense/fileio.hpp"
#include "satdefense/image.hpp"
#include "satdefense/rng.hpp"

namespace satdefense {

// Height x width x channels of an activation, stored like Image data.
struct TensorShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const noexcept { return height * width * channels; }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

// 3x3 convolution, stride 1, zero padding 1. Weights are [out][ky][kx][in].
template <typename Real>
struct Conv2d {
  TensorShape in;
  std::size_t filters = 0;
  std::vector<Real> weight;
  std::vector<Real> bias;

  static constexpr std::size_t kKernel = 3;
  TensorShape out_shape() const { return {in.height, in.width, filters}; }
  std::size_t weight_count() const { return filters * kKernel * kKernel * in.channels; }
};

struct Relu {
  TensorShape in;
  TensorShape out_shape() const { return in; }
};

// 2x2 max pooling, stride 2 (odd trailing rows/columns are dropped).
struct MaxPool2 {
  TensorShape in;
  TensorShape out_shape() const { return {in.height / 2, in.width / 2, in.channels}; }
};

// Fully connected; weights are [out][in].
template <typename Real>
struct Dense {
  TensorShape in;
  std::size_t outputs = 0;
  std::vector<Real> weight;
  std::vector<Real> bias;

  TensorShape out_shape() const { return {1, 1, outputs}; }
};

template <typename Real>
using Layer = std::variant<Conv2d<Real>, Relu, MaxPool2, Dense<Real>>;

// Per-layer parameter gradients, shaped like the layer's weight/bias (empty
// for parameter-free layers).
template <typename Real>
struct ParamGrads {
  std::vector<std::vector<Real>> weight;
  std::vector<std::vector<Real>> bias;

  void zero() {
    for (auto& w : weight) std::fill(w.begin(), w.end(), Real{0});
    for (auto& b : bias) std::fill(b.begin(), b.end(), Real{0});
  }
};

// Activations kept from a forward pass for the backward pass.
template <typename Real>
struct ForwardTrace {
  std::vector<std::vector<Real>> outputs;          // outputs[0] is the input
  std::vector<std::vector<std::uint32_t>> argmax;  // per layer, MaxPool2 only
};

struct CrossEntropyLoss {};

// max(max_{i != target} z_i - z_target, -kappa) on raw logits.
struct CwMarginLoss {
  std::size_t target = 0;
  double kappa = 0.0;
};

using LossKind = std::variant<CrossEntropyLoss, CwMarginLoss>;

template <typename Real>
class BasicClassifier {
 public:
  using value_type = Real;

  BasicClassifier() = default;
  BasicClassifier(TensorShape input, std::size_t num_classes, std::vector<Layer<Real>> layers)
      : input_(input), num_classes_(num_classes), layers_(std::move(layers)) {
    check_architecture();
  }

  // conv(3x3, 8) -> ReLU -> pool -> conv(3x3, 16) -> ReLU -> pool -> dense.
  // He-uniform initialisation, zero biases.
  static BasicClassifier standard_cnn(TensorShape input, std::size_t num_classes,
                                      std::uint64_t seed) {
    std::vector<Layer<Real>> layers;
    TensorShape s = input;
    Conv2d<Real> c1{s, 8, {}, {}};
    s = c1.out_shape();
    layers.emplace_back(std::move(c1));
    layers.emplace_back(Relu{s});
    layers.emplace_back(MaxPool2{s});
    s = MaxPool2{s}.out_shape();
    Conv2d<Real> c2{s, 16, {}, {}};
    s = c2.out_shape();
    layers.emplace_back(std::move(c2));
    layers.emplace_back(Relu{s});
    layers.emplace_back(MaxPool2{s});
    s = MaxPool2{s}.out_shape();
    layers.emplace_back(Dense<Real>{s, num_classes, {}, {}});
    BasicClassifier model(input, num_classes, std::move(layers));
    model.initialize(seed);
    return model;
  }

  // Single dense layer on the flattened input.
  static BasicClassifier linear(TensorShape input, std::size_t num_classes, std::uint64_t seed) {
    std::vector<Layer<Real>> layers;
    layers.emplace_back(Dense<Real>{input, num_classes, {}, {}});
    BasicClassifier model(input, num_classes, std::move(layers));
    model.initialize(seed);
    return model;
  }

  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& layer : layers_) {
      if (auto* c = std::get_if<Conv2d<Real>>(&layer)) {
        const double fan_in = static_cast<double>(Conv2d<Real>::kKernel * Conv2d<Real>::kKernel *
                                                  c->in.channels);
        const double limit = std::sqrt(6.0 / fan_in);
        for (auto& w : c->weight) w = static_cast<Real>(rng.uniform(-limit, limit));
        std::fill(c->bias.begin(), c->bias.end(), Real{0});
      } else if (auto* d = std::get_if<Dense<Real>>(&layer)) {
        const double limit = std::sqrt(6.0 / static_cast<double>(d->in.size()));
        for (auto& w : d->weight) w = static_cast<Real>(rng.uniform(-limit, limit));
        std::fill(d->bias.begin(), d->bias.end(), Real{0});
      }
    }
  }

  const TensorShape& input_shape() const noexcept { return input_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  const std::vector<Layer<Real>>& layers() const noexcept { return layers_; }
  std::vector<Layer<Real>>& layers() noexcept { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
      std::visit([&](const auto& l) {
        if constexpr (requires { l.weight; }) n += l.weight.size() + l.bias.size();
      }, layer);
    }
    return n;
  }

  ParamGrads<Real> make_grads() const {
    ParamGrads<Real> g;
    for (const auto& layer : layers_) {
      std::visit([&](const auto& l) {
        if constexpr (requires { l.weight; }) {
          g.weight.emplace_back(l.weight.size(), Real{0});
          g.bias.emplace_back(l.bias.size(), Real{0});
        } else {
          g.weight.emplace_back();
          g.bias.emplace_back();
        }
      }, layer);
    }
    return g;
  }

  void check_input(const Image& image) const {
    if (image.height() != input_.height || image.width() != input_.width ||
        image.channels() != input_.channels) {
      throw ShapeError("model expects " + std::to_string(input_.height) + "x" +
                       std::to_string(input_.width) + "x" + std::to_string(input_.channels) +
                       " input, got " + image.shape_string());
    }
  }

  std::vector<Real> to_input(const Image& image) const {
    check_input(image);
    const auto v = image.values();
    return std::vector<Real>(v.begin(), v.end());
  }

  ForwardTrace<Real> forward_trace(std::vector<Real> input) const {
    if (input.size() != input_.size()) throw ShapeError("model input length mismatch");
    ForwardTrace<Real> t;
    t.outputs.reserve(layers_.size() + 1);
    t.argmax.resize(layers_.size());
    t.outputs.push_back(std::move(input));
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::vector<Real> out;
      std::visit([&](const auto& l) { out = forward_layer(l, t.outputs.back(), t.argmax[i]); },
                 layers_[i]);
      t.outputs.push_back(std::move(out));
    }
    return t;
  }

  std::vector<Real> forward(const Image& image) const {
    return std::move(forward_trace(to_input(image)).outputs.back());
  }

  std::size_t predict(const Image& image) const {
    const auto z = forward(image);
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  }

  // Back-propagates d(loss)/d(logits). Accumulates parameter gradients into
  // `grads` when given and returns d(loss)/d(input).
  std::vector<Real> backward(const ForwardTrace<Real>& trace, std::vector<Real> grad_out,
                             ParamGrads<Real>* grads) const {
    for (std::size_t i = layers_.size(); i-- > 0;) {
      std::visit([&](const auto& l) {
        grad_out = backward_layer(l, trace.outputs[i], trace.argmax[i], grad_out,
                                  grads ? &grads->weight[i] : nullptr,
                                  grads ? &grads->bias[i] : nullptr);
      }, layers_[i]);
    }
    return grad_out;
  }

  friend bool operator==(const BasicClassifier& a, const BasicClassifier& b) {
    if (!(a.input_ == b.input_) || a.num_classes_ != b.num_classes_ ||
        a.layers_.size() != b.layers_.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      if (a.layers_[i].index() != b.layers_[i].index()) return false;
      const bool same = std::visit([&](const auto& la) {
        using L = std::decay_t<decltype(la)>;
        const auto& lb = std::get<L>(b.layers_[i]);
        if constexpr (requires { la.weight; }) {
          return la.in == lb.in && la.weight == lb.weight && la.bias == lb.bias;
        } else {
          return la.in == lb.in;
        }
      }, a.layers_[i]);
      if (!same) return false;
    }
    return true;
  }

 private:
  void check_architecture() {
    if (num_classes_ < 2) throw ArgumentError("classifier needs at least two classes");
    if (layers_.empty()) throw ArgumentError("classifier has no layers");
    TensorShape s = input_;
    for (auto& layer : layers_) {
      std::visit([&](auto& l) {
        if (!(l.in == s)) throw ShapeError("layer input shape does not chain");
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, Conv2d<Real>>) {
          if (l.weight.empty()) l.weight.assign(l.weight_count(), Real{0});
          if (l.bias.empty()) l.bias.assign(l.filters, Real{0});
          if (l.weight.size() != l.weight_count() || l.bias.size() != l.filters) {
            throw ShapeError("conv parameter shape mismatch");
          }
        } else if constexpr (std::is_same_v<std::decay_t<decltype(l)>, Dense<Real>>) {
          if (l.weight.empty()) l.weight.assign(l.outputs * l.in.size(), Real{0});
          if (l.bias.empty()) l.bias.assign(l.outputs, Real{0});
          if (l.weight.size() != l.outputs * l.in.size() || l.bias.size() != l.outputs) {
            throw ShapeError("dense parameter shape mismatch");
          }
        } else if constexpr (std::is_same_v<std::decay_t<decltype(l)>, MaxPool2>) {
          if (l.in.height < 2 || l.in.width < 2) throw ShapeError("pooling input too small");
        }
        s = l.out_shape();
      }, layer);
    }
    if (s.size() != num_classes_) throw ShapeError("last layer width != num_classes");
  }

  static std::vector<Real> forward_layer(const Conv2d<Real>& l, const std::vector<Real>& x,
                                         std::vector<std::uint32_t>&) {
    const auto [h, w, ci] = l.in;
    const std::size_t co = l.filters;
    std::vector<Real> y(h * w * co);
    for (std::size_t oy = 0; oy < h; ++oy) {
      for (std::size_t ox = 0; ox < w; ++ox) {
        Real* out = &y[(oy * w + ox) * co];
        for (std::size_t o = 0; o < co; ++o) out[o] = l.bias[o];
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const long iy = static_cast<long>(oy + ky) - 1;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const long ix = static_cast<long>(ox + kx) - 1;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const Real* in = &x[(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * ci];
            for (std::size_t o = 0; o < co; ++o) {
              const Real* k = &l.weight[((o * 3 + ky) * 3 + kx) * ci];
              Real acc{0};
              for (std::size_t c = 0; c < ci; ++c) acc += k[c] * in[c];
              out[o] += acc;
            }
          }
        }
      }
    }
    return y;
  }

  static std::vector<Real> backward_layer(const Conv2d<Real>& l, const std::vector<Real>& x,
                                          const std::vector<std::uint32_t>&,
                                          const std::vector<Real>& gy, std::vector<Real>* gw,
                                          std::vector<Real>* gb) {
    const auto [h, w, ci] = l.in;
    const std::size_t co = l.filters;
    std::vector<Real> gx(x.size(), Real{0});
    for (std::size_t oy = 0; oy < h; ++oy) {
      for (std::size_t ox = 0; ox < w; ++ox) {
        const Real* g = &gy[(oy * w + ox) * co];
        if (gb) {
          for (std::size_t o = 0; o < co; ++o) (*gb)[o] += g[o];
        }
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const long iy = static_cast<long>(oy + ky) - 1;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const long ix = static_cast<long>(ox + kx) - 1;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t base = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * ci;
            const Real* in = &x[base];
            Real* gin = &gx[base];
            for (std::size_t o = 0; o < co; ++o) {
              const std::size_t kb = ((o * 3 + ky) * 3 + kx) * ci;
              const Real* k = &l.weight[kb];
              const Real go = g[o];
              for (std::size_t c = 0; c < ci; ++c) gin[c] += k[c] * go;
              if (gw) {
                Real* gk = &(*gw)[kb];
                for (std::size_t c = 0; c < ci; ++c) gk[c] += in[c] * go;
              }
            }
          }
        }
      }
    }
    return gx;
  }

  static std::vector<Real> forward_layer(const Relu&, const std::vector<Real>& x,
                                         std::vector<std::uint32_t>&) {
    std::vector<Real> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > Real{0} ? x[i] : Real{0};
    return y;
  }

  static std::vector<Real> backward_layer(const Relu&, const std::vector<Real>& x,
                                          const std::vector<std::uint32_t>&,
                                          const std::vector<Real>& gy, std::vector<Real>*,
                                          std::vector<Real>*) {
    std::vector<Real> gx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > Real{0} ? gy[i] : Real{0};
    return gx;
  }

  static std::vector<Real> forward_layer(const MaxPool2& l, const std::vector<Real>& x,
                                         std::vector<std::uint32_t>& argmax) {
    const auto [h, w, c] = l.in;
    const TensorShape os = l.out_shape();
    std::vector<Real> y(os.size());
    argmax.assign(os.size(), 0);
    for (std::size_t oy = 0; oy < os.height; ++oy) {
      for (std::size_t ox = 0; ox < os.width; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = ((2 * oy) * w + 2 * ox) * c + ch;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
              if (x[idx] > x[best]) best = idx;
            }
          }
          const std::size_t o = (oy * os.width + ox) * c + ch;
          y[o] = x[best];
          argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
    (void)h;
    return y;
  }

  static std::vector<Real> backward_layer(const MaxPool2&, const std::vector<Real>& x,
                                          const std::vector<std::uint32_t>& argmax,
                                          const std::vector<Real>& gy, std::vector<Real>*,
                                          std::vector<Real>*) {
    std::vector<Real> gx(x.size(), Real{0});
    for (std::size_t o = 0; o < gy.size(); ++o) gx[argmax[o]] += gy[o];
    return gx;
  }

  static std::vector<Real> forward_layer(const Dense<Real>& l, const std::vector<Real>& x,
                                         std::vector<std::uint32_t>&) {
    const std::size_t n = l.in.size();
    std::vector<Real> y(l.outputs);
    for (std::size_t o = 0; o < l.outputs; ++o) {
      const Real* row = &l.weight[o * n];
      Real acc = l.bias[o];
      for (std::size_t i = 0; i < n; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
    return y;
  }

  static std::vector<Real> backward_layer(const Dense<Real>& l, const std::vector<Real>& x,
                                          const std::vector<std::uint32_t>&,
                                          const std::vector<Real>& gy, std::vector<Real>* gw,
                                          std::vector<Real>* gb) {
    const std::size_t n = l.in.size();
    std::vector<Real> gx(n, Real{0});
    for (std::size_t o = 0; o < l.outputs; ++o) {
      const Real g = gy[o];
      const Real* row = &l.weight[o * n];
      for (std::size_t i = 0; i < n; ++i) gx[i] += row[i] * g;
      if (gw) {
        Real* grow = &(*gw)[o * n];
        for (std::size_t i = 0; i < n; ++i) grow[i] += x[i] * g;
      }
      if (gb) (*gb)[o] += g;
    }
    return gx;
  }

  TensorShape input_;
  std::size_t num_classes_ = 0;
  std::vector<Layer<Real>> layers_;
};

using Classifier = BasicClassifier<float>;

// ---------------------------------------------------------------------------
// Losses

template <typename Real>
std::vector<double> softmax(std::span<const Real> logits) {
  const double m = static_cast<double>(*std::max_element(logits.begin(), logits.end()));
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Loss value and d(loss)/d(logits).
template <typename Real>
std::pair<double, std::vector<Real>> loss_and_logit_grad(std::span<const Real> logits,
                                                         std::size_t label,
                                                         const LossKind& kind) {
  const std::size_t k = logits.size();
  std::vector<Real> g(k, Real{0});
  if (const auto* cw = std::get_if<CwMarginLoss>(&kind)) {
    if (cw->target >= k) throw ArgumentError("CW target out of range");
    std::size_t best = cw->target == 0 ? 1 : 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (i != cw->target && logits[i] > logits[best]) best = i;
    }
    const double margin = static_cast<double>(logits[best]) - static_cast<double>(logits[cw->target]);
    if (margin <= -cw->kappa) return {-cw->kappa, g};
    g[best] = Real{1};
    g[cw->target] = Real{-1};
    return {margin, g};
  }
  if (label >= k) throw ArgumentError("label out of range");
  const auto p = softmax(logits);
  const double m = static_cast<double>(*std::max_element(logits.begin(), logits.end()));
  double lse = 0.0;
  for (std::size_t i = 0; i < k; ++i) lse += std::exp(static_cast<double>(logits[i]) - m);
  const double loss = m + std::log(lse) - static_cast<double>(logits[label]);
  for (std::size_t i = 0; i < k; ++i) g[i] = static_cast<Real>(p[i] - (i == label ? 1.0 : 0.0));
  return {loss, g};
}

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // shaped like the image values
};

// Loss of `kind` on the model's logits and its exact gradient with respect to
// the input pixels.
template <typename Real>
LossAndGrad loss_and_input_grad(const BasicClassifier<Real>& model, const Image& image,
                                std::size_t label, const LossKind& kind) {
  if (label >= model.num_classes()) throw ArgumentError("label out of range");
  const auto trace = model.forward_trace(model.to_input(image));
  auto [loss, gz] = loss_and_logit_grad<Real>(trace.outputs.back(), label, kind);
  const auto gx = model.backward(trace, std::move(gz), nullptr);
  return {loss, std::vector<double>(gx.begin(), gx.end())};
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs == 0 || batch_size == 0) throw ArgumentError("epochs and batch_size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ArgumentError("learning_rate must be a finite non-negative number");
    }
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

// Mean loss over the batch; parameter gradients are averaged, then one plain
// SGD step is applied. Throws TrainingError if the loss is not finite.
template <typename Real>
double sgd_step(BasicClassifier<Real>& model, const Dataset& data,
                std::span<const std::size_t> batch, double learning_rate,
                ParamGrads<Real>& grads) {
  if (batch.empty()) throw ArgumentError("empty batch");
  grads.zero();
  double total = 0.0;
  for (std::size_t idx : batch) {
    const auto& s = data[idx];
    const auto trace = model.forward_trace(model.to_input(s.image));
    auto [loss, gz] = loss_and_logit_grad<Real>(trace.outputs.back(), s.label, CrossEntropyLoss{});
    total += loss;
    model.backward(trace, std::move(gz), &grads);
  }
  const double mean = total / static_cast<double>(batch.size());
  if (!std::isfinite(mean)) {
    throw TrainingError("non-finite batch loss (" + std::to_string(mean) + ")");
  }
  const auto scale = static_cast<Real>(learning_rate / static_cast<double>(batch.size()));
  auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::visit([&](auto& l) {
      if constexpr (requires { l.weight; }) {
        for (std::size_t j = 0; j < l.weight.size(); ++j) l.weight[j] -= scale * grads.weight[i][j];
        for (std::size_t j = 0; j < l.bias.size(); ++j) l.bias[j] -= scale * grads.bias[i][j];
      }
    }, layers[i]);
  }
  return mean;
}

template <typename Real>
double accuracy(const BasicClassifier<Real>& model, const Dataset& data) {
  std::size_t correct = 0;
  for (const auto& s : data) correct += model.predict(s.image) == s.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Mini-batch SGD over shuffled epochs. `on_epoch` may be empty.
template <typename Real>
std::vector<EpochStats> train(BasicClassifier<Real>& model, const Dataset& data,
                              const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto grads = model.make_grads();
  std::vector<EpochStats> log;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      loss_sum += sgd_step(model, data, std::span(order).subspan(start, end - start),
                           cfg.learning_rate, grads);
      ++batches;
    }
    EpochStats st{epoch, loss_sum / static_cast<double>(batches), accuracy(model, data)};
    log.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Checkpoints: "SATCKPT\0", u32 version, u32 input h/w/c, u32 classes,
// u32 layer count, per layer {u32 kind, u32 units}, then every parameter
// tensor (weight, bias per layer in order) as little-endian float32.

inline constexpr char kCheckpointMagic[8] = {'S', 'A', 'T', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class LayerKind : std::uint32_t { kConv = 1, kRelu = 2, kMaxPool = 3, kDense = 4 };

template <typename Real>
std::vector<std::uint8_t> encode_checkpoint(const BasicClassifier<Real>& model) {
  ByteWriter w;
  w.raw(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
  w.u32(kCheckpointVersion);
  const auto& in = model.input_shape();
  w.u32(static_cast<std::uint32_t>(in.height));
  w.u32(static_cast<std::uint32_t>(in.width));
  w.u32(static_cast<std::uint32_t>(in.channels));
  w.u32(static_cast<std::uint32_t>(model.num_classes()));
  w.u32(static_cast<std::uint32_t>(model.layers().size()));
  for (const auto& layer : model.layers()) {
    std::visit([&](const auto& l) {
      using L = std::decay_t<decltype(l)>;
      if constexpr (std::is_same_v<L, Conv2d<Real>>) {
        w.u32(static_cast<std::uint32_t>(LayerKind::kConv));
        w.u32(static_cast<std::uint32_t>(l.filters));
      } else if constexpr (std::is_same_v<L, Dense<Real>>) {
        w.u32(static_cast<std::uint32_t>(LayerKind::kDense));
        w.u32(static_cast<std::uint32_t>(l.outputs));
      } else if constexpr (std::is_same_v<L, Relu>) {
        w.u32(static_cast<std::uint32_t>(LayerKind::kRelu));
        w.u32(0);
      } else {
        w.u32(static_cast<std::uint32_t>(LayerKind::kMaxPool));
        w.u32(0);
      }
    }, layer);
  }
  for (const auto& layer : model.layers()) {
    std::visit([&](const auto& l) {
      if constexpr (requires { l.weight; }) {
        for (Real v : l.weight) w.f32(static_cast<float>(v));
        for (Real v : l.bias) w.f32(static_cast<float>(v));
      }
    }, layer);
  }
  return w.bytes();
}

template <typename Real = float>
BasicClassifier<Real> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (bytes.size() < sizeof kCheckpointMagic ||
      r.raw(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw FormatError("not a classifier checkpoint (bad magic)");
  }
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  TensorShape in;
  in.height = r.u32();
  in.width = r.u32();
  in.channels = r.u32();
  const std::size_t classes = r.u32();
  const std::size_t count = r.u32();
  if (count == 0 || count > 64) throw FormatError("implausible layer count");
  std::vector<Layer<Real>> layers;
  TensorShape s = in;
  for (std::size_t i = 0; i < count; ++i) {
    const auto kind = static_cast<LayerKind>(r.u32());
    const std::size_t units = r.u32();
    switch (kind) {
      case LayerKind::kConv: {
        Conv2d<Real> c{s, units, {}, {}};
        s = c.out_shape();
        layers.emplace_back(std::move(c));
        break;
      }
      case LayerKind::kDense: {
        Dense<Real> d{s, units, {}, {}};
        s = d.out_shape();
        layers.emplace_back(std::move(d));
        break;
      }
      case LayerKind::kRelu:
        layers.emplace_back(Relu{s});
        break;
      case LayerKind::kMaxPool:
        layers.emplace_back(MaxPool2{s});
        s = MaxPool2{s}.out_shape();
        break;
      default:
        throw FormatError("unknown layer kind in checkpoint");
    }
  }
  BasicClassifier<Real> model = [&] {
    try {
      return BasicClassifier<Real>(in, classes, std::move(layers));
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("inconsistent checkpoint architecture: ") + e.what());
    }
  }();
  for (auto& layer : model.layers()) {
    std::visit([&](auto& l) {
      if constexpr (requires { l.weight; }) {
        for (auto& v : l.weight) v = static_cast<Real>(r.f32());
        for (auto& v : l.bias) v = static_cast<Real>(r.f32());
      }
    }, layer);
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint parameters");
  return model;
}

template <typename Real>
void save_checkpoint(const BasicClassifier<Real>& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(model));
}

template <typename Real = float>
BasicClassifier<Real> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<Real>(read_binary_file(path));
}

}  // namespace satdefense
