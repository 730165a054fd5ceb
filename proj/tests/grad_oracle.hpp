#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "satdefense/model.hpp"
#include "satdefense/rng.hpp"

// Central finite-difference checks of the analytic gradients. Probes whose
// +-step crosses a ReLU or max-pool switch are redrawn, since the loss is not
// differentiable there.
namespace satdefense::testing {

using DModel = BasicClassifier<double>;

struct GradCheck {
  std::string what;
  std::size_t probes = 0;
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
};

inline double fd_loss(const DModel& m, const std::vector<double>& x, std::size_t label,
                      const LossKind& kind) {
  const auto t = m.forward_trace(x);
  return loss_and_logit_grad<double>(t.outputs.back(), label, kind).first;
}

// Sign pattern of every activation plus pool winners; equal patterns mean the
// network is the same smooth piece.
inline std::vector<long> activation_pattern(const DModel& m, const std::vector<double>& x) {
  const auto t = m.forward_trace(x);
  std::vector<long> p;
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    if (std::holds_alternative<Relu>(m.layers()[i])) {
      for (double v : t.outputs[i]) p.push_back(v > 0.0 ? 1 : 0);
    }
    for (auto a : t.argmax[i]) p.push_back(static_cast<long>(a));
  }
  // Logit order: the CW margin switches when the best non-target class changes.
  const auto& z = t.outputs.back();
  std::vector<long> order(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) order[i] = static_cast<long>(i);
  std::sort(order.begin(), order.end(), [&](long a, long b) { return z[a] > z[b]; });
  p.insert(p.end(), order.begin(), order.end());
  return p;
}

inline double rel_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-7) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

// Input-gradient probes at `x`.
inline GradCheck check_input_grad(const DModel& m, const std::vector<double>& x, std::size_t label,
                                  const LossKind& kind, Rng& rng, std::size_t probes,
                                  double step = 1e-3) {
  GradCheck r{"input", 0, 0, 0.0};
  const auto t = m.forward_trace(x);
  auto gz = loss_and_logit_grad<double>(t.outputs.back(), label, kind).second;
  const auto g = m.backward(t, gz, nullptr);
  const auto base = activation_pattern(m, x);
  for (std::size_t attempt = 0; r.probes < probes && attempt < probes * 50; ++attempt) {
    const std::size_t j = rng.below(x.size());
    auto xp = x, xm = x;
    xp[j] += step;
    xm[j] -= step;
    if (activation_pattern(m, xp) != base || activation_pattern(m, xm) != base) {
      ++r.skipped;
      continue;
    }
    const double fd = (fd_loss(m, xp, label, kind) - fd_loss(m, xm, label, kind)) / (2 * step);
    r.max_rel_error = std::max(r.max_rel_error, rel_error(g[j], fd));
    ++r.probes;
  }
  return r;
}

// Parameter-gradient probes for layer `layer` (weights and biases mixed).
inline GradCheck check_param_grad(const DModel& model, const std::vector<double>& x,
                                  std::size_t label, const LossKind& kind, std::size_t layer,
                                  Rng& rng, std::size_t probes, double step = 1e-3) {
  GradCheck r{"layer " + std::to_string(layer), 0, 0, 0.0};
  auto grads = model.make_grads();
  const auto t = model.forward_trace(x);
  auto gz = loss_and_logit_grad<double>(t.outputs.back(), label, kind).second;
  model.backward(t, gz, &grads);
  const auto base = activation_pattern(model, x);
  const std::size_t nw = grads.weight[layer].size();
  const std::size_t nb = grads.bias[layer].size();
  if (nw + nb == 0) return r;
  for (std::size_t attempt = 0; r.probes < probes && attempt < probes * 50; ++attempt) {
    const std::size_t j = rng.below(nw + nb);
    auto perturbed = [&](double delta) {
      DModel m = model;
      std::visit([&](auto& l) {
        if constexpr (requires { l.weight; }) {
          if (j < nw) l.weight[j] += delta; else l.bias[j - nw] += delta;
        }
      }, m.layers()[layer]);
      return m;
    };
    const DModel mp = perturbed(step), mm = perturbed(-step);
    if (activation_pattern(mp, x) != base || activation_pattern(mm, x) != base) {
      ++r.skipped;
      continue;
    }
    const double fd = (fd_loss(mp, x, label, kind) - fd_loss(mm, x, label, kind)) / (2 * step);
    const double analytic = j < nw ? grads.weight[layer][j] : grads.bias[layer][j - nw];
    r.max_rel_error = std::max(r.max_rel_error, rel_error(analytic, fd));
    ++r.probes;
  }
  return r;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Single-layer networks (layer under test followed by a dense read-out) plus
// the full CNN, each probed on inputs and every parameter tensor.
inline std::vector<GradCheck> gradient_suite(std::uint64_t seed, std::size_t probes) {
  Rng rng(seed);
  std::vector<GradCheck> out;
  auto run = [&](const std::string& name, const DModel& m, const LossKind& kind, std::size_t label) {
    const auto x = random_vector(rng, m.input_shape().size(), -1.0, 1.0);
    auto in = check_input_grad(m, x, label, kind, rng, probes);
    in.what = name + " input";
    out.push_back(in);
    for (std::size_t i = 0; i < m.layers().size(); ++i) {
      auto pg = check_param_grad(m, x, label, kind, i, rng, probes);
      if (pg.probes == 0 && pg.skipped == 0) continue;
      pg.what = name + " params of layer " + std::to_string(i);
      out.push_back(pg);
    }
  };
  const TensorShape in{6, 6, 3};
  auto randomized = [&](std::vector<Layer<double>> layers) {
    DModel m(in, 4, std::move(layers));
    for (auto& l : m.layers()) {
      std::visit([&](auto& layer) {
        if constexpr (requires { layer.weight; }) {
          for (auto& w : layer.weight) w = rng.uniform(-0.5, 0.5);
          for (auto& b : layer.bias) b = rng.uniform(-0.2, 0.2);
        }
      }, l);
    }
    return m;
  };
  const Conv2d<double> conv{in, 5, {}, {}};
  run("conv", randomized({conv, Dense<double>{conv.out_shape(), 4, {}, {}}}), CrossEntropyLoss{}, 1);
  run("relu", randomized({Relu{in}, Dense<double>{in, 4, {}, {}}}), CrossEntropyLoss{}, 2);
  run("maxpool", randomized({MaxPool2{in}, Dense<double>{MaxPool2{in}.out_shape(), 4, {}, {}}}),
      CrossEntropyLoss{}, 3);
  run("dense", randomized({Dense<double>{in, 4, {}, {}}}), CrossEntropyLoss{}, 0);
  const DModel cnn = DModel::standard_cnn({8, 8, 3}, 5, seed + 1);
  run("cnn", cnn, CrossEntropyLoss{}, 2);
  run("cnn cw-margin", cnn, CwMarginLoss{3, 0.0}, 3);
  return out;
}

}  // namespace satdefense::testing
