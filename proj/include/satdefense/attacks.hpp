#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "satdefense/errors.hpp"
#include "satdefense/image.hpp"
#include "satdefense/metrics.hpp"
#include "satdefense/model.hpp"
#include "satdefense/rng.hpp"
#include "satdefense/transform.hpp"

namespace satdefense {

enum class Norm { kLinf, kL2 };

// Perturbation bound. linf_eps is per entry on the [0,1] scale; l2_eps uses
// the l2_distance convention (0-255 scale, divided by the entry count).
struct AttackBudget {
  double linf_eps = 8.0 / 255.0;
  double l2_eps = 0.05;
  Norm active = Norm::kLinf;

  void validate() const {
    const double eps = active == Norm::kLinf ? linf_eps : l2_eps;
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ArgumentError("attack budget must be positive");
  }
};

// Rounding slack allowed when checking a projected example against its bound.
inline constexpr double kBudgetTolerance = 1e-12;

struct AdversarialExample {
  Image original;
  Image perturbed;
  std::size_t true_label = 0;
  std::size_t target_label = 0;
  std::size_t rounds_used = 0;
  bool reached_target = false;  // undefended model predicts target_label
};

inline double linf_distance(const Image& a, const Image& b) {
  require_same_shape(a, b, "linf_distance");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  }
  return m;
}

// True when `perturbed` is in [0,1] and within the active bound of `original`.
inline bool within_budget(const Image& original, const Image& perturbed, const AttackBudget& b) {
  if (!perturbed.same_shape(original) || !perturbed.in_range()) return false;
  if (b.active == Norm::kLinf) return linf_distance(original, perturbed) <= b.linf_eps + kBudgetTolerance;
  return l2_distance(original, perturbed) <= b.l2_eps + kBudgetTolerance;
}

// Projects `candidate` onto the budget ball around `original`, then clips to
// [0,1]. Clipping only moves entries toward `original`'s feasible box, so the
// bound still holds afterwards.
inline void project_to_budget(const Image& original, std::vector<double>& candidate,
                              const AttackBudget& b) {
  const auto x0 = original.values();
  if (b.active == Norm::kLinf) {
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      candidate[i] = std::clamp(candidate[i], x0[i] - b.linf_eps, x0[i] + b.linf_eps);
    }
  } else {
    const double radius = l2_metric_to_unit_radius(b.l2_eps, candidate.size());
    double norm2 = 0.0;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      const double d = candidate[i] - x0[i];
      norm2 += d * d;
    }
    const double norm = std::sqrt(norm2);
    if (norm > radius) {
      const double scale = radius / norm * (1.0 - 1e-12);
      for (std::size_t i = 0; i < candidate.size(); ++i) {
        candidate[i] = x0[i] + (candidate[i] - x0[i]) * scale;
      }
    }
  }
  for (double& v : candidate) v = Image::clamp01(v);
}

inline Image with_values(const Image& like, std::vector<double> values) {
  return Image::from_values(like.height(), like.width(), like.channels(), std::move(values));
}

// Uniformly random label different from `true_label`.
inline std::size_t draw_target(std::size_t true_label, std::size_t num_classes, Rng& rng) {
  if (num_classes < 2) throw ArgumentError("targeted attacks need at least two classes");
  return (true_label + 1 + rng.below(num_classes - 1)) % num_classes;
}

namespace detail {

inline void check_target(std::size_t true_label, std::size_t target, std::size_t classes) {
  if (true_label >= classes || target >= classes) throw ArgumentError("class index out of range");
  if (target == true_label) throw ArgumentError("target label must differ from the true label");
}

inline double sign(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// One targeted sign step: descend the target-label cross-entropy.
template <typename Real>
std::vector<double> signed_step(const BasicClassifier<Real>& model, const Image& original,
                                const Image& current, std::size_t target, double step,
                                const AttackBudget& budget) {
  const auto g = loss_and_input_grad(model, current, target, CrossEntropyLoss{}).grad;
  std::vector<double> next(current.values().begin(), current.values().end());
  for (std::size_t i = 0; i < next.size(); ++i) next[i] -= step * sign(g[i]);
  project_to_budget(original, next, budget);
  return next;
}

template <typename Real>
AdversarialExample finish(const BasicClassifier<Real>& model, const Image& original,
                          Image perturbed, std::size_t true_label, std::size_t target,
                          std::size_t rounds) {
  AdversarialExample ae{original, std::move(perturbed), true_label, target, rounds, false};
  ae.reached_target = model.predict(ae.perturbed) == target;
  return ae;
}

}  // namespace detail

// Single targeted step: clip(x - eps * sign(grad CE(target))).
template <typename Real>
AdversarialExample fgsm(const BasicClassifier<Real>& model, const Image& image,
                        std::size_t true_label, std::size_t target, const AttackBudget& budget) {
  if (budget.active != Norm::kLinf) throw ArgumentError("FGSM needs an l-infinity budget");
  if (!(budget.linf_eps >= 0.0)) throw ArgumentError("FGSM eps must be non-negative");
  detail::check_target(true_label, target, model.num_classes());
  auto next = detail::signed_step(model, image, image, target, budget.linf_eps, budget);
  return detail::finish(model, image, with_values(image, std::move(next)), true_label, target, 1);
}

// Repeated targeted sign steps, each projected to the eps-ball and [0,1].
template <typename Real>
AdversarialExample ifgsm(const BasicClassifier<Real>& model, const Image& image,
                         std::size_t true_label, std::size_t target, const AttackBudget& budget,
                         std::size_t steps, double step_size) {
  if (budget.active != Norm::kLinf) throw ArgumentError("I-FGSM needs an l-infinity budget");
  budget.validate();
  if (steps == 0) throw ArgumentError("I-FGSM needs at least one step");
  if (!(step_size > 0.0)) throw ArgumentError("I-FGSM step size must be positive");
  detail::check_target(true_label, target, model.num_classes());
  Image current = image;
  for (std::size_t s = 0; s < steps; ++s) {
    current = with_values(image, detail::signed_step(model, image, current, target, step_size, budget));
  }
  return detail::finish(model, image, std::move(current), true_label, target, steps);
}

struct CwOptions {
  std::size_t steps = 100;
  double learning_rate = 0.1;
  double c = 1.0;       // weight of the squared-distance term
  double kappa = 0.0;   // required logit margin
};

// Gradient descent on c*||delta||^2 + margin(target) with the iterate kept in
// [0,1] and inside the l2 budget. Stops as soon as the target leads by kappa.
template <typename Real>
AdversarialExample cw(const BasicClassifier<Real>& model, const Image& image,
                      std::size_t true_label, std::size_t target, const AttackBudget& budget,
                      const CwOptions& opt = {}) {
  if (budget.active != Norm::kL2) throw ArgumentError("CW needs an l2 budget");
  budget.validate();
  if (opt.steps == 0) throw ArgumentError("CW needs at least one step");
  detail::check_target(true_label, target, model.num_classes());
  const auto x0 = image.values();
  const CwMarginLoss margin_loss{target, opt.kappa};
  std::vector<double> x(x0.begin(), x0.end());
  Image current = image;
  std::size_t used = 0;
  for (; used < opt.steps; ++used) {
    const auto lg = loss_and_input_grad(model, current, target, LossKind{margin_loss});
    const auto z = model.forward(current);
    const bool leads = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()) == target;
    if (leads && lg.loss <= -opt.kappa) break;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double grad = 2.0 * opt.c * (x[i] - x0[i]) + lg.grad[i];
      x[i] -= opt.learning_rate * grad;
    }
    project_to_budget(image, x, budget);
    current = with_values(image, x);
  }
  return detail::finish(model, image, std::move(current), true_label, target, used);
}

struct BpdaOptions {
  std::size_t rounds = 50;
  double learning_rate = 0.1;  // step = learning_rate * eps (linf) or * radius (l2)
  std::size_t eot_samples = 1;
  bool keep_trace = true;
};

struct BpdaRound {
  std::size_t round = 0;  // 1-based
  Image candidate;
};

struct BpdaResult {
  AdversarialExample example;
  std::vector<BpdaRound> trace;
};

// Attacks model(defense(x)): the forward pass runs through a fresh defense
// sample, the backward pass treats the defense as the identity, so the
// gradient at defense(x) is applied to x directly.
template <typename Real>
BpdaResult bpda(const BasicClassifier<Real>& model, const DefenseKind& defense, const Image& image,
                std::size_t true_label, std::size_t target, const AttackBudget& budget,
                const BpdaOptions& opt, Rng& rng) {
  budget.validate();
  if (opt.rounds == 0) throw ArgumentError("BPDA needs at least one round");
  if (opt.eot_samples == 0) throw ArgumentError("BPDA needs at least one defense sample per round");
  if (!(opt.learning_rate > 0.0)) throw ArgumentError("BPDA learning rate must be positive");
  detail::check_target(true_label, target, model.num_classes());
  validate(defense);

  BpdaResult result;
  Image current = image;
  const double radius = l2_metric_to_unit_radius(budget.l2_eps, image.size());
  for (std::size_t r = 1; r <= opt.rounds; ++r) {
    std::vector<double> g(image.size(), 0.0);
    for (std::size_t e = 0; e < opt.eot_samples; ++e) {
      const Image defended = defend(current, defense, rng);
      const auto ge = loss_and_input_grad(model, defended, target, CrossEntropyLoss{}).grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += ge[i];
    }
    std::vector<double> next(current.values().begin(), current.values().end());
    if (budget.active == Norm::kLinf) {
      const double step = opt.learning_rate * budget.linf_eps;
      for (std::size_t i = 0; i < next.size(); ++i) next[i] -= step * detail::sign(g[i]);
    } else {
      double norm2 = 0.0;
      for (double v : g) norm2 += v * v;
      if (norm2 > 0.0) {
        const double step = opt.learning_rate * radius / std::sqrt(norm2);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] -= step * g[i];
      }
    }
    project_to_budget(image, next, budget);
    current = with_values(image, std::move(next));
    if (opt.keep_trace) result.trace.push_back({r, current});
  }
  result.example = detail::finish(model, image, std::move(current), true_label, target, opt.rounds);
  return result;
}

}  // namespace satdefense
