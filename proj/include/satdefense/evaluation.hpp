#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "satdefense/attacks.hpp"
#include "satdefense/errors.hpp"
#include "satdefense/image.hpp"
#include "satdefense/metrics.hpp"
#include "satdefense/model.hpp"
#include "satdefense/rng.hpp"
#include "satdefense/transform.hpp"

namespace satdefense {

enum class AttackFamily { kNone, kFgsm, kIfgsm, kCw, kBpda };

struct AttackConfig {
  AttackFamily family = AttackFamily::kNone;
  AttackBudget budget;
  std::size_t ifgsm_steps = 10;
  double ifgsm_step_size = 0.0075;
  CwOptions cw;
  BpdaOptions bpda;

  std::string id() const {
    switch (family) {
      case AttackFamily::kNone: return "none";
      case AttackFamily::kFgsm: return "fgsm(eps=" + format_compact(budget.linf_eps) + ")";
      case AttackFamily::kIfgsm:
        return "ifgsm(eps=" + format_compact(budget.linf_eps) +
               ",steps=" + std::to_string(ifgsm_steps) + ")";
      case AttackFamily::kCw:
        return "cw(l2=" + format_compact(budget.l2_eps) + ",steps=" + std::to_string(cw.steps) + ")";
      case AttackFamily::kBpda:
        return std::string("bpda(") +
               (budget.active == Norm::kLinf ? "linf=" + format_compact(budget.linf_eps)
                                             : "l2=" + format_compact(budget.l2_eps)) +
               ",rounds=" + std::to_string(bpda.rounds) + ")";
    }
    return "unknown";
  }
};

struct EvalConfig {
  std::size_t samples = 100;
  std::uint64_t seed = 1;
  std::size_t repeats = 1;  // defended predictions per image; majority vote when > 1
  std::size_t workers = 1;

  void validate() const {
    if (samples == 0) throw ArgumentError("evaluation needs at least one sample");
    if (repeats == 0) throw ArgumentError("repeats must be at least 1");
  }
};

struct RoundStat {
  std::size_t round = 0;
  double acc = 0.0;
  double asr = 0.0;
};

struct EvalRecord {
  std::string defense_id;
  std::string attack_id;
  double acc = 0.0;
  double asr = 0.0;
  std::vector<RoundStat> series;  // BPDA only, rounds 1..R
  RoundStat round0;               // BPDA only, unperturbed candidates
};

// RNG stream tags; every sample and cell draws from its own stream so results
// do not depend on the worker count.
namespace stream {
inline constexpr std::uint64_t kTarget = 1;
inline constexpr std::uint64_t kClassify = 2;
inline constexpr std::uint64_t kAttack = 3;
inline constexpr std::uint64_t kSweep = 4;
}  // namespace stream

// Runs fn(0..n-1) on up to `workers` threads. The first exception is rethrown.
inline void parallel_for(std::size_t n, std::size_t workers,
                         const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// First `count` samples, in dataset order, that the undefended model gets right.
template <typename Real>
Dataset curate_correct(const BasicClassifier<Real>& model, const Dataset& data, std::size_t count) {
  std::vector<LabeledSample> kept;
  for (const auto& s : data) {
    if (kept.size() == count) break;
    if (model.predict(s.image) == s.label) kept.push_back(s);
  }
  if (kept.empty()) throw ArgumentError("model classifies no sample of '" + data.name() + "' correctly");
  return Dataset(data.name() + "/curated", data.num_classes(), std::move(kept));
}

// Label of model(defense(image)); majority over `repeats` draws, ties to the
// smallest label.
template <typename Real>
std::size_t defended_predict(const BasicClassifier<Real>& model, const Image& image,
                             const DefenseKind& defense, std::size_t repeats, Rng& rng) {
  if (repeats <= 1 || !is_randomized(defense)) return model.predict(defend(image, defense, rng));
  std::vector<std::size_t> votes(model.num_classes(), 0);
  for (std::size_t r = 0; r < repeats; ++r) ++votes[model.predict(defend(image, defense, rng))];
  return static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

namespace detail {

inline Rng classify_rng(const EvalConfig& cfg, std::size_t sample, std::size_t round) {
  return Rng(derive_seed(cfg.seed, stream::kClassify, sample, round));
}

struct Outcome {
  bool correct = false;
  bool hit = false;
};

inline RoundStat tally(std::size_t round, const std::vector<Outcome>& outcomes) {
  std::size_t correct = 0;
  std::size_t hits = 0;
  for (const auto& o : outcomes) {
    correct += o.correct ? 1 : 0;
    hits += o.hit ? 1 : 0;
  }
  const auto n = static_cast<double>(outcomes.size());
  return {round, static_cast<double>(correct) / n, static_cast<double>(hits) / n};
}

inline std::size_t sample_target(const EvalConfig& cfg, std::size_t sample, std::size_t label,
                                 std::size_t classes) {
  Rng rng(derive_seed(cfg.seed, stream::kTarget, sample));
  return draw_target(label, classes, rng);
}

inline std::size_t eval_count(const EvalConfig& cfg, const Dataset& data) {
  cfg.validate();
  return std::min(cfg.samples, data.size());
}

}  // namespace detail

// Fraction of (the first cfg.samples of) `data` classified correctly after the
// defense. asr is 0 by definition.
template <typename Real>
EvalRecord eval_clean(const BasicClassifier<Real>& model, const Dataset& data,
                      const DefenseKind& defense, const EvalConfig& cfg) {
  validate(defense);
  const std::size_t n = detail::eval_count(cfg, data);
  std::vector<detail::Outcome> out(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    Rng rng = detail::classify_rng(cfg, i, 0);
    out[i].correct = defended_predict(model, data[i].image, defense, cfg.repeats, rng) == data[i].label;
  });
  const RoundStat st = detail::tally(0, out);
  return {defense_id(defense), "none", st.acc, 0.0, {}, {}};
}

// Final perturbed image for one sample. Standard attacks see the bare model,
// BPDA attacks through the defense.
template <typename Real>
Image generate_adversarial(const BasicClassifier<Real>& model, const DefenseKind& defense,
                           const AttackConfig& attack, const EvalConfig& cfg, std::size_t sample,
                           const Image& image, std::size_t label, std::size_t target,
                           BpdaResult* bpda_out = nullptr) {
  switch (attack.family) {
    case AttackFamily::kNone: return image;
    case AttackFamily::kFgsm: return fgsm(model, image, label, target, attack.budget).perturbed;
    case AttackFamily::kIfgsm:
      return ifgsm(model, image, label, target, attack.budget, attack.ifgsm_steps,
                   attack.ifgsm_step_size).perturbed;
    case AttackFamily::kCw: return cw(model, image, label, target, attack.budget, attack.cw).perturbed;
    case AttackFamily::kBpda: {
      Rng rng(derive_seed(cfg.seed, stream::kAttack, sample));
      BpdaResult r = bpda(model, defense, image, label, target, attack.budget, attack.bpda, rng);
      Image out = r.example.perturbed;
      if (bpda_out) *bpda_out = std::move(r);
      return out;
    }
  }
  throw ArgumentError("unknown attack family");
}

// Targeted attack per sample, then classification of the defended example.
template <typename Real>
EvalRecord eval_attack(const BasicClassifier<Real>& model, const Dataset& data,
                       const DefenseKind& defense, const AttackConfig& attack,
                       const EvalConfig& cfg) {
  validate(defense);
  const std::size_t n = detail::eval_count(cfg, data);
  const std::size_t final_round = attack.family == AttackFamily::kBpda ? attack.bpda.rounds : 0;
  AttackConfig quiet = attack;
  quiet.bpda.keep_trace = false;
  std::vector<detail::Outcome> out(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    const auto& s = data[i];
    const std::size_t target = detail::sample_target(cfg, i, s.label, model.num_classes());
    const Image ae = generate_adversarial(model, defense, quiet, cfg, i, s.image, s.label, target);
    Rng rng = detail::classify_rng(cfg, i, final_round);
    const std::size_t pred = defended_predict(model, ae, defense, cfg.repeats, rng);
    out[i] = {pred == s.label, pred == target};
  });
  const RoundStat st = detail::tally(final_round, out);
  return {defense_id(defense), attack.id(), st.acc, st.asr, {}, {}};
}

// BPDA with every intermediate candidate classified through a fresh defense
// draw. acc/asr of the record are those of the last round.
template <typename Real>
EvalRecord eval_bpda_rounds(const BasicClassifier<Real>& model, const Dataset& data,
                            const DefenseKind& defense, const AttackConfig& attack,
                            const EvalConfig& cfg) {
  if (attack.family != AttackFamily::kBpda) throw ArgumentError("per-round curves need a BPDA attack");
  validate(defense);
  const std::size_t n = detail::eval_count(cfg, data);
  const std::size_t rounds = attack.bpda.rounds;
  AttackConfig traced = attack;
  traced.bpda.keep_trace = true;
  // outcomes[r][i], r = 0 is the unperturbed image.
  std::vector<std::vector<detail::Outcome>> outcomes(rounds + 1, std::vector<detail::Outcome>(n));
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    const auto& s = data[i];
    const std::size_t target = detail::sample_target(cfg, i, s.label, model.num_classes());
    BpdaResult result;
    generate_adversarial(model, defense, traced, cfg, i, s.image, s.label, target, &result);
    auto classify = [&](const Image& img, std::size_t round) {
      Rng rng = detail::classify_rng(cfg, i, round);
      const std::size_t pred = defended_predict(model, img, defense, cfg.repeats, rng);
      outcomes[round][i] = {pred == s.label, pred == target};
    };
    classify(s.image, 0);
    for (const auto& step : result.trace) classify(step.candidate, step.round);
  });
  EvalRecord rec{defense_id(defense), attack.id(), 0.0, 0.0, {}, detail::tally(0, outcomes[0])};
  for (std::size_t r = 1; r <= rounds; ++r) rec.series.push_back(detail::tally(r, outcomes[r]));
  rec.acc = rec.series.back().acc;
  rec.asr = rec.series.back().asr;
  return rec;
}

// ---------------------------------------------------------------------------
// Sweep over SAT limits

inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count == 0) throw ArgumentError("linspace needs at least one value");
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    v[i] = count == 1 ? lo
                      : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return v;
}

struct SweepSpec {
  std::vector<double> translation;
  std::vector<double> scaling;
  std::vector<double> rotation;

  static SweepSpec with_points(std::size_t points) {
    return {linspace(0.01, 0.5, points), linspace(0.01, 0.5, points), linspace(0.0, 40.0, points)};
  }
  static SweepSpec coarse() { return with_points(5); }
  static SweepSpec full() { return with_points(11); }

  std::size_t cell_count() const { return translation.size() * scaling.size() * rotation.size(); }

  // Cells are ordered T-major, then S, then R.
  SatParams cell(std::size_t k) const {
    const std::size_t r = k % rotation.size();
    const std::size_t s = (k / rotation.size()) % scaling.size();
    const std::size_t t = k / (rotation.size() * scaling.size());
    return {translation.at(t), scaling.at(s), rotation.at(r)};
  }
};

struct SweepCell {
  SatParams params;
  double acc = 0.0;
  double l2 = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;  // from the mean MSE of the cell
};

// Mean clean accuracy and distortion of SAT for every cell, one fresh draw per
// image and cell.
template <typename Real>
std::vector<SweepCell> sweep(const BasicClassifier<Real>& model, const Dataset& data,
                             const SweepSpec& spec, const EvalConfig& cfg,
                             ScaleInterpolation interp = ScaleInterpolation::kBilinear) {
  const std::size_t n = detail::eval_count(cfg, data);
  std::vector<SweepCell> cells(spec.cell_count());
  for (std::size_t k = 0; k < cells.size(); ++k) spec.cell(k).validate();
  parallel_for(cells.size(), cfg.workers, [&](std::size_t k) {
    const SatParams p = spec.cell(k);
    std::size_t correct = 0;
    double l2 = 0.0, ssim = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(derive_seed(cfg.seed, stream::kSweep, k, i));
      const Image& x = data[i].image;
      const Image y = sat_apply(x, sat_draw(p, rng), interp);
      correct += model.predict(y) == data[i].label ? 1 : 0;
      l2 += l2_distance(x, y);
      ssim += ssim_global(x, y);
      sq += mse(x, y);
    }
    const auto dn = static_cast<double>(n);
    cells[k] = {p, static_cast<double>(correct) / dn, l2 / dn, ssim / dn, psnr_from_mse(sq / dn)};
  });
  return cells;
}

// Cells with acc >= floor_ratio * reference_acc that no other such cell beats
// on both accuracy and l2 distortion.
inline std::vector<SweepCell> pareto(const std::vector<SweepCell>& cells, double floor_ratio,
                                     double reference_acc) {
  const double floor = floor_ratio * reference_acc;
  std::vector<SweepCell> eligible;
  for (const auto& c : cells) {
    if (c.acc >= floor) eligible.push_back(c);
  }
  std::vector<SweepCell> front;
  for (const auto& c : eligible) {
    const bool dominated = std::any_of(eligible.begin(), eligible.end(), [&](const SweepCell& o) {
      return o.acc >= c.acc && o.l2 >= c.l2 && (o.acc > c.acc || o.l2 > c.l2);
    });
    if (!dominated) front.push_back(c);
  }
  return front;
}

struct Table1Row {
  std::string defense_id;
  double l2 = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;  // from the mean MSE over the images
  double acc = 0.0;
};

// Mean distortion between originals and defended images plus defended clean
// accuracy for each defense.
template <typename Real>
std::vector<Table1Row> table1_analogue(const BasicClassifier<Real>& model, const Dataset& data,
                                       const std::vector<DefenseKind>& defenses,
                                       const EvalConfig& cfg) {
  const std::size_t n = detail::eval_count(cfg, data);
  std::vector<Table1Row> rows;
  for (const auto& defense : defenses) {
    validate(defense);
    std::vector<MetricReport> reports(n);
    std::vector<detail::Outcome> out(n);
    parallel_for(n, cfg.workers, [&](std::size_t i) {
      Rng rng = detail::classify_rng(cfg, i, 0);
      const Image& x = data[i].image;
      const Image y = defend(x, defense, rng);
      reports[i] = metric_report(x, y);
      out[i].correct = model.predict(y) == data[i].label;
    });
    Table1Row row{defense_id(defense), 0.0, 0.0, 0.0, detail::tally(0, out).acc};
    double sq = 0.0;
    for (const auto& r : reports) {
      row.l2 += r.l2;
      row.ssim += r.ssim;
      sq += r.mse;
    }
    const auto dn = static_cast<double>(n);
    row.l2 /= dn;
    row.ssim /= dn;
    row.psnr = psnr_from_mse(sq / dn);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV reports. Fixed column order, six decimals, PSNR infinity as "inf".

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline std::string sweep_rows(const std::vector<SweepCell>& cells) {
  std::string out = "T,S,R,acc,l2,ssim,psnr\n";
  for (const auto& c : cells) {
    out += format_compact(c.params.translation) + "," + format_compact(c.params.scaling) + "," +
           format_compact(c.params.rotation) + "," + format_metric(c.acc) + "," +
           format_metric(c.l2) + "," + format_metric(c.ssim) + "," + format_metric(c.psnr) + "\n";
  }
  return out;
}

}  // namespace detail

inline std::string eval_csv(const std::vector<EvalRecord>& records) {
  std::string out = "defense,attack,acc,asr\n";
  for (const auto& r : records) {
    out += detail::csv_field(r.defense_id) + "," + detail::csv_field(r.attack_id) + "," +
           format_metric(r.acc) + "," + format_metric(r.asr) + "\n";
  }
  return out;
}

inline std::string bpda_rounds_csv(const EvalRecord& record) {
  std::string out = "round,acc,asr\n";
  for (const auto& s : record.series) {
    out += std::to_string(s.round) + "," + format_metric(s.acc) + "," + format_metric(s.asr) + "\n";
  }
  return out;
}

inline std::string sweep_csv(const std::vector<SweepCell>& cells) { return detail::sweep_rows(cells); }

inline std::string pareto_csv(const std::vector<SweepCell>& cells) { return detail::sweep_rows(cells); }

inline std::string table1_csv(const std::vector<Table1Row>& rows) {
  std::string out = "defense,l2,ssim,psnr,acc\n";
  for (const auto& r : rows) {
    out += detail::csv_field(r.defense_id) + "," + format_metric(r.l2) + "," +
           format_metric(r.ssim) + "," + format_metric(r.psnr) + "," + format_metric(r.acc) + "\n";
  }
  return out;
}

}  // namespace satdefense
