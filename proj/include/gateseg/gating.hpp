#pragma once

// Existence head over pooled prompt features, BCE supervision, threshold
// gating of predicted mask sequences and the threshold sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gateseg/error.hpp"
#include "gateseg/exact_sum.hpp"
#include "gateseg/features.hpp"
#include "gateseg/mask.hpp"
#include "gateseg/metrics.hpp"
#include "gateseg/query.hpp"
#include "gateseg/random.hpp"

namespace gateseg {

/// Mean over the token and frame axes.
inline std::vector<double> pool_features(const FeatureTensor& f) {
  std::vector<double> out(f.dim(), 0.0);
  const auto& v = f.values();
  const std::size_t slices = f.tokens() * f.frames();
  for (std::size_t s = 0; s < slices; ++s) {
    const double* row = v.data() + s * f.dim();
    for (std::size_t d = 0; d < f.dim(); ++d) out[d] += row[d];
  }
  for (auto& x : out) x /= static_cast<double>(slices);
  return out;
}

/// pool -> dense(dim -> hidden) -> relu -> dense(hidden -> 1) -> sigmoid.
struct ExistenceHead {
  std::size_t hidden = 0;
  std::size_t dim = 0;
  std::vector<double> w1; ///< hidden x dim, row-major
  std::vector<double> b1; ///< hidden
  std::vector<double> w2; ///< hidden
  double b2 = 0.0;

  static ExistenceHead zeros(std::size_t dim, std::size_t hidden) {
    if (dim == 0 || hidden == 0) throw InputError("existence head needs dim >= 1 and hidden >= 1");
    return ExistenceHead{hidden, dim, std::vector<double>(hidden * dim, 0.0), std::vector<double>(hidden, 0.0),
                         std::vector<double>(hidden, 0.0), 0.0};
  }

  /// Uniform in +-1/sqrt(fan_in) per layer.
  static ExistenceHead init(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
    auto head = zeros(dim, hidden);
    Rng rng(seed);
    const double a1 = 1.0 / std::sqrt(static_cast<double>(dim));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto& x : head.w1) x = rng.uniform(-a1, a1);
    for (auto& x : head.b1) x = rng.uniform(-a1, a1);
    for (auto& x : head.w2) x = rng.uniform(-a2, a2);
    head.b2 = rng.uniform(-a2, a2);
    return head;
  }

  void validate() const {
    if (hidden == 0 || dim == 0) throw InputError("existence head needs dim >= 1 and hidden >= 1");
    if (w1.size() != hidden * dim || b1.size() != hidden || w2.size() != hidden) {
      throw InputError("existence head parameter shapes do not match hidden/dim");
    }
    auto finite = [](double x) { return std::isfinite(x); };
    if (!std::all_of(w1.begin(), w1.end(), finite) || !std::all_of(b1.begin(), b1.end(), finite) ||
        !std::all_of(w2.begin(), w2.end(), finite) || !std::isfinite(b2)) {
      throw InputError("existence head has non-finite parameters");
    }
  }

  friend bool operator==(const ExistenceHead&, const ExistenceHead&) = default;
};

inline double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct HeadOutput {
  double z = 0.0;
  double p = 0.5;
};

namespace detail {

struct HeadActivations {
  std::vector<double> pre;    // w1 . pool + b1
  std::vector<double> hidden; // relu(pre)
  double z = 0.0;
};

inline HeadActivations run_head(const ExistenceHead& head, std::span<const double> pooled) {
  if (pooled.size() != head.dim) {
    throw InputError("existence head expects dim " + std::to_string(head.dim) + ", got " +
                     std::to_string(pooled.size()));
  }
  HeadActivations a;
  a.pre.resize(head.hidden);
  a.hidden.resize(head.hidden);
  double z = head.b2;
  for (std::size_t h = 0; h < head.hidden; ++h) {
    const double* w = head.w1.data() + h * head.dim;
    double s = head.b1[h];
    for (std::size_t d = 0; d < head.dim; ++d) s += w[d] * pooled[d];
    a.pre[h] = s;
    a.hidden[h] = s > 0.0 ? s : 0.0;
    z += head.w2[h] * a.hidden[h];
  }
  a.z = z;
  return a;
}

} // namespace detail

inline HeadOutput forward_pooled(const ExistenceHead& head, std::span<const double> pooled) {
  const auto a = detail::run_head(head, pooled);
  return {a.z, sigmoid(a.z)};
}

inline HeadOutput forward(const ExistenceHead& head, const FeatureTensor& f) {
  const auto pooled = pool_features(f);
  return forward_pooled(head, pooled);
}

/// -[y log p + (1-y) log(1-p)] with p = sigmoid(z), evaluated without
/// forming p: max(z, 0) - z y + log1p(exp(-|z|)).
inline double bce_with_logit(double z, int label) {
  if (label != 0 && label != 1) throw InputError("bce: label must be 0 or 1");
  return std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
}

inline double bce_loss(double p, int label) {
  if (label != 0 && label != 1) throw InputError("bce: label must be 0 or 1");
  return label == 1 ? -std::log(p) : -std::log1p(-p);
}

/// Parameter-shaped record, also used for finite-difference estimates.
struct HeadGradients {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;

  static HeadGradients zeros_like(const ExistenceHead& head) {
    return {std::vector<double>(head.w1.size(), 0.0), std::vector<double>(head.b1.size(), 0.0),
            std::vector<double>(head.w2.size(), 0.0), 0.0};
  }

  HeadGradients& operator+=(const HeadGradients& o) {
    for (std::size_t i = 0; i < w1.size(); ++i) w1[i] += o.w1[i];
    for (std::size_t i = 0; i < b1.size(); ++i) b1[i] += o.b1[i];
    for (std::size_t i = 0; i < w2.size(); ++i) w2[i] += o.w2[i];
    b2 += o.b2;
    return *this;
  }

  friend bool operator==(const HeadGradients&, const HeadGradients&) = default;
};

struct LossAndGradients {
  double loss = 0.0;
  HeadGradients grads;
};

namespace detail {

// Accumulates d loss / d params into `g` and returns the loss.
inline double accumulate_gradients(const ExistenceHead& head, std::span<const double> pooled, int label,
                                   HeadGradients& g) {
  const auto a = run_head(head, pooled);
  const double loss = bce_with_logit(a.z, label);
  const double dz = sigmoid(a.z) - static_cast<double>(label);
  g.b2 += dz;
  for (std::size_t h = 0; h < head.hidden; ++h) {
    g.w2[h] += dz * a.hidden[h];
    // relu subgradient at 0 taken as 0
    const double dpre = a.pre[h] > 0.0 ? dz * head.w2[h] : 0.0;
    if (dpre == 0.0) continue;
    g.b1[h] += dpre;
    double* row = g.w1.data() + h * head.dim;
    for (std::size_t d = 0; d < head.dim; ++d) row[d] += dpre * pooled[d];
  }
  return loss;
}

} // namespace detail

inline LossAndGradients gradients(const ExistenceHead& head, const FeatureTensor& f, int label) {
  LossAndGradients out{0.0, HeadGradients::zeros_like(head)};
  const auto pooled = pool_features(f);
  out.loss = detail::accumulate_gradients(head, pooled, label, out.grads);
  return out;
}

struct LabeledTensor {
  FeatureTensor features;
  int label = 0;
};

struct TrainConfig {
  double lr = 0.1;
  std::size_t epochs = 500;
  std::uint64_t seed = 0; ///< initialization seed, recorded with the trained head
};

struct TrainResult {
  ExistenceHead head;
  std::vector<double> loss_history; ///< mean BCE at the start of each epoch
  double final_loss = 0.0;          ///< mean BCE after the last update
};

/// Full-batch gradient descent on the mean BCE. Deterministic.
inline TrainResult train(ExistenceHead head, std::span<const LabeledTensor> dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw InputError("train: empty dataset");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw InputError("train: learning rate must be positive");
  head.validate();

  std::vector<std::vector<double>> pooled;
  pooled.reserve(dataset.size());
  for (const auto& s : dataset) {
    if (s.label != 0 && s.label != 1) throw InputError("train: label must be 0 or 1");
    pooled.push_back(pool_features(s.features));
    if (pooled.back().size() != head.dim) throw InputError("train: feature dim does not match head");
  }
  const double inv_n = 1.0 / static_cast<double>(dataset.size());

  auto mean_loss = [&](const ExistenceHead& h) {
    double total = 0.0;
    for (std::size_t i = 0; i < pooled.size(); ++i) {
      total += bce_with_logit(detail::run_head(h, pooled[i]).z, dataset[i].label);
    }
    return total * inv_n;
  };

  TrainResult result{std::move(head), {}, 0.0};
  result.loss_history.reserve(cfg.epochs);
  auto& h = result.head;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto g = HeadGradients::zeros_like(h);
    double total = 0.0;
    for (std::size_t i = 0; i < pooled.size(); ++i) {
      total += detail::accumulate_gradients(h, pooled[i], dataset[i].label, g);
    }
    const double loss = total * inv_n;
    if (!std::isfinite(loss)) throw TrainingError(epoch, "non-finite loss");
    result.loss_history.push_back(loss);
    const double step = cfg.lr * inv_n;
    for (std::size_t i = 0; i < h.w1.size(); ++i) h.w1[i] -= step * g.w1[i];
    for (std::size_t i = 0; i < h.b1.size(); ++i) h.b1[i] -= step * g.b1[i];
    for (std::size_t i = 0; i < h.w2.size(); ++i) h.w2[i] -= step * g.w2[i];
    h.b2 -= step * g.b2;
  }
  result.final_loss = mean_loss(h);
  if (!std::isfinite(result.final_loss)) throw TrainingError(cfg.epochs, "non-finite loss");
  return result;
}

struct GatingConfig {
  double tau = 0.8;

  explicit GatingConfig(double t = 0.8) : tau(t) {
    if (!(t >= 0.0 && t <= 1.0)) throw InputError("gating threshold must lie in [0,1]");
  }
};

/// p < tau suppresses the whole sequence; p == tau passes through.
inline MaskSequence apply_gate(double p, const GatingConfig& cfg, const MaskSequence& pred) {
  if (p < cfg.tau) return MaskSequence::zeros(pred.width(), pred.height(), pred.length());
  return pred;
}

struct SweepPoint {
  double tau = 0.0;
  AggregateReport report;
};

struct SweepResult {
  std::vector<SweepPoint> grid; ///< ascending tau

  /// Highest Final; earliest tau wins ties. Empty when Final is undefined everywhere.
  std::optional<SweepPoint> best() const {
    std::optional<SweepPoint> out;
    for (const auto& pt : grid) {
      if (!pt.report.final) continue;
      if (!out || *pt.report.final > *out->report.final) out = pt;
    }
    return out;
  }
};

inline std::vector<double> checked_grid(std::span<const double> grid) {
  if (grid.empty()) throw InputError("sweep: empty threshold grid");
  std::vector<double> taus(grid.begin(), grid.end());
  for (double t : taus) static_cast<void>(GatingConfig{t});
  std::stable_sort(taus.begin(), taus.end());
  return taus;
}

inline void require_probabilities(std::span<const QueryRecord> queries) {
  std::string missing;
  for (const auto& q : queries) {
    if (!q.existence_prob) missing += (missing.empty() ? "" : ", ") + q.query_id;
  }
  if (!missing.empty()) throw InputError("missing existence probability for queries: " + missing);
}

/// A query's scores in its two reachable states: as predicted, and gated to
/// an empty prediction.
struct SweepEvent {
  double p = 0.0;
  QueryMetrics open;
  QueryMetrics gated;
};

inline SweepEvent make_sweep_event(const QueryRecord& q, int radius, EmptyGtPolicy policy) {
  if (!q.existence_prob) throw InputError("missing existence probability for queries: " + q.query_id);
  SweepEvent e{*q.existence_prob, score_query(q, radius, policy), {}};
  if (e.open.pred_present) {
    const QueryRecord suppressed{q.query_id, q.sequence_id, {}, q.gt,
                                 MaskSequence::zeros(q.pred.width(), q.pred.height(), q.pred.length()),
                                 std::nullopt, std::nullopt};
    e.gated = score_query(suppressed, radius, policy);
  } else {
    e.gated = e.open; // gating an empty prediction changes nothing
  }
  return e;
}

/// Walks the grid in ascending order while queries cross from the open to the
/// gated state in order of probability. Counts and exact J/F sums are updated
/// per crossing, so the cost after sorting is O(queries + grid).
inline SweepResult sweep_events(std::vector<SweepEvent> events, std::span<const double> grid,
                                EmptyGtPolicy policy) {
  if (events.empty()) throw InputError("sweep: empty query list");
  const auto taus = checked_grid(grid);
  std::stable_sort(events.begin(), events.end(),
                   [](const SweepEvent& a, const SweepEvent& b) { return a.p < b.p; });

  ConfusionCounts counts;
  ExactSum j_sum, f_sum;
  std::size_t included = 0;
  for (const auto& e : events) {
    counts.record(e.open.gt_present, e.open.pred_present);
    if (e.open.j_mean) {
      j_sum.add(*e.open.j_mean);
      f_sum.add(*e.open.f_mean);
      ++included;
    }
  }

  SweepResult result;
  result.grid.reserve(taus.size());
  std::size_t next = 0;
  for (double tau : taus) {
    for (; next < events.size() && events[next].p < tau; ++next) {
      const auto& e = events[next];
      counts.forget(e.open.gt_present, e.open.pred_present);
      counts.record(e.gated.gt_present, e.gated.pred_present);
      if (e.open.j_mean) {
        j_sum.subtract(*e.open.j_mean).add(*e.gated.j_mean);
        f_sum.subtract(*e.open.f_mean).add(*e.gated.f_mean);
      }
    }
    result.grid.push_back({tau, make_report(counts, j_sum, f_sum, included, policy)});
  }
  return result;
}

inline SweepResult sweep(std::span<const QueryRecord> queries, std::span<const double> grid, int radius,
                         EmptyGtPolicy policy) {
  if (queries.empty()) throw InputError("sweep: empty query list");
  require_probabilities(queries);
  checked_grid(grid);
  std::vector<SweepEvent> events;
  events.reserve(queries.size());
  for (const auto& q : queries) events.push_back(make_sweep_event(q, radius, policy));
  return sweep_events(std::move(events), grid, policy);
}

} // namespace gateseg
