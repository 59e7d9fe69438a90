#pragma once

// Seeded synthetic scenarios and brute-force oracles. The oracles are written
// against the definitions directly and share no kernels with metrics.hpp or
// the incremental parts of gating.hpp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gateseg/error.hpp"
#include "gateseg/features.hpp"
#include "gateseg/gating.hpp"
#include "gateseg/mask.hpp"
#include "gateseg/metrics.hpp"
#include "gateseg/query.hpp"
#include "gateseg/random.hpp"

namespace gateseg::synth {

enum class ShapeFamily { rectangle, ellipse };

inline std::string_view to_string(ShapeFamily s) noexcept {
  return s == ShapeFamily::ellipse ? "ellipse" : "rectangle";
}

struct ScenarioConfig {
  std::uint64_t seed = 0;
  std::size_t num_queries = 100;
  double frac_absent = 0.3;
  std::size_t width = 64;
  std::size_t height = 48;
  std::size_t frames = 6;
  ShapeFamily shape = ShapeFamily::ellipse;
  std::size_t max_objects = 2; ///< objects per present query, unioned into the GT

  // prediction noise
  int shift_px = 2;               ///< per-query translation drawn from [-shift_px, shift_px]
  int morph_px = 1;               ///< per-query dilate/erode steps drawn from [-morph_px, morph_px]
  double false_positive_rate = 0.3; ///< absent-GT queries that receive a hallucinated mask
  double miss_rate = 0.0;           ///< present-GT queries whose prediction is empty

  // existence probability model, clipped to [0,1]
  double mu_present = 0.9;
  double sigma_present = 0.05;
  double mu_absent = 0.1;
  double sigma_absent = 0.05;

  // feature model: label-dependent Gaussian clusters
  std::size_t tokens = 4;
  std::size_t feature_frames = 2;
  std::size_t feature_dim = 16;
  double feature_separation = 1.0;
  double feature_noise = 1.0;

  void validate() const {
    auto rate = [](double r, const char* name) {
      if (!(r >= 0.0 && r <= 1.0)) throw InputError(std::string("scenario: ") + name + " must lie in [0,1]");
    };
    rate(frac_absent, "frac_absent");
    rate(false_positive_rate, "false_positive_rate");
    rate(miss_rate, "miss_rate");
    if (width < 8 || height < 8) throw InputError("scenario: frame dimensions must be at least 8x8");
    if (frames == 0 || num_queries == 0) throw InputError("scenario: frames and num_queries must be positive");
    if (max_objects == 0) throw InputError("scenario: max_objects must be positive");
    if (shift_px < 0 || morph_px < 0) throw InputError("scenario: noise magnitudes must be non-negative");
    if (!(sigma_present >= 0.0) || !(sigma_absent >= 0.0)) throw InputError("scenario: negative sigma");
    if (tokens == 0 || feature_frames == 0 || feature_dim == 0) throw InputError("scenario: empty feature shape");
  }
};

struct Scenario {
  ScenarioConfig config;
  std::string rng_algorithm = "mt19937_64";
  std::vector<QueryRecord> queries;
  std::vector<bool> present;      ///< ground-truth presence label per query
  std::vector<bool> hallucinated; ///< absent-GT queries given a false-positive mask
};

/// Translate with zero fill, then dilate (delta > 0) or erode (delta < 0) with
/// the 3x3 square iterated |delta| times, i.e. one (2|delta|+1) square.
/// Pixels outside the image count as background.
inline Mask perturb_mask(const Mask& mask, long dx, long dy, int morph_delta) {
  const long w = static_cast<long>(mask.width()), h = static_cast<long>(mask.height());
  Mask out(mask.width(), mask.height());
  auto src = mask.bits();
  auto dst = out.bits();
  for (long y = 0; y < h; ++y) {
    const long sy = y - dy;
    if (sy < 0 || sy >= h) continue;
    const long x0 = std::max(0L, dx), x1 = std::min(w, w + dx);
    if (x0 >= x1) continue;
    std::copy_n(src.begin() + (sy * w + x0 - dx), x1 - x0, dst.begin() + (y * w + x0));
  }
  if (morph_delta == 0) return out;

  const long k = std::abs(morph_delta);
  const long full = 2 * k + 1;
  const bool dilate = morph_delta > 0;
  // Window counts along one axis; a window clipped by the border is never full.
  auto pass = [&](std::span<const std::uint8_t> in, std::span<std::uint8_t> res, long len, long lines,
                  long stride_along, long stride_across) {
    std::vector<long> prefix(static_cast<std::size_t>(len) + 1);
    for (long line = 0; line < lines; ++line) {
      const long base = line * stride_across;
      for (long i = 0; i < len; ++i) {
        prefix[static_cast<std::size_t>(i + 1)] = prefix[static_cast<std::size_t>(i)] + in[static_cast<std::size_t>(base + i * stride_along)];
      }
      for (long i = 0; i < len; ++i) {
        const long lo = std::max(0L, i - k), hi = std::min(len - 1, i + k);
        const long n = prefix[static_cast<std::size_t>(hi + 1)] - prefix[static_cast<std::size_t>(lo)];
        res[static_cast<std::size_t>(base + i * stride_along)] = dilate ? (n > 0) : (n == full);
      }
    }
  };
  Mask rows(mask.width(), mask.height());
  pass(out.bits(), rows.bits(), w, h, 1, w);
  Mask cols(mask.width(), mask.height());
  pass(rows.bits(), cols.bits(), h, w, w, 1);
  return cols;
}

namespace detail {

// One moving object rendered into every frame.
inline MaskSequence moving_object(Rng& rng, const ScenarioConfig& cfg) {
  const double w = static_cast<double>(cfg.width), h = static_cast<double>(cfg.height);
  const double rx = rng.uniform(0.08, 0.2) * w;
  const double ry = rng.uniform(0.08, 0.2) * h;
  const double cx = rng.uniform(0.2, 0.8) * w;
  const double cy = rng.uniform(0.2, 0.8) * h;
  const double vx = rng.uniform(-0.02, 0.02) * w;
  const double vy = rng.uniform(-0.02, 0.02) * h;
  std::vector<Mask> frames;
  frames.reserve(cfg.frames);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    const double ox = cx + vx * static_cast<double>(t);
    const double oy = cy + vy * static_cast<double>(t);
    Mask m(cfg.width, cfg.height);
    const long y0 = std::max(0L, static_cast<long>(std::floor(oy - ry)));
    const long y1 = std::min(static_cast<long>(cfg.height) - 1, static_cast<long>(std::ceil(oy + ry)));
    const long x0 = std::max(0L, static_cast<long>(std::floor(ox - rx)));
    const long x1 = std::min(static_cast<long>(cfg.width) - 1, static_cast<long>(std::ceil(ox + rx)));
    for (long y = y0; y <= y1; ++y) {
      for (long x = x0; x <= x1; ++x) {
        const double px = (static_cast<double>(x) + 0.5 - ox) / rx;
        const double py = (static_cast<double>(y) + 0.5 - oy) / ry;
        const bool inside = cfg.shape == ShapeFamily::ellipse ? px * px + py * py <= 1.0
                                                               : std::abs(px) <= 1.0 && std::abs(py) <= 1.0;
        if (inside) m.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
      }
    }
    // tiny radii can miss every pixel centre; keep the object visible at t = 0
    if (t == 0 && m.empty()) m.set(static_cast<std::size_t>(cx), static_cast<std::size_t>(cy));
    frames.push_back(std::move(m));
  }
  return MaskSequence(std::move(frames));
}

inline MaskSequence referred_objects(Rng& rng, const ScenarioConfig& cfg) {
  const auto count = static_cast<std::size_t>(rng.uniform_int(1, static_cast<long>(cfg.max_objects)));
  std::vector<MaskSequence> objects;
  for (std::size_t i = 0; i < count; ++i) objects.push_back(moving_object(rng, cfg));
  return union_sequences(objects);
}

inline double clipped_normal(Rng& rng, double mu, double sigma) {
  return std::clamp(rng.normal(mu, sigma), 0.0, 1.0);
}

inline std::string query_name(std::size_t i) {
  std::string digits = std::to_string(i);
  return "q" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

} // namespace detail

/// Generates queries one at a time, calling fn(query, present, hallucinated)
/// in order, so large scenarios need not be held in memory.
template <typename Fn>
void for_each_query(const ScenarioConfig& cfg, Fn&& fn) {
  cfg.validate();
  Rng rng(cfg.seed);

  std::vector<double> direction(cfg.feature_dim);
  for (auto& d : direction) d = rng.bernoulli(0.5) ? 1.0 : -1.0;

  for (std::size_t i = 0; i < cfg.num_queries; ++i) {
    const bool absent = rng.bernoulli(cfg.frac_absent);
    const auto empty = MaskSequence::zeros(cfg.width, cfg.height, cfg.frames);
    MaskSequence gt = absent ? empty : detail::referred_objects(rng, cfg);
    MaskSequence pred = empty;
    bool hallucinated = false;
    if (absent) {
      if (rng.bernoulli(cfg.false_positive_rate)) {
        pred = detail::referred_objects(rng, cfg);
        hallucinated = true;
      }
    } else if (!rng.bernoulli(cfg.miss_rate)) {
      const long dx = rng.uniform_int(-cfg.shift_px, cfg.shift_px);
      const long dy = rng.uniform_int(-cfg.shift_px, cfg.shift_px);
      const int delta = static_cast<int>(rng.uniform_int(-cfg.morph_px, cfg.morph_px));
      std::vector<Mask> frames;
      frames.reserve(cfg.frames);
      for (const auto& m : gt.frames()) frames.push_back(perturb_mask(m, dx, dy, delta));
      pred = MaskSequence(std::move(frames));
    }

    const double p = absent ? detail::clipped_normal(rng, cfg.mu_absent, cfg.sigma_absent)
                            : detail::clipped_normal(rng, cfg.mu_present, cfg.sigma_present);

    const double sign = absent ? -1.0 : 1.0;
    std::vector<double> values(cfg.tokens * cfg.feature_frames * cfg.feature_dim);
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double center = sign * cfg.feature_separation * direction[k % cfg.feature_dim];
      values[k] = rng.normal(center, cfg.feature_noise);
    }

    const std::string id = detail::query_name(i);
    fn(QueryRecord{id, "s" + id.substr(1), absent ? "the object that is not there" : "the moving object",
                   std::move(gt), std::move(pred), p,
                   FeatureTensor(cfg.tokens, cfg.feature_frames, cfg.feature_dim, std::move(values))},
       !absent, hallucinated);
  }
}

inline Scenario gen_scenario(const ScenarioConfig& cfg) {
  Scenario sc;
  sc.config = cfg;
  for_each_query(cfg, [&](QueryRecord&& q, bool present, bool hallucinated) {
    sc.queries.push_back(std::move(q));
    sc.present.push_back(present);
    sc.hallucinated.push_back(hallucinated);
  });
  return sc;
}

/// Named configurations used by the CLI and the acceptance suite.
inline ScenarioConfig preset(std::string_view name, std::uint64_t seed) {
  ScenarioConfig c;
  c.seed = seed;
  if (name == "separable") {
    c.num_queries = 200;
  } else if (name == "perfect") {
    c.num_queries = 50;
    c.shift_px = 0;
    c.morph_px = 0;
    c.false_positive_rate = 0.0;
  } else if (name == "overlap") {
    c.num_queries = 200;
    c.mu_present = 0.6;
    c.mu_absent = 0.4;
    c.sigma_present = 0.2;
    c.sigma_absent = 0.2;
    c.miss_rate = 0.05;
    c.feature_separation = 0.3;
  } else if (name == "sweep") {
    c.num_queries = 1000;
    c.width = 32;
    c.height = 24;
    c.frames = 4;
    c.mu_present = 0.65;
    c.mu_absent = 0.35;
    c.sigma_present = 0.2;
    c.sigma_absent = 0.2;
    c.miss_rate = 0.05;
  } else if (name == "throughput") {
    c.num_queries = 100;
    c.width = 640;
    c.height = 480;
    c.frames = 50;
    c.frac_absent = 0.2;
    c.shift_px = 3;
  } else {
    throw InputError("unknown scenario preset '" + std::string(name) + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Oracles

/// Boundary F by exact per-pixel nearest Euclidean distance. O(B_pred x B_gt).
inline double oracle_boundary_f(const Mask& pred, const Mask& gt, int radius) {
  struct Px {
    long x, y;
  };
  auto boundary = [](const Mask& m) {
    std::vector<Px> out;
    const long w = static_cast<long>(m.width()), h = static_cast<long>(m.height());
    auto fg = [&](long x, long y) {
      return x >= 0 && y >= 0 && x < w && y < h && m.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    };
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        if (fg(x, y) && (!fg(x - 1, y) || !fg(x + 1, y) || !fg(x, y - 1) || !fg(x, y + 1))) out.push_back({x, y});
      }
    }
    return out;
  };
  auto matched = [radius](const std::vector<Px>& from, const std::vector<Px>& to) {
    std::size_t n = 0;
    const long r2 = static_cast<long>(radius) * radius;
    for (const auto& a : from) {
      long best = std::numeric_limits<long>::max();
      for (const auto& b : to) best = std::min(best, (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y));
      if (best <= r2) ++n;
    }
    return n;
  };
  const auto pb = boundary(pred), gb = boundary(gt);
  if (pb.empty() && gb.empty()) return 1.0;
  if (pb.empty() || gb.empty()) return 0.0;
  const double precision = static_cast<double>(matched(pb, gb)) / static_cast<double>(pb.size());
  const double recall = static_cast<double>(matched(gb, pb)) / static_cast<double>(gb.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

/// Literal re-gating and full aggregation at every threshold.
inline SweepResult oracle_sweep(std::span<const QueryRecord> queries, std::span<const double> grid, int radius,
                                EmptyGtPolicy policy) {
  if (grid.empty()) throw InputError("oracle_sweep: empty threshold grid");
  for (const auto& q : queries) {
    if (!q.existence_prob) throw InputError("missing existence probability for queries: " + q.query_id);
  }
  std::vector<double> taus(grid.begin(), grid.end());
  std::sort(taus.begin(), taus.end());
  SweepResult out;
  for (double tau : taus) {
    const GatingConfig cfg(tau);
    std::vector<QueryRecord> gated;
    gated.reserve(queries.size());
    for (const auto& q : queries) {
      QueryRecord g = q;
      g.pred = apply_gate(*q.existence_prob, cfg, q.pred);
      gated.push_back(std::move(g));
    }
    out.grid.push_back({tau, aggregate(gated, radius, policy)});
  }
  return out;
}

/// Straight-line forward pass: naive pooling loop, explicit relu and sigmoid.
inline double oracle_logit(const ExistenceHead& head, const FeatureTensor& f) {
  std::vector<double> pooled(f.dim(), 0.0);
  for (std::size_t n = 0; n < f.tokens(); ++n) {
    for (std::size_t t = 0; t < f.frames(); ++t) {
      for (std::size_t d = 0; d < f.dim(); ++d) pooled[d] += f.at(n, t, d);
    }
  }
  for (auto& v : pooled) v /= static_cast<double>(f.tokens() * f.frames());
  double z = head.b2;
  for (std::size_t h = 0; h < head.hidden; ++h) {
    double a = head.b1[h];
    for (std::size_t d = 0; d < head.dim; ++d) a += head.w1[h * head.dim + d] * pooled[d];
    z += head.w2[h] * std::max(a, 0.0);
  }
  return z;
}

inline double oracle_loss(const ExistenceHead& head, const FeatureTensor& f, int label) {
  const double z = oracle_logit(head, f);
  // log(1 + e^-z) for label 1, log(1 + e^z) for label 0
  const double m = label == 1 ? -z : z;
  return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

/// Central differences of the loss with respect to every parameter.
inline HeadGradients finite_diff_grads(const ExistenceHead& head, const FeatureTensor& f, int label,
                                       double epsilon) {
  if (!(epsilon > 0.0)) throw InputError("finite_diff_grads: epsilon must be positive");
  ExistenceHead probe = head;
  auto central = [&](double& param) {
    const double saved = param;
    param = saved + epsilon;
    const double up = oracle_loss(probe, f, label);
    param = saved - epsilon;
    const double down = oracle_loss(probe, f, label);
    param = saved;
    return (up - down) / (2.0 * epsilon);
  };
  HeadGradients g;
  g.w1.resize(head.w1.size());
  g.b1.resize(head.b1.size());
  g.w2.resize(head.w2.size());
  for (std::size_t i = 0; i < g.w1.size(); ++i) g.w1[i] = central(probe.w1[i]);
  for (std::size_t i = 0; i < g.b1.size(); ++i) g.b1[i] = central(probe.b1[i]);
  for (std::size_t i = 0; i < g.w2.size(); ++i) g.w2[i] = central(probe.w2[i]);
  g.b2 = central(probe.b2);
  return g;
}

/// Direct recomputation of the dataset report with plain summation and the
/// brute-force boundary oracle. Agrees with aggregate() to rounding.
struct OracleReport {
  double j = 0.0, f = 0.0, jf = 0.0;
  std::optional<double> n_acc, t_acc, final;
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

inline OracleReport oracle_aggregate(std::span<const QueryRecord> queries, int radius, EmptyGtPolicy policy) {
  OracleReport r;
  double sj = 0.0, sf = 0.0;
  std::size_t included = 0;
  for (const auto& q : queries) {
    bool gt_any = false, pred_any = false;
    for (std::size_t t = 0; t < q.gt.length(); ++t) {
      gt_any = gt_any || q.gt[t].count() > 0;
      pred_any = pred_any || q.pred[t].count() > 0;
    }
    if (gt_any && pred_any) ++r.tp;
    if (gt_any && !pred_any) ++r.fn;
    if (!gt_any && pred_any) ++r.fp;
    if (!gt_any && !pred_any) ++r.tn;
    if (gt_any) {
      double qj = 0.0, qf = 0.0;
      for (std::size_t t = 0; t < q.gt.length(); ++t) {
        std::size_t inter = 0, uni = 0;
        for (std::size_t y = 0; y < q.gt.height(); ++y) {
          for (std::size_t x = 0; x < q.gt.width(); ++x) {
            const bool a = q.pred[t].at(x, y), b = q.gt[t].at(x, y);
            inter += a && b;
            uni += a || b;
          }
        }
        qj += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        qf += oracle_boundary_f(q.pred[t], q.gt[t], radius);
      }
      sj += qj / static_cast<double>(q.gt.length());
      sf += qf / static_cast<double>(q.gt.length());
      ++included;
    } else if (policy == EmptyGtPolicy::include_full_credit) {
      sj += pred_any ? 0.0 : 1.0;
      sf += pred_any ? 0.0 : 1.0;
      ++included;
    }
  }
  if (included == 0) throw MetricUndefined("oracle_aggregate: no query contributes to J/F");
  r.j = sj / static_cast<double>(included);
  r.f = sf / static_cast<double>(included);
  r.jf = (r.j + r.f) / 2.0;
  if (r.tn + r.fp > 0) r.n_acc = static_cast<double>(r.tn) / static_cast<double>(r.tn + r.fp);
  if (r.tp + r.fn > 0) r.t_acc = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  if (r.n_acc && r.t_acc) r.final = (r.jf + *r.n_acc + *r.t_acc) / 3.0;
  return r;
}

} // namespace gateseg::synth
