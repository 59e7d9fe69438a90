#pragma once

// Region similarity (J), boundary F-measure (F), query-level presence
// confusion (N-acc / T-acc) and the dataset report combining them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gateseg/error.hpp"
#include "gateseg/exact_sum.hpp"
#include "gateseg/mask.hpp"
#include "gateseg/query.hpp"

namespace gateseg {

inline double region_j(const Mask& pred, const Mask& gt) {
  if (!pred.same_shape(gt)) throw InputError("region_j: dimension mismatch");
  auto a = pred.bits();
  auto b = gt.bits();
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] & b[i];
    uni += a[i] | b[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

// Foreground pixels with a background 4-neighbour or touching the image edge.
inline std::vector<std::uint32_t> boundary_indices(const Mask& mask) {
  std::vector<std::uint32_t> out;
  const std::size_t w = mask.width(), h = mask.height();
  auto bits = mask.bits();
  for (std::size_t y = 0; y < h; ++y) {
    const std::uint8_t* row = bits.data() + y * w;
    const std::uint8_t* up = y > 0 ? row - w : nullptr;
    const std::uint8_t* down = y + 1 < h ? row + w : nullptr;
    for (std::size_t x = 0; x < w; ++x) {
      if (!row[x]) continue;
      const bool interior = up && down && x > 0 && x + 1 < w && up[x] && down[x] && row[x - 1] && row[x + 1];
      if (!interior) out.push_back(static_cast<std::uint32_t>(y * w + x));
    }
  }
  return out;
}

// Half-widths of the digital Euclidean disk: offsets (dx, dy) with dx^2 + dy^2 <= r^2.
inline std::vector<int> disk_half_widths(int radius) {
  std::vector<int> hw(static_cast<std::size_t>(radius) + 1);
  for (int dy = 0; dy <= radius; ++dy) {
    int x = 0;
    while ((x + 1) * (x + 1) + dy * dy <= radius * radius) ++x;
    hw[static_cast<std::size_t>(dy)] = x;
  }
  return hw;
}

// Dilation of a sparse pixel set by the disk, stamped as row spans.
inline std::vector<std::uint8_t> dilate_points(std::span<const std::uint32_t> points, std::size_t width,
                                               std::size_t height, int radius) {
  std::vector<std::uint8_t> cover(width * height, 0);
  const auto hw = disk_half_widths(radius);
  const auto w = static_cast<long>(width), h = static_cast<long>(height);
  for (auto idx : points) {
    const long x = static_cast<long>(idx % width), y = static_cast<long>(idx / width);
    for (long dy = -radius; dy <= radius; ++dy) {
      const long yy = y + dy;
      if (yy < 0 || yy >= h) continue;
      const long half = hw[static_cast<std::size_t>(std::labs(dy))];
      const long x0 = std::max(0L, x - half), x1 = std::min(w - 1, x + half);
      std::memset(cover.data() + yy * w + x0, 1, static_cast<std::size_t>(x1 - x0 + 1));
    }
  }
  return cover;
}

inline std::size_t count_covered(std::span<const std::uint32_t> points, const std::vector<std::uint8_t>& cover) {
  std::size_t n = 0;
  for (auto idx : points) n += cover[idx];
  return n;
}

} // namespace detail

inline Mask extract_boundary(const Mask& mask) {
  Mask out(mask.width(), mask.height());
  auto dst = out.bits();
  for (auto idx : detail::boundary_indices(mask)) dst[idx] = 1;
  return out;
}

/// Boundary F-measure with a Euclidean pixel tolerance.
inline double boundary_f(const Mask& pred, const Mask& gt, int radius) {
  if (!pred.same_shape(gt)) throw InputError("boundary_f: dimension mismatch");
  if (radius < 0) throw InputError("boundary_f: negative radius");
  const auto pb = detail::boundary_indices(pred);
  const auto gb = detail::boundary_indices(gt);
  if (pb.empty() && gb.empty()) return 1.0;
  if (pb.empty() || gb.empty()) return 0.0;
  const std::size_t w = pred.width(), h = pred.height();
  const auto matched_pred = detail::count_covered(pb, detail::dilate_points(gb, w, h, radius));
  const auto matched_gt = detail::count_covered(gb, detail::dilate_points(pb, w, h, radius));
  const double precision = static_cast<double>(matched_pred) / static_cast<double>(pb.size());
  const double recall = static_cast<double>(matched_gt) / static_cast<double>(gb.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

/// 0.8% of the image diagonal, rounded up, at least one pixel.
inline int default_radius(std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw InputError("default_radius: non-positive dimensions");
  const double diag = std::sqrt(static_cast<double>(width * width + height * height));
  return std::max(1, static_cast<int>(std::ceil(0.008 * diag)));
}

struct FrameScore {
  double j = 0.0;
  double f = 0.0;
};

struct SequenceScores {
  std::vector<FrameScore> frames;
  double j_mean = 0.0;
  double f_mean = 0.0;
};

inline SequenceScores sequence_scores(const MaskSequence& pred, const MaskSequence& gt, int radius) {
  if (!pred.same_shape(gt)) throw InputError("sequence_scores: shape mismatch");
  SequenceScores out;
  out.frames.reserve(gt.length());
  double sj = 0.0, sf = 0.0;
  for (std::size_t t = 0; t < gt.length(); ++t) {
    FrameScore s{region_j(pred[t], gt[t]), boundary_f(pred[t], gt[t], radius)};
    sj += s.j;
    sf += s.f;
    out.frames.push_back(s);
  }
  const auto n = static_cast<double>(gt.length());
  out.j_mean = sj / n;
  out.f_mean = sf / n;
  return out;
}

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + tn + fp + fn; }

  void record(bool gt_present, bool pred_present) noexcept {
    if (gt_present) {
      ++(pred_present ? tp : fn);
    } else {
      ++(pred_present ? fp : tn);
    }
  }

  void forget(bool gt_present, bool pred_present) noexcept {
    if (gt_present) {
      --(pred_present ? tp : fn);
    } else {
      --(pred_present ? fp : tn);
    }
  }

  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts presence_confusion(std::span<const QueryRecord> queries) {
  ConfusionCounts c;
  for (const auto& q : queries) c.record(indicator(q.gt), indicator(q.pred));
  return c;
}

/// TN / (TN + FP); empty when no query is GT-absent.
inline std::optional<double> n_acc(const ConfusionCounts& c) {
  if (c.tn + c.fp == 0) return std::nullopt;
  return static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

/// TP / (TP + FN); empty when no query is GT-present.
inline std::optional<double> t_acc(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

inline double final_score(double jf, double n, double t) {
  for (double v : {jf, n, t}) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("final_score: component outside [0,1]");
  }
  return (jf + n + t) / 3.0;
}

/// How queries whose ground truth is empty enter the J and F means.
enum class EmptyGtPolicy {
  include_full_credit, ///< J = F = 1 when the prediction is empty too, else 0
  exclude,             ///< left out of the J and F means
};

inline std::string_view to_string(EmptyGtPolicy p) noexcept {
  return p == EmptyGtPolicy::exclude ? "exclude" : "include-full-credit";
}

inline EmptyGtPolicy parse_policy(std::string_view s) {
  if (s == "include-full-credit") return EmptyGtPolicy::include_full_credit;
  if (s == "exclude") return EmptyGtPolicy::exclude;
  throw InputError("unknown empty-GT policy '" + std::string(s) + "'");
}

struct QueryMetrics {
  std::string query_id;
  std::optional<double> j_mean; ///< empty when the policy excludes the query
  std::optional<double> f_mean;
  bool gt_present = false;
  bool pred_present = false;
};

inline QueryMetrics score_query(const QueryRecord& q, int radius, EmptyGtPolicy policy) {
  if (!q.pred.same_shape(q.gt)) throw InputError("query " + q.query_id + ": prediction/GT shape mismatch");
  QueryMetrics m;
  m.query_id = q.query_id;
  m.gt_present = indicator(q.gt);
  m.pred_present = indicator(q.pred);
  if (m.gt_present) {
    const auto s = sequence_scores(q.pred, q.gt, radius);
    m.j_mean = s.j_mean;
    m.f_mean = s.f_mean;
  } else if (policy == EmptyGtPolicy::include_full_credit) {
    const double credit = m.pred_present ? 0.0 : 1.0;
    m.j_mean = credit;
    m.f_mean = credit;
  }
  return m;
}

struct AggregateReport {
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
  std::optional<double> n_acc;
  std::optional<double> t_acc;
  std::optional<double> final; ///< empty when N-acc or T-acc is undefined
  ConfusionCounts counts;
  std::size_t jf_queries = 0; ///< queries contributing to the J and F means
  EmptyGtPolicy policy = EmptyGtPolicy::include_full_credit;

  friend bool operator==(const AggregateReport&, const AggregateReport&) = default;
};

/// Assembles a report from exact reductions. Both the direct aggregation and
/// the incremental threshold sweep go through here.
inline AggregateReport make_report(const ConfusionCounts& counts, const ExactSum& j_sum, const ExactSum& f_sum,
                                   std::size_t jf_queries, EmptyGtPolicy policy) {
  if (jf_queries == 0) {
    throw MetricUndefined("no query contributes to J/F under policy '" + std::string(to_string(policy)) + "'");
  }
  AggregateReport r;
  r.counts = counts;
  r.policy = policy;
  r.jf_queries = jf_queries;
  r.j = j_sum.value() / static_cast<double>(jf_queries);
  r.f = f_sum.value() / static_cast<double>(jf_queries);
  r.jf = (r.j + r.f) / 2.0;
  r.n_acc = n_acc(counts);
  r.t_acc = t_acc(counts);
  if (r.n_acc && r.t_acc) r.final = final_score(r.jf, *r.n_acc, *r.t_acc);
  return r;
}

inline AggregateReport reduce_metrics(std::span<const QueryMetrics> metrics, EmptyGtPolicy policy) {
  if (metrics.empty()) throw InputError("aggregate: empty query list");
  ConfusionCounts counts;
  ExactSum j_sum, f_sum;
  std::size_t included = 0;
  for (const auto& m : metrics) {
    counts.record(m.gt_present, m.pred_present);
    if (m.j_mean) {
      j_sum.add(*m.j_mean);
      f_sum.add(*m.f_mean);
      ++included;
    }
  }
  return make_report(counts, j_sum, f_sum, included, policy);
}

/// Per-query scores in query_id order, ready for reduce_metrics.
inline std::vector<QueryMetrics> score_queries(std::span<const QueryRecord> queries, int radius,
                                               EmptyGtPolicy policy) {
  std::vector<QueryMetrics> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(score_query(q, radius, policy));
  std::sort(out.begin(), out.end(),
            [](const QueryMetrics& a, const QueryMetrics& b) { return a.query_id < b.query_id; });
  return out;
}

inline AggregateReport aggregate(std::span<const QueryRecord> queries, int radius, EmptyGtPolicy policy) {
  if (queries.empty()) throw InputError("aggregate: empty query list");
  const auto metrics = score_queries(queries, radius, policy);
  return reduce_metrics(metrics, policy);
}

/// Half-up rounding to `decimals` places for report emission. The value is
/// first fixed at nine decimals so binary representation error in inputs such
/// as 0.445 does not flip the rounding direction.
inline double round_half_up(double x, int decimals = 2) {
  const double nano = std::round(x * 1e9);
  const double unit = std::pow(10.0, 9 - decimals);
  return std::floor(nano / unit + 0.5) / std::pow(10.0, decimals);
}

} // namespace gateseg
