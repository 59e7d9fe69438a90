#pragma once

// Batch commands behind the gateseg CLI: evaluate, sweep, train-gate, synth
// and convert. Each writes its outputs from a single thread after per-query
// work has been reduced.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gateseg/gating.hpp"
#include "gateseg/harness/errors.hpp"
#include "gateseg/harness/formats.hpp"
#include "gateseg/harness/manifest.hpp"
#include "gateseg/harness/parallel.hpp"
#include "gateseg/metrics.hpp"
#include "gateseg/synth.hpp"

namespace gateseg::harness {

namespace fs = std::filesystem;

struct RunSettings {
  std::optional<int> radius;                ///< overrides manifest option and default
  std::optional<EmptyGtPolicy> policy;      ///< overrides manifest option
  std::optional<double> tau;                ///< overrides manifest option
  std::optional<fs::path> head_path;        ///< fills missing probabilities from features
  unsigned jobs = 1;
  bool timestamp = true;
};

struct QueryResult {
  QueryMetrics metrics;
  std::optional<double> existence_prob;
  bool gated = false;
};

struct Evaluation {
  int radius = 1;
  EmptyGtPolicy policy = EmptyGtPolicy::include_full_credit;
  std::optional<double> tau;
  std::vector<QueryResult> queries; ///< query_id order
  AggregateReport report;
};

inline int resolve_radius(const Manifest& m, const RunSettings& s) {
  const int r = s.radius ? *s.radius : m.options.radius.value_or(default_radius(m.width, m.height));
  if (r < 0) throw ValidationError("invalid_value", "", "radius", "radius must be non-negative");
  return r;
}

inline std::optional<ExistenceHead> load_head(const RunSettings& s) {
  if (!s.head_path) return std::nullopt;
  try {
    return head_from_json(parse_json_file(*s.head_path));
  } catch (const FormatError& e) {
    throw DataError(e.what());
  }
}

/// Manifest value, else the head applied to the query's feature tensor.
inline std::vector<std::optional<double>> resolve_probabilities(const Manifest& m,
                                                                const std::optional<ExistenceHead>& head,
                                                                unsigned jobs) {
  std::vector<std::optional<double>> probs(m.queries.size());
  parallel_for(m.queries.size(), jobs, [&](std::size_t i) {
    const auto& q = m.queries[i];
    if (q.existence_prob) {
      probs[i] = q.existence_prob;
    } else if (head && q.feature_ref) {
      FeatureTensor f = [&] {
        try {
          return load_tensor(m.resolve(*q.feature_ref));
        } catch (const FormatError& e) {
          throw DataError("query " + q.query_id + ": " + e.what());
        }
      }();
      if (f.dim() != head->dim) {
        throw DataError("query " + q.query_id + ": feature dim " + std::to_string(f.dim()) +
                        " does not match head dim " + std::to_string(head->dim));
      }
      probs[i] = forward(*head, f).p;
    }
  });
  return probs;
}

inline void require_all(const Manifest& m, const std::vector<std::optional<double>>& probs) {
  std::vector<Issue> issues;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!probs[i]) issues.push_back({"missing_probability", m.queries[i].query_id, "existence_prob",
                                     "no existence_prob and no feature tensor + head to compute one"});
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));
}

inline QueryRecord load_query(const Manifest& m, std::size_t i, std::optional<double> p) {
  const auto& q = m.queries[i];
  const auto frames = m.frames_of(q);
  auto gt = load_mask_source(m.resolve(q.gt_ref), m.width, m.height, frames);
  auto pred = load_mask_source(m.resolve(q.pred_ref), m.width, m.height, frames);
  return QueryRecord{q.query_id, q.sequence_id, q.transcript, std::move(gt), std::move(pred), p, std::nullopt};
}

inline Evaluation evaluate_manifest(const Manifest& m, const RunSettings& s) {
  Evaluation ev;
  ev.radius = resolve_radius(m, s);
  ev.policy = s.policy.value_or(m.options.policy);
  ev.tau = s.tau ? s.tau : m.options.tau;
  if (ev.tau && !(*ev.tau >= 0.0 && *ev.tau <= 1.0)) {
    throw ValidationError("invalid_value", "", "tau", "tau must lie in [0,1]");
  }
  const auto probs = resolve_probabilities(m, load_head(s), s.jobs);
  if (ev.tau) require_all(m, probs);

  ev.queries.resize(m.queries.size());
  parallel_for(m.queries.size(), s.jobs, [&](std::size_t i) {
    QueryRecord q = load_query(m, i, probs[i]);
    QueryResult r;
    r.existence_prob = probs[i];
    if (ev.tau) {
      r.gated = *probs[i] < *ev.tau;
      q.pred = apply_gate(*probs[i], GatingConfig(*ev.tau), q.pred);
    }
    r.metrics = score_query(q, ev.radius, ev.policy);
    ev.queries[i] = std::move(r);
  });
  std::sort(ev.queries.begin(), ev.queries.end(),
            [](const QueryResult& a, const QueryResult& b) { return a.metrics.query_id < b.metrics.query_id; });
  std::vector<QueryMetrics> metrics;
  metrics.reserve(ev.queries.size());
  for (const auto& r : ev.queries) metrics.push_back(r.metrics);
  ev.report = reduce_metrics(metrics, ev.policy);
  return ev;
}

// ---------------------------------------------------------------------------
// Emission

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::string format_2dp(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", round_half_up(*v, 2));
  return buf;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json summary_json(const AggregateReport& r) {
  return json{{"jf", r.jf},
              {"j", r.j},
              {"f", r.f},
              {"n_acc", optional_number(r.n_acc)},
              {"t_acc", optional_number(r.t_acc)},
              {"final", optional_number(r.final)},
              {"counts", {{"tp", r.counts.tp}, {"tn", r.counts.tn}, {"fp", r.counts.fp}, {"fn", r.counts.fn}}},
              {"jf_queries", r.jf_queries}};
}

inline const char* kTableHeader = "J&F,J,F,N-acc,T-acc,Final";

inline std::string table_row(const AggregateReport& r) {
  return format_2dp(r.jf) + "," + format_2dp(r.j) + "," + format_2dp(r.f) + "," + format_2dp(r.n_acc) + "," +
         format_2dp(r.t_acc) + "," + format_2dp(r.final);
}

inline json report_json(const Evaluation& ev, bool timestamp) {
  json queries = json::array();
  for (const auto& q : ev.queries) {
    queries.push_back({{"query_id", q.metrics.query_id},
                       {"j", optional_number(q.metrics.j_mean)},
                       {"f", optional_number(q.metrics.f_mean)},
                       {"gt_present", q.metrics.gt_present},
                       {"pred_present", q.metrics.pred_present},
                       {"existence_prob", optional_number(q.existence_prob)},
                       {"gated", q.gated}});
  }
  json doc{{"format_version", 1},
           {"policy", std::string(to_string(ev.policy))},
           {"radius", ev.radius},
           {"tau", optional_number(ev.tau)},
           {"summary", summary_json(ev.report)},
           {"queries", std::move(queries)}};
  if (timestamp) doc["generated_at"] = utc_timestamp();
  return doc;
}

inline std::string report_csv(const AggregateReport& r) { return std::string(kTableHeader) + "\n" + table_row(r) + "\n"; }

inline void write_evaluation(const Evaluation& ev, const fs::path& out_dir, bool timestamp) {
  fs::create_directories(out_dir);
  write_text(out_dir / "report.json", report_json(ev, timestamp).dump(2) + "\n");
  write_text(out_dir / "report.csv", report_csv(ev.report));
}

// ---------------------------------------------------------------------------
// Sweep

/// "a:b:step" (inclusive range) or a comma-separated list of thresholds.
inline std::vector<double> parse_grid(const std::string& spec) {
  auto bad = [&](const std::string& why) {
    return ValidationError("invalid_value", "", "grid", "'" + spec + "': " + why);
  };
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw bad("not a number: " + s);
      return v;
    } catch (const std::logic_error&) {
      throw bad("not a number: " + s);
    }
  };
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
    if (parts.size() != 3) throw bad("expected a:b:step");
    const double a = number(parts[0]), b = number(parts[1]), step = number(parts[2]);
    if (!(step > 0.0) || !(a <= b)) throw bad("need a <= b and step > 0");
    const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9));
    for (std::size_t k = 0; k <= n; ++k) {
      out.push_back(std::round((a + static_cast<double>(k) * step) * 1e12) / 1e12);
    }
  } else {
    std::stringstream ss(spec);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(number(item));
  }
  if (out.empty()) throw bad("empty grid");
  for (double t : out) {
    if (!(t >= 0.0 && t <= 1.0)) throw bad("thresholds must lie in [0,1]");
  }
  return out;
}

struct SweepRun {
  int radius = 1;
  EmptyGtPolicy policy = EmptyGtPolicy::include_full_credit;
  SweepResult result;
};

inline SweepRun sweep_manifest(const Manifest& m, const std::vector<double>& grid, const RunSettings& s) {
  SweepRun run;
  run.radius = resolve_radius(m, s);
  run.policy = s.policy.value_or(m.options.policy);
  const auto probs = resolve_probabilities(m, load_head(s), s.jobs);
  require_all(m, probs);
  std::vector<SweepEvent> events(m.queries.size());
  parallel_for(m.queries.size(), s.jobs, [&](std::size_t i) {
    events[i] = make_sweep_event(load_query(m, i, probs[i]), run.radius, run.policy);
  });
  run.result = sweep_events(std::move(events), grid, run.policy);
  return run;
}

inline std::string format_tau(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", tau);
  return buf;
}

inline void write_sweep(const SweepRun& run, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::string csv = "tau," + std::string(kTableHeader) + "\n";
  json rows = json::array();
  for (const auto& pt : run.result.grid) {
    csv += format_tau(pt.tau) + "," + table_row(pt.report) + "\n";
    json row = summary_json(pt.report);
    row["tau"] = pt.tau;
    rows.push_back(std::move(row));
  }
  json doc{{"format_version", 1},
           {"policy", std::string(to_string(run.policy))},
           {"radius", run.radius},
           {"grid", std::move(rows)}};
  if (auto best = run.result.best()) {
    doc["best"] = {{"tau", best->tau}, {"final", *best->report.final}};
  } else {
    doc["best"] = nullptr;
  }
  write_text(out_dir / "sweep.csv", csv);
  write_text(out_dir / "sweep.json", doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Existence head training

struct TrainSettings {
  double lr = 0.1;
  std::size_t epochs = 500;
  std::size_t hidden = 64;
  std::uint64_t seed = 0;
};

/// {"samples": [{"features": "<path>" | [[[...]]], "label": 0 | 1}, ...]}
inline std::vector<LabeledTensor> load_feature_dataset(const fs::path& path) {
  const json doc = parse_json_file(path);
  if (!doc.is_object() || !doc.contains("samples") || !doc["samples"].is_array()) {
    throw ValidationError("missing_field", "", "samples", path.string() + ": expected {\"samples\": [...]}");
  }
  std::vector<LabeledTensor> out;
  std::size_t i = 0;
  for (const auto& s : doc["samples"]) {
    const std::string where = "#" + std::to_string(i++);
    if (!s.is_object() || !s.contains("features") || !s.contains("label")) {
      throw ValidationError("missing_field", where, "", "sample needs features and label");
    }
    if (!s["label"].is_number_integer() || (s["label"].get<int>() != 0 && s["label"].get<int>() != 1)) {
      throw ValidationError("invalid_value", where, "label", "label must be 0 or 1");
    }
    try {
      FeatureTensor f = s["features"].is_string() ? load_tensor(path.parent_path() / s["features"].get<std::string>())
                                                  : tensor_from_json(s["features"]);
      out.push_back({std::move(f), s["label"].get<int>()});
    } catch (const FormatError& e) {
      throw DataError("sample " + where + ": " + e.what());
    }
  }
  if (out.empty()) throw ValidationError("invalid_value", "", "samples", "dataset is empty");
  return out;
}

struct TrainRun {
  TrainResult result;
  std::uint64_t seed = 0;
};

inline TrainRun train_gate(const std::vector<LabeledTensor>& data, const TrainSettings& s) {
  std::size_t positives = 0;
  for (const auto& d : data) positives += d.label == 1;
  if (positives == 0 || positives == data.size()) {
    throw ValidationError("single_class", "", "label",
                          "training needs at least one positive and one negative sample");
  }
  const std::size_t dim = data.front().features.dim();
  for (const auto& d : data) {
    if (d.features.dim() != dim) throw ValidationError("invalid_value", "", "features", "feature dims differ");
  }
  if (s.hidden == 0) throw ValidationError("invalid_value", "", "hidden", "hidden must be positive");
  if (!(s.lr > 0.0)) throw ValidationError("invalid_value", "", "lr", "learning rate must be positive");
  auto head = ExistenceHead::init(dim, s.hidden, s.seed);
  return {train(std::move(head), data, TrainConfig{s.lr, s.epochs, s.seed}), s.seed};
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_training(const TrainRun& run, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_text(out_dir / "head.json", head_to_json(run.result.head, run.seed).dump(2) + "\n");
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < run.result.loss_history.size(); ++e) {
    csv += std::to_string(e) + "," + format_real(run.result.loss_history[e]) + "\n";
  }
  csv += "final," + format_real(run.result.final_loss) + "\n";
  write_text(out_dir / "loss.csv", csv);
}

// ---------------------------------------------------------------------------
// Synthetic export and codec conversion

enum class MaskFormat { rle, png };

/// Streams a generated scenario to disk in the manifest layout: manifest.json,
/// gt/ and pred/ mask sources, features/*.npy, features.json (train-gate
/// input) and scenario.json (generator settings and label bookkeeping).
class ScenarioWriter {
public:
  ScenarioWriter(const synth::ScenarioConfig& cfg, fs::path out_dir, MaskFormat format)
      : cfg_(cfg), out_(std::move(out_dir)), format_(format) {
    fs::create_directories(out_ / "gt");
    fs::create_directories(out_ / "pred");
    fs::create_directories(out_ / "features");
    manifest_.width = cfg.width;
    manifest_.height = cfg.height;
    manifest_.frames = cfg.frames;
  }

  void add(const QueryRecord& q, bool present, bool hallucinated) {
    const std::string ext = format_ == MaskFormat::rle ? ".json" : "";
    ManifestQuery mq{q.query_id, q.sequence_id, q.transcript, "gt/" + q.query_id + ext,
                     "pred/" + q.query_id + ext, std::nullopt, q.existence_prob, std::nullopt};
    if (format_ == MaskFormat::rle) {
      write_rle_sequence(out_ / mq.gt_ref, q.gt);
      write_rle_sequence(out_ / mq.pred_ref, q.pred);
    } else {
      write_png_sequence(out_ / mq.gt_ref, q.gt);
      write_png_sequence(out_ / mq.pred_ref, q.pred);
    }
    if (q.features) {
      mq.feature_ref = "features/" + q.query_id + ".npy";
      write_npy_tensor(out_ / *mq.feature_ref, *q.features);
      samples_.push_back({{"features", *mq.feature_ref}, {"label", present ? 1 : 0}});
    }
    labels_.push_back({{"query_id", q.query_id}, {"present", present}, {"hallucinated", hallucinated}});
    manifest_.queries.push_back(std::move(mq));
  }

  void finish(const std::string& rng_algorithm) {
    write_text(out_ / "manifest.json", manifest_to_json(manifest_).dump(2) + "\n");
    write_text(out_ / "features.json", json{{"samples", samples_}}.dump(2) + "\n");
    const auto& c = cfg_;
    json meta{{"seed", c.seed},
              {"rng", rng_algorithm},
              {"config",
               {{"num_queries", c.num_queries},
                {"frac_absent", c.frac_absent},
                {"width", c.width},
                {"height", c.height},
                {"frames", c.frames},
                {"shape", std::string(synth::to_string(c.shape))},
                {"max_objects", c.max_objects},
                {"shift_px", c.shift_px},
                {"morph_px", c.morph_px},
                {"false_positive_rate", c.false_positive_rate},
                {"miss_rate", c.miss_rate},
                {"mu_present", c.mu_present},
                {"sigma_present", c.sigma_present},
                {"mu_absent", c.mu_absent},
                {"sigma_absent", c.sigma_absent},
                {"tokens", c.tokens},
                {"feature_frames", c.feature_frames},
                {"feature_dim", c.feature_dim},
                {"feature_separation", c.feature_separation},
                {"feature_noise", c.feature_noise}}},
              {"labels", labels_}};
    write_text(out_ / "scenario.json", meta.dump(2) + "\n");
  }

private:
  synth::ScenarioConfig cfg_;
  fs::path out_;
  MaskFormat format_;
  Manifest manifest_;
  json samples_ = json::array();
  json labels_ = json::array();
};

inline void export_scenario(const synth::Scenario& sc, const fs::path& out_dir, MaskFormat format) {
  ScenarioWriter w(sc.config, out_dir, format);
  for (std::size_t i = 0; i < sc.queries.size(); ++i) w.add(sc.queries[i], sc.present[i], sc.hallucinated[i]);
  w.finish(sc.rng_algorithm);
}

/// Generates and writes a scenario one query at a time. Returns the query count.
inline std::size_t export_generated(const synth::ScenarioConfig& cfg, const fs::path& out_dir, MaskFormat format) {
  ScenarioWriter w(cfg, out_dir, format);
  std::size_t n = 0;
  synth::for_each_query(cfg, [&](QueryRecord&& q, bool present, bool hallucinated) {
    w.add(q, present, hallucinated);
    ++n;
  });
  w.finish(synth::Scenario{}.rng_algorithm);
  return n;
}

/// PNG frame directory -> RLE-JSON file, or RLE-JSON file -> PNG frame directory.
inline void convert_masks(const fs::path& src, const fs::path& dst) {
  if (fs::is_directory(src)) {
    const auto files = list_frame_pngs(src);
    if (files.empty()) throw DataError(src.string() + ": no PNG frames to convert");
    std::vector<Mask> frames;
    for (const auto& f : files) frames.push_back(read_png_mask(f));
    try {
      write_rle_sequence(dst, MaskSequence(std::move(frames)));
    } catch (const InputError& e) {
      throw DataError(src.string() + ": " + e.what());
    }
  } else if (fs::is_regular_file(src)) {
    std::vector<Mask> frames;
    try {
      frames = frames_from_rle_json(parse_json_file(src));
    } catch (const FormatError& e) {
      throw DataError(src.string() + ": " + e.what());
    }
    if (frames.empty()) throw DataError(src.string() + ": no frames to convert");
    try {
      write_png_sequence(dst, MaskSequence(std::move(frames)));
    } catch (const InputError& e) {
      throw DataError(src.string() + ": " + e.what());
    }
  } else {
    throw DataError(src.string() + ": no such file or directory");
  }
}

/// Maps the error taxonomy onto exit codes, printing the diagnostic.
template <typename Fn>
int run_guarded(Fn&& fn, std::ostream& err = std::cerr) {
  try {
    fn();
    return kOk;
  } catch (const ValidationError& e) {
    err << "validation error:\n" << e.what() << "\n";
    return kValidationError;
  } catch (const InputError& e) {
    err << "validation error: " << e.what() << "\n";
    return kValidationError;
  } catch (const MetricUndefined& e) {
    err << "metric undefined: " << e.what() << "\n";
    return kMetricUndefined;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
}

} // namespace gateseg::harness
