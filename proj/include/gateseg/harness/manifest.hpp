#pragma once

// Dataset manifest: one JSON document listing every query with locators for
// its ground-truth and predicted mask sources.
//
//   {
//     "format_version": 1,
//     "dims": {"width": 640, "height": 480},
//     "frames": 50,
//     "options": {"radius": null, "empty_gt_policy": "include-full-credit", "tau": null},
//     "queries": [
//       {"query_id": "q00000", "sequence_id": "s00000", "transcript": "...",
//        "gt": "gt/q00000.json", "pred": "pred/q00000", "frames": 50,
//        "existence_prob": 0.93, "features": "features/q00000.npy"}
//     ]
//   }
//
// Locators are relative to the manifest's directory. A locator naming a
// directory holds per-frame PNGs (00000.png, 00001.png, ...); a file holds an
// RLE-JSON array with one {"w","h","counts"} object per frame.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gateseg/harness/errors.hpp"
#include "gateseg/harness/formats.hpp"
#include "gateseg/harness/png_io.hpp"
#include "gateseg/mask.hpp"
#include "gateseg/metrics.hpp"

namespace gateseg::harness {

inline constexpr int kManifestFormatVersion = 1;

struct ManifestQuery {
  std::string query_id;
  std::string sequence_id;
  std::string transcript;
  std::string gt_ref;
  std::string pred_ref;
  std::optional<std::size_t> frames; ///< overrides the manifest default
  std::optional<double> existence_prob;
  std::optional<std::string> feature_ref;

  friend bool operator==(const ManifestQuery&, const ManifestQuery&) = default;
};

struct EvaluationOptions {
  std::optional<int> radius;
  EmptyGtPolicy policy = EmptyGtPolicy::include_full_credit;
  std::optional<double> tau;

  friend bool operator==(const EvaluationOptions&, const EvaluationOptions&) = default;
};

struct Manifest {
  int format_version = kManifestFormatVersion;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t frames = 0;
  EvaluationOptions options;
  std::vector<ManifestQuery> queries;
  std::filesystem::path base_dir; ///< not serialized

  std::size_t frames_of(const ManifestQuery& q) const { return q.frames.value_or(frames); }
  std::filesystem::path resolve(const std::string& ref) const { return base_dir / ref; }
};

inline json manifest_to_json(const Manifest& m) {
  json queries = json::array();
  for (const auto& q : m.queries) {
    json jq{{"query_id", q.query_id},
            {"sequence_id", q.sequence_id},
            {"transcript", q.transcript},
            {"gt", q.gt_ref},
            {"pred", q.pred_ref}};
    if (q.frames) jq["frames"] = *q.frames;
    if (q.existence_prob) jq["existence_prob"] = *q.existence_prob;
    if (q.feature_ref) jq["features"] = *q.feature_ref;
    queries.push_back(std::move(jq));
  }
  json options{{"empty_gt_policy", std::string(to_string(m.options.policy))},
               {"radius", m.options.radius ? json(*m.options.radius) : json(nullptr)},
               {"tau", m.options.tau ? json(*m.options.tau) : json(nullptr)}};
  return json{{"format_version", m.format_version},
              {"dims", {{"width", m.width}, {"height", m.height}}},
              {"frames", m.frames},
              {"options", std::move(options)},
              {"queries", std::move(queries)}};
}

namespace detail {

class IssueLog {
public:
  void add(std::string code, std::string query_id, std::string field, std::string message) {
    issues_.push_back({std::move(code), std::move(query_id), std::move(field), std::move(message)});
  }
  bool empty() const noexcept { return issues_.empty(); }
  [[noreturn]] void raise() { throw ValidationError(std::move(issues_)); }

private:
  std::vector<Issue> issues_;
};

inline std::optional<std::size_t> positive_int(const json& j, const std::string& field, const std::string& qid,
                                               IssueLog& log) {
  if (!j.is_number_unsigned() || j.get<std::size_t>() == 0) {
    log.add("invalid_value", qid, field, "expected a positive integer");
    return std::nullopt;
  }
  return j.get<std::size_t>();
}

inline std::optional<std::string> string_field(const json& obj, const std::string& field, const std::string& qid,
                                               IssueLog& log, bool required) {
  if (!obj.contains(field)) {
    if (required) log.add("missing_field", qid, field, "required");
    return std::nullopt;
  }
  if (!obj[field].is_string()) {
    log.add("invalid_value", qid, field, "expected a string");
    return std::nullopt;
  }
  return obj[field].get<std::string>();
}

inline std::optional<double> unit_interval(const json& j, const std::string& field, const std::string& qid,
                                           IssueLog& log) {
  if (!j.is_number() || !(j.get<double>() >= 0.0 && j.get<double>() <= 1.0)) {
    log.add("invalid_value", qid, field, "expected a number in [0,1]");
    return std::nullopt;
  }
  return j.get<double>();
}

} // namespace detail

/// Parses and validates a manifest document. `check_refs` confirms every
/// locator exists relative to `base_dir`. All problems are collected and
/// raised together as one ValidationError.
inline Manifest manifest_from_json(const json& doc, const std::filesystem::path& base_dir, bool check_refs = true) {
  detail::IssueLog log;
  Manifest m;
  m.base_dir = base_dir;
  if (!doc.is_object()) {
    log.add("invalid_value", "", "", "manifest must be a JSON object");
    log.raise();
  }
  if (!doc.contains("format_version")) {
    log.add("missing_field", "", "format_version", "required");
    log.raise();
  }
  if (!doc["format_version"].is_number_integer() || doc["format_version"].get<int>() != kManifestFormatVersion) {
    log.add("unknown_version", "", "format_version",
            "unsupported manifest version " + doc["format_version"].dump() + ", expected " +
                std::to_string(kManifestFormatVersion));
    log.raise();
  }

  if (!doc.contains("dims") || !doc["dims"].is_object()) {
    log.add("missing_field", "", "dims", "required object {width, height}");
  } else {
    const auto& dims = doc["dims"];
    if (auto w = detail::positive_int(dims.value("width", json()), "dims.width", "", log)) m.width = *w;
    if (auto h = detail::positive_int(dims.value("height", json()), "dims.height", "", log)) m.height = *h;
  }
  if (!doc.contains("frames")) {
    log.add("missing_field", "", "frames", "required");
  } else if (auto t = detail::positive_int(doc["frames"], "frames", "", log)) {
    m.frames = *t;
  }

  if (doc.contains("options")) {
    const auto& opt = doc["options"];
    if (!opt.is_object()) {
      log.add("invalid_value", "", "options", "expected an object");
    } else {
      if (opt.contains("radius") && !opt["radius"].is_null()) {
        if (!opt["radius"].is_number_integer() || opt["radius"].get<long>() < 0) {
          log.add("invalid_value", "", "options.radius", "expected a non-negative integer");
        } else {
          m.options.radius = opt["radius"].get<int>();
        }
      }
      if (opt.contains("empty_gt_policy")) {
        try {
          m.options.policy = parse_policy(opt["empty_gt_policy"].get<std::string>());
        } catch (const std::exception&) {
          log.add("invalid_value", "", "options.empty_gt_policy", "expected include-full-credit or exclude");
        }
      }
      if (opt.contains("tau") && !opt["tau"].is_null()) {
        if (auto tau = detail::unit_interval(opt["tau"], "options.tau", "", log)) m.options.tau = tau;
      }
    }
  }

  if (!doc.contains("queries") || !doc["queries"].is_array()) {
    log.add("missing_field", "", "queries", "required array");
    log.raise();
  }
  if (doc["queries"].empty()) log.add("invalid_value", "", "queries", "manifest lists no queries");

  std::set<std::string> seen;
  std::size_t index = 0;
  for (const auto& jq : doc["queries"]) {
    const std::string position = "#" + std::to_string(index++);
    if (!jq.is_object()) {
      log.add("invalid_value", position, "", "query entry must be an object");
      continue;
    }
    ManifestQuery q;
    auto id = detail::string_field(jq, "query_id", position, log, true);
    const std::string qid = id.value_or(position);
    if (id) {
      if (id->empty()) log.add("invalid_value", position, "query_id", "must not be empty");
      if (!seen.insert(*id).second) log.add("duplicate_query_id", *id, "query_id", "query_id appears more than once");
      q.query_id = *id;
    }
    q.sequence_id = detail::string_field(jq, "sequence_id", qid, log, false).value_or("");
    q.transcript = detail::string_field(jq, "transcript", qid, log, false).value_or("");
    if (auto gt = detail::string_field(jq, "gt", qid, log, true)) q.gt_ref = *gt;
    if (auto pred = detail::string_field(jq, "pred", qid, log, true)) q.pred_ref = *pred;
    if (jq.contains("frames")) q.frames = detail::positive_int(jq["frames"], "frames", qid, log);
    if (jq.contains("existence_prob") && !jq["existence_prob"].is_null()) {
      q.existence_prob = detail::unit_interval(jq["existence_prob"], "existence_prob", qid, log);
    }
    q.feature_ref = detail::string_field(jq, "features", qid, log, false);

    if (check_refs) {
      auto check = [&](const std::string& ref, const char* field) {
        if (!ref.empty() && !std::filesystem::exists(base_dir / ref)) {
          log.add("unresolvable_ref", qid, field, (base_dir / ref).string() + " does not exist");
        }
      };
      check(q.gt_ref, "gt");
      check(q.pred_ref, "pred");
      if (q.feature_ref) check(*q.feature_ref, "features");
    }
    m.queries.push_back(std::move(q));
  }
  if (!log.empty()) log.raise();
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("invalid_json", "", "", path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw ValidationError("unresolvable_ref", "", "manifest", e.what());
  }
  return manifest_from_json(doc, path.parent_path());
}

/// Per-frame PNG names: digits only, sorted by numeric value.
inline std::vector<std::filesystem::path> list_frame_pngs(const std::filesystem::path& dir) {
  std::vector<std::pair<unsigned long long, std::filesystem::path>> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const auto stem = entry.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw DataError(entry.path().string() + ": frame names must be zero-padded numbers");
    }
    found.emplace_back(std::stoull(stem), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<std::filesystem::path> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

/// Loads a sequence from a PNG directory or an RLE-JSON file and checks it
/// against the expected frame count and dimensions.
inline MaskSequence load_mask_source(const std::filesystem::path& ref, std::size_t width, std::size_t height,
                                     std::size_t frames) {
  std::vector<Mask> masks;
  if (std::filesystem::is_directory(ref)) {
    const auto files = list_frame_pngs(ref);
    if (files.empty()) throw DataError(ref.string() + ": no PNG frames");
    if (files.size() != frames) {
      throw DataError(ref.string() + ": " + std::to_string(files.size()) + " frames, expected " +
                      std::to_string(frames));
    }
    masks.reserve(files.size());
    for (const auto& f : files) masks.push_back(read_png_mask(f));
  } else if (std::filesystem::is_regular_file(ref)) {
    try {
      masks = frames_from_rle_json(parse_json_file(ref));
    } catch (const FormatError& e) {
      throw DataError(ref.string() + ": " + e.what());
    }
    if (masks.size() != frames) {
      throw DataError(ref.string() + ": " + std::to_string(masks.size()) + " frames, expected " +
                      std::to_string(frames));
    }
  } else {
    throw DataError(ref.string() + ": no such mask source");
  }
  for (std::size_t t = 0; t < masks.size(); ++t) {
    if (masks[t].width() != width || masks[t].height() != height) {
      throw DataError(ref.string() + ": frame " + std::to_string(t) + " is " + std::to_string(masks[t].width()) +
                      "x" + std::to_string(masks[t].height()) + ", manifest says " + std::to_string(width) + "x" +
                      std::to_string(height));
    }
  }
  return MaskSequence(std::move(masks));
}

inline void write_png_sequence(const std::filesystem::path& dir, const MaskSequence& seq) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t t = 0; t < seq.length(); ++t) {
    std::snprintf(name, sizeof name, "%05zu.png", t);
    write_png_mask(dir / name, seq[t]);
  }
}

inline void write_rle_sequence(const std::filesystem::path& file, const MaskSequence& seq) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  write_text(file, sequence_to_rle_json(seq).dump());
}

} // namespace gateseg::harness
