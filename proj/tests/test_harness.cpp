#include <gtest/gtest.h>

#include <cstdlib>
#include <string>

#include "gateseg/harness/commands.hpp"
#include "test_util.hpp"

using namespace gateseg;
using namespace gateseg::harness;
using gateseg::test::TempDir;

namespace {

bool has_issue(const ValidationError& e, const std::string& code) {
  for (const auto& i : e.issues()) {
    if (i.code == code) return true;
  }
  return false;
}

std::string issue_codes(const json& doc, const fs::path& base) {
  try {
    manifest_from_json(doc, base);
  } catch (const ValidationError& e) {
    std::string s;
    for (const auto& i : e.issues()) s += i.code + ";";
    return s;
  }
  return "";
}

synth::ScenarioConfig small(const char* name, std::uint64_t seed) {
  auto cfg = synth::preset(name, seed);
  cfg.num_queries = 24;
  cfg.width = 20;
  cfg.height = 16;
  cfg.frames = 3;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GATESEG_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Manifest, RoundTripAndExportLoads) {
  TempDir dir("manifest");
  const auto sc = synth::gen_scenario(small("separable", 1));
  export_scenario(sc, dir.path(), MaskFormat::rle);
  const auto m = load_manifest(dir.path() / "manifest.json");
  EXPECT_EQ(m.queries.size(), sc.queries.size());
  EXPECT_EQ(m.width, 20u);
  const auto again = manifest_from_json(manifest_to_json(m), dir.path());
  EXPECT_EQ(again.queries, m.queries);
  EXPECT_EQ(again.options, m.options);
}

TEST(Manifest, ReportsEveryIssue) {
  TempDir dir("issues");
  const auto sc = synth::gen_scenario(small("separable", 2));
  export_scenario(sc, dir.path(), MaskFormat::rle);
  const json good = parse_json_file(dir.path() / "manifest.json");

  json dup = good;
  dup["queries"][1]["query_id"] = dup["queries"][0]["query_id"];
  EXPECT_NE(issue_codes(dup, dir.path()).find("duplicate_query_id"), std::string::npos);

  json version = good;
  version["format_version"] = 99;
  EXPECT_NE(issue_codes(version, dir.path()).find("unknown_version"), std::string::npos);

  json missing = good;
  missing["queries"][0]["pred"] = "pred/nowhere.json";
  missing["queries"][2].erase("gt");
  const auto codes = issue_codes(missing, dir.path());
  EXPECT_NE(codes.find("unresolvable_ref"), std::string::npos);
  EXPECT_NE(codes.find("missing_field"), std::string::npos);

  json prob = good;
  prob["queries"][0]["existence_prob"] = 1.5;
  EXPECT_NE(issue_codes(prob, dir.path()).find("invalid_value"), std::string::npos);

  write_text(dir.path() / "broken.json", "{ not json");
  try {
    load_manifest(dir.path() / "broken.json");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(has_issue(e, "invalid_json"));
  }
}

TEST(MaskSources, PngAndRle) {
  TempDir dir("sources");
  const auto black = dir.path() / "black";
  write_png_sequence(black, MaskSequence::zeros(8, 6, 3));
  const auto seq = load_mask_source(black, 8, 6, 3);
  EXPECT_FALSE(indicator(seq));
  EXPECT_THROW(load_mask_source(black, 8, 6, 4), DataError);
  EXPECT_THROW(load_mask_source(black, 9, 6, 3), DataError);

  write_text(dir.path() / "bad.json", R"([{"w":2,"h":2,"counts":[4]},{"w":2,"h":2,"counts":[3]}])");
  try {
    load_mask_source(dir.path() / "bad.json", 2, 2, 2);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos) << e.what();
  }

  fs::create_directories(dir.path() / "empty");
  EXPECT_THROW(convert_masks(dir.path() / "empty", dir.path() / "x.json"), DataError);
}

TEST(MaskSources, ConvertRoundTrip) {
  TempDir dir("convert");
  Rng rng(4);
  std::vector<Mask> frames;
  for (int t = 0; t < 4; ++t) frames.push_back(gateseg::test::random_blobs(rng, 13, 9));
  const MaskSequence seq(frames);
  write_png_sequence(dir.path() / "png", seq);
  convert_masks(dir.path() / "png", dir.path() / "seq.json");
  EXPECT_EQ(load_mask_source(dir.path() / "seq.json", 13, 9, 4), seq);
  convert_masks(dir.path() / "seq.json", dir.path() / "back");
  EXPECT_EQ(load_mask_source(dir.path() / "back", 13, 9, 4), seq);
}

TEST(Formats, NpyAndHeadRoundTrip) {
  TempDir dir("npy");
  Rng rng(6);
  std::vector<double> v(2 * 3 * 5);
  for (auto& x : v) x = rng.normal();
  const FeatureTensor f(2, 3, 5, v);
  write_npy_tensor(dir.path() / "f.npy", f);
  const auto back = read_npy_tensor(dir.path() / "f.npy");
  EXPECT_EQ(back.values(), f.values());
  EXPECT_EQ(back.dim(), 5u);
  EXPECT_EQ(tensor_from_json(tensor_to_json(f)).values(), f.values());

  const auto head = ExistenceHead::init(5, 3, 11);
  EXPECT_EQ(head_from_json(head_to_json(head, 11)), head);
}

TEST(Evaluate, MatchesLibraryAggregate) {
  TempDir dir("eval");
  const auto sc = synth::gen_scenario(small("overlap", 3));
  export_scenario(sc, dir.path(), MaskFormat::png);
  const auto m = load_manifest(dir.path() / "manifest.json");
  RunSettings s;
  s.radius = 1;
  const auto ev = evaluate_manifest(m, s);
  EXPECT_EQ(ev.report, aggregate(sc.queries, 1, EmptyGtPolicy::include_full_credit));

  s.tau = 0.5;
  s.jobs = 3;
  const auto gated = evaluate_manifest(m, s);
  std::vector<QueryRecord> qs = sc.queries;
  for (auto& q : qs) q.pred = apply_gate(*q.existence_prob, GatingConfig(0.5), q.pred);
  EXPECT_EQ(gated.report, aggregate(qs, 1, EmptyGtPolicy::include_full_credit));
}

TEST(Evaluate, PerfectDatasetRow) {
  TempDir dir("perfect");
  export_scenario(synth::gen_scenario(small("perfect", 1)), dir.path(), MaskFormat::rle);
  const auto ev = evaluate_manifest(load_manifest(dir.path() / "manifest.json"), RunSettings{});
  EXPECT_EQ(table_row(ev.report), "1.00,1.00,1.00,1.00,1.00,1.00");
}

TEST(Evaluate, HeadFillsMissingProbabilities) {
  TempDir dir("head");
  const auto sc = synth::gen_scenario(small("separable", 5));
  export_scenario(sc, dir.path(), MaskFormat::rle);
  json doc = parse_json_file(dir.path() / "manifest.json");
  for (auto& q : doc["queries"]) q.erase("existence_prob");
  write_text(dir.path() / "manifest.json", doc.dump());
  const auto m = load_manifest(dir.path() / "manifest.json");
  RunSettings s;
  s.tau = 0.5;
  EXPECT_THROW(evaluate_manifest(m, s), ValidationError);

  const auto head = ExistenceHead::init(sc.config.feature_dim, 4, 1);
  write_text(dir.path() / "head.json", head_to_json(head, 1).dump());
  s.head_path = dir.path() / "head.json";
  const auto ev = evaluate_manifest(m, s);
  for (std::size_t i = 0; i < ev.queries.size(); ++i) {
    EXPECT_NEAR(*ev.queries[i].existence_prob, forward(head, *sc.queries[i].features).p, 1e-15);
  }
}

TEST(Reports, TableOneReplay) {
  // 60 queries: 50 present (41 found, 9 missed), 10 absent (7 rejected, 3 hallucinated)
  std::vector<QueryMetrics> ms;
  for (int i = 0; i < 41; ++i) ms.push_back({"p" + std::to_string(i), 0.52 * 50 / 41, 0.56 * 50 / 41, true, true});
  for (int i = 0; i < 9; ++i) ms.push_back({"m" + std::to_string(i), 0.0, 0.0, true, false});
  for (int i = 0; i < 7; ++i) ms.push_back({"n" + std::to_string(i), std::nullopt, std::nullopt, false, false});
  for (int i = 0; i < 3; ++i) ms.push_back({"h" + std::to_string(i), std::nullopt, std::nullopt, false, true});
  const auto r = reduce_metrics(ms, EmptyGtPolicy::exclude);
  EXPECT_NEAR(r.j, 0.52, 1e-12);
  EXPECT_NEAR(r.f, 0.56, 1e-12);
  EXPECT_NEAR(*r.n_acc, 0.70, 1e-12);
  EXPECT_NEAR(*r.t_acc, 0.82, 1e-12);
  EXPECT_NEAR(*r.final, 0.68, 0.01);
}

TEST(Reports, UndefinedMetricsPrintNa) {
  AggregateReport r;
  r.j = r.f = r.jf = 0.5;
  r.n_acc = 1.0;
  EXPECT_EQ(table_row(r), "0.50,0.50,0.50,1.00,n/a,n/a");
}

TEST(Sweep, GridParsing) {
  const auto g = parse_grid("0:1:0.1");
  ASSERT_EQ(g.size(), 11u);
  EXPECT_EQ(g[3], 0.3);
  EXPECT_EQ(g.back(), 1.0);
  EXPECT_EQ(parse_grid("0:1:0.01").size(), 101u);
  EXPECT_EQ(parse_grid("0.2,0.8"), (std::vector<double>{0.2, 0.8}));
  EXPECT_THROW(parse_grid("0:1:0"), ValidationError);
  EXPECT_THROW(parse_grid("a,b"), ValidationError);
}

TEST(Sweep, ManifestSweepMatchesLibrary) {
  TempDir dir("sweep");
  const auto sc = synth::gen_scenario(small("overlap", 9));
  export_scenario(sc, dir.path(), MaskFormat::rle);
  RunSettings s;
  s.radius = 1;
  s.jobs = 2;
  const auto grid = parse_grid("0:1:0.05");
  const auto run = sweep_manifest(load_manifest(dir.path() / "manifest.json"), grid, s);
  const auto lib = sweep(sc.queries, grid, 1, EmptyGtPolicy::include_full_credit);
  ASSERT_EQ(run.result.grid.size(), lib.grid.size());
  for (std::size_t i = 0; i < lib.grid.size(); ++i) EXPECT_EQ(run.result.grid[i].report, lib.grid[i].report);
}

TEST(Train, RefusesSingleClass) {
  std::vector<LabeledTensor> data{{FeatureTensor(1, 1, 2, {1, 2}), 1}, {FeatureTensor(1, 1, 2, {3, 4}), 1}};
  try {
    train_gate(data, TrainSettings{});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(has_issue(e, "single_class"));
  }
}

TEST(Cli, ExitCodesAndDeterminism) {
  TempDir dir("cli");
  const std::string d = dir.path().string();
  ASSERT_EQ(run_cli("synth --preset separable --seed 3 --out " + d + "/data"), kOk);
  EXPECT_EQ(run_cli("--help"), kOk);
  EXPECT_EQ(run_cli("evaluate"), kValidationError);
  EXPECT_EQ(run_cli("evaluate --manifest " + d + "/nothing.json"), kValidationError);
  EXPECT_EQ(run_cli("evaluate --manifest " + d + "/data/manifest.json --empty-gt-policy bogus"), kValidationError);

  ASSERT_EQ(run_cli("evaluate --no-timestamp --jobs 1 --manifest " + d + "/data/manifest.json --out " + d + "/a"), kOk);
  ASSERT_EQ(run_cli("evaluate --no-timestamp --jobs 4 --manifest " + d + "/data/manifest.json --out " + d + "/b"), kOk);
  EXPECT_EQ(read_text(dir.path() / "a/report.json"), read_text(dir.path() / "b/report.json"));
  EXPECT_EQ(read_text(dir.path() / "a/report.csv"), read_text(dir.path() / "b/report.csv"));

  ASSERT_EQ(run_cli("train-gate --epochs 50 --features " + d + "/data/features.json --out " + d + "/t1"), kOk);
  ASSERT_EQ(run_cli("train-gate --epochs 50 --features " + d + "/data/features.json --out " + d + "/t2"), kOk);
  EXPECT_EQ(read_text(dir.path() / "t1/head.json"), read_text(dir.path() / "t2/head.json"));
  EXPECT_EQ(read_text(dir.path() / "t1/loss.csv"), read_text(dir.path() / "t2/loss.csv"));

  ASSERT_EQ(run_cli("sweep --grid 0:1:0.1 --manifest " + d + "/data/manifest.json --out " + d + "/s"), kOk);
  EXPECT_TRUE(fs::exists(dir.path() / "s/sweep.csv"));

  // corrupt one mask source: data error
  write_text(dir.path() / "data/pred/q00000.json", "[]");
  EXPECT_EQ(run_cli("evaluate --manifest " + d + "/data/manifest.json --out " + d + "/c"), kDataError);

  // absent-only dataset under exclude: no query contributes to J/F
  ASSERT_EQ(run_cli("synth --preset perfect --out " + d + "/p"), kOk);
  json doc = parse_json_file(dir.path() / "p/manifest.json");
  json kept = json::array();
  for (auto& q : doc["queries"]) {
    if (!indicator(load_mask_source(dir.path() / "p" / q["gt"].get<std::string>(), 64, 48, 6))) kept.push_back(q);
  }
  ASSERT_FALSE(kept.empty());
  doc["queries"] = kept;
  write_text(dir.path() / "p/manifest.json", doc.dump());
  EXPECT_EQ(run_cli("evaluate --empty-gt-policy exclude --manifest " + d + "/p/manifest.json --out " + d + "/u"),
            kMetricUndefined);
}
