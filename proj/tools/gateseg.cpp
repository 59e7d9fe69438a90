// gateseg: evaluation, gating sweeps and existence-head training for
// referring video object segmentation outputs.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gateseg/harness/commands.hpp"

namespace {

using namespace gateseg;
using namespace gateseg::harness;

struct CommonFlags {
  std::string manifest;
  std::string out = ".";
  std::optional<int> radius;
  std::string policy;
  std::optional<unsigned> jobs;
  std::string head;
  bool no_timestamp = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--manifest", manifest, "Dataset manifest (JSON)")->required();
    cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--radius", radius, "Boundary tolerance in pixels (default: 0.8% of the diagonal)");
    cmd->add_option("--empty-gt-policy", policy, "include-full-credit | exclude")
        ->check(CLI::IsMember({"include-full-credit", "exclude"}));
    cmd->add_option("--jobs", jobs, "Worker threads (default: $GATESEG_JOBS or all cores)");
    cmd->add_option("--head", head, "Existence head JSON used for queries without existence_prob");
  }

  RunSettings settings() const {
    RunSettings s;
    s.radius = radius;
    if (!policy.empty()) s.policy = parse_policy(policy);
    if (!head.empty()) s.head_path = head;
    s.jobs = jobs.value_or(default_jobs());
    s.timestamp = !no_timestamp;
    return s;
  }
};

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"gateseg: hallucination-aware evaluation and existence gating for referring VOS"};
  app.require_subcommand(1);

  CommonFlags eval_flags;
  std::optional<double> eval_tau;
  auto* evaluate = app.add_subcommand("evaluate", "Score a manifest; writes report.json and report.csv");
  eval_flags.attach(evaluate);
  evaluate->add_option("--tau", eval_tau, "Gate predictions with existence_prob < tau")->check(CLI::Range(0.0, 1.0));
  evaluate->add_flag("--no-timestamp", eval_flags.no_timestamp, "Omit generated_at from report.json");

  CommonFlags sweep_flags;
  std::string grid = "0:1:0.01";
  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate every gating threshold in a grid; writes sweep.csv/json");
  sweep_flags.attach(sweep_cmd);
  sweep_cmd->add_option("--grid", grid, "a:b:step or comma-separated thresholds")->capture_default_str();

  std::string features;
  std::string train_out = ".";
  TrainSettings train_settings;
  auto* train_cmd = app.add_subcommand("train-gate", "Train the existence head; writes head.json and loss.csv");
  train_cmd->add_option("--features", features, "Feature dataset JSON")->required();
  train_cmd->add_option("--lr", train_settings.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--epochs", train_settings.epochs, "Full-batch epochs")->capture_default_str();
  train_cmd->add_option("--hidden", train_settings.hidden, "Hidden units")->capture_default_str();
  train_cmd->add_option("--seed", train_settings.seed, "Initialization seed")->capture_default_str();
  train_cmd->add_option("--out", train_out, "Output directory");

  std::string preset = "separable";
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  std::string synth_format = "rle";
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset in manifest layout");
  synth_cmd->add_option("--preset", preset, "separable | perfect | overlap | sweep | throughput")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--mask-format", synth_format, "rle | png")
      ->check(CLI::IsMember({"rle", "png"}))
      ->capture_default_str();

  std::string convert_from, convert_to;
  auto* convert_cmd = app.add_subcommand("convert", "PNG frame directory <-> RLE-JSON file");
  convert_cmd->add_option("--from", convert_from, "Source: PNG directory or RLE-JSON file")->required();
  convert_cmd->add_option("--to", convert_to, "Destination")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidationError;
  }

  return run_guarded([&] {
    if (*evaluate) {
      auto s = eval_flags.settings();
      s.tau = eval_tau;
      const auto manifest = load_manifest(eval_flags.manifest);
      const auto ev = evaluate_manifest(manifest, s);
      write_evaluation(ev, eval_flags.out, s.timestamp);
      std::cout << kTableHeader << "\n" << table_row(ev.report) << "\n";
    } else if (*sweep_cmd) {
      const auto s = sweep_flags.settings();
      const auto taus = parse_grid(grid);
      const auto manifest = load_manifest(sweep_flags.manifest);
      const auto run = sweep_manifest(manifest, taus, s);
      write_sweep(run, sweep_flags.out);
      if (auto best = run.result.best()) {
        std::cout << "best tau " << format_tau(best->tau) << ": " << kTableHeader << " = "
                  << table_row(best->report) << "\n";
      } else {
        std::cout << "best tau: n/a (Final undefined at every threshold)\n";
      }
    } else if (*train_cmd) {
      const auto data = load_feature_dataset(features);
      const auto run = train_gate(data, train_settings);
      write_training(run, train_out);
      std::cout << "final loss " << format_real(run.result.final_loss) << "\n";
    } else if (*synth_cmd) {
      const auto n = export_generated(synth::preset(preset, synth_seed), synth_out,
                                      synth_format == "png" ? MaskFormat::png : MaskFormat::rle);
      std::cout << "wrote " << n << " queries to " << synth_out << "\n";
    } else if (*convert_cmd) {
      convert_masks(convert_from, convert_to);
    }
  });
}
