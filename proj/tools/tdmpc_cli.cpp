// Command-line entry point: run, compare, export, validate-config.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tdmpc/config.hpp"
#include "tdmpc/csv.hpp"
#include "tdmpc/simulation.hpp"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  std::optional<std::string> output_dir;
  std::optional<std::string> variant;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Override the random seed");
  cmd->add_option("--duration", o.duration, "Override the run duration in seconds");
  cmd->add_option("-o,--output-dir", o.output_dir, "Directory for the log files");
}

tdmpc::ExperimentConfig load(const std::string& path, const Overrides& o) {
  tdmpc::ExperimentConfig c = tdmpc::load_experiment_config(path);
  if (o.seed) c.seed = *o.seed;
  if (o.duration) c.duration = *o.duration;
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.variant) c.controller.variant = tdmpc::parse_variant(*o.variant);
  c.validate();
  return c;
}

void print_metrics(const tdmpc::RunMetrics& m) {
  using tdmpc::format_number;
  std::cout << "variant " << m.variant << ", " << m.samples << " samples"
            << (m.reached_end ? ", reached path end" : "") << "\n"
            << "  straight mean error  tractor " << format_number(100 * m.straight_tractor_mean)
            << " cm, trailer " << format_number(100 * m.straight_trailer_mean) << " cm\n"
            << "  curve mean error     tractor " << format_number(100 * m.curve_tractor_mean)
            << " cm, trailer " << format_number(100 * m.curve_trailer_mean) << " cm\n"
            << "  solve time mean      tractor " << format_number(1e3 * m.tractor_timing.mean)
            << " ms, trailer " << format_number(1e3 * m.trailer_timing.mean) << " ms, central "
            << format_number(1e3 * m.central_timing.mean) << " ms, estimator "
            << format_number(1e3 * m.estimator_timing.mean) << " ms\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed NMPC / NMHE tractor-trailer simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir;
  std::string export_dir;
  std::vector<std::string> variants = {"cooperative", "independent", "centralized",
                                       "decentralized"};
  Overrides o;

  CLI::App* run = app.add_subcommand("run", "Run one closed-loop experiment");
  run->add_option("config", config_path, "Experiment YAML file")->required()->check(CLI::ExistingFile);
  add_overrides(run, o);
  run->add_option("--variant", o.variant, "Override the controller variant");

  CLI::App* compare = app.add_subcommand("compare", "Run matched-seed experiments per variant");
  compare->add_option("config", config_path, "Experiment YAML file")
      ->required()
      ->check(CLI::ExistingFile);
  compare->add_option("--variants", variants, "Variants to compare")->delimiter(',');
  add_overrides(compare, o);

  CLI::App* exp = app.add_subcommand("export", "Write plot-ready CSV bundles from a run directory");
  exp->add_option("run_dir", run_dir, "Directory written by 'run'")
      ->required()
      ->check(CLI::ExistingDirectory);
  exp->add_option("-o,--output-dir", export_dir, "Bundle directory (default: <run_dir>/plots)");

  CLI::App* validate = app.add_subcommand("validate-config", "Parse and validate a config file");
  validate->add_option("config", config_path, "Experiment YAML file")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const tdmpc::ExperimentConfig c = load(config_path, o);
      print_metrics(tdmpc::run_experiment(c).metrics);
      if (!c.output_dir.empty()) std::cout << "logs written to " << c.output_dir << "\n";
      return 0;
    }
    if (*compare) {
      const tdmpc::ExperimentConfig c = load(config_path, o);
      std::vector<tdmpc::ControllerVariant> vs;
      for (const auto& v : variants) vs.push_back(tdmpc::parse_variant(v));
      const tdmpc::Comparison cmp = tdmpc::compare_variants(c, vs);
      tdmpc::write_comparison_csv(cmp, std::cout);
      for (const auto& check : cmp.checks) {
        std::cout << (check.passed ? "PASS " : "FAIL ") << check.name << " (" << check.detail
                  << ")\n";
      }
      return cmp.all_passed() ? 0 : 1;
    }
    if (*exp) {
      const std::filesystem::path out =
          export_dir.empty() ? std::filesystem::path(run_dir) / "plots" : std::filesystem::path(export_dir);
      tdmpc::export_plot_data(run_dir, out);
      std::cout << "bundles written to " << out << "\n";
      return 0;
    }
    if (*validate) {
      const tdmpc::ExperimentConfig c = tdmpc::load_experiment_config(config_path);
      std::cout << "ok: " << c.name << ", variant " << tdmpc::to_string(c.controller.variant)
                << ", path length " << tdmpc::format_number(c.trajectory.length()) << " m\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
