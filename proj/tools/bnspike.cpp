// Command-line front end: simulate, verify, plot, sweep, gen-data, constants.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bnspike/bnspike.hpp"
#include "bnspike/harness/commands.hpp"

namespace {

using namespace bnspike;
using namespace bnspike::harness;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<std::string> loss;
  std::optional<std::string> mode;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration file");
  cmd->add_option("--seed", c.seed, "override the run seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--format", c.format, "artifact format")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--loss", c.loss, "loss function")->check(CLI::IsMember({"square", "logistic"}));
  cmd->add_option("--mode", c.mode, "step implementation")->check(CLI::IsMember({"vector", "recurrence"}));
}

/// Config file first, then command-line overrides, then validation.
RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.out) cfg.output.dir = *c.out;
  if (c.format) cfg.output.format = parse_format(*c.format);
  if (c.loss) cfg.gd.loss = parse_loss(*c.loss);
  if (c.mode) cfg.gd.mode = parse_mode(*c.mode);
  cfg.gd.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bnspike: batch-normalized regression under gradient descent"};
  app.require_subcommand(1);

  Common sim, ver, swp, gen, con;
  auto* simulate = app.add_subcommand("simulate", "run one trajectory and write it with a spike summary");
  add_common(simulate, sim);

  auto* verify = app.add_subcommand("verify", "score the theorem clauses; exit 1 if any applicable clause fails");
  add_common(verify, ver);
  std::optional<std::string> trajectory_file;
  verify->add_option("--trajectory", trajectory_file, "score an existing trajectory file instead of a fresh run");

  auto* plot = app.add_subcommand("plot", "render trajectory files as SVG plus plot-data CSV");
  std::vector<std::string> plot_files;
  std::string plot_out = "out";
  std::optional<std::string> sharpness_file;
  bool log_risk = false;
  double plot_edge_tol = 0.0;
  plot->add_option("files", plot_files, "trajectory files (.csv or .json)")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "output directory");
  plot->add_option("--sharpness", sharpness_file, "t,sharpness CSV to overlay")->check(CLI::ExistingFile);
  plot->add_flag("--log-risk", log_risk, "log-scale risk axis");
  plot->add_option("--edge-tol", plot_edge_tol, "edge classifier tolerance");

  auto* sweep = app.add_subcommand("sweep", "run the eta x eta_alpha x seed grid from the config");
  add_common(sweep, swp);

  auto* gendata = app.add_subcommand("gen-data", "generate the configured dataset and write it");
  add_common(gendata, gen);

  auto* constants = app.add_subcommand("constants", "print the logistic-regime constants for the configured run");
  add_common(constants, con);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      const RunConfig cfg = resolve(sim);
      SimulateOutput o = cmd_simulate(cfg);
      std::cout << o.trajectory_path << '\n' << to_json(o.ev.spike).dump(2) << '\n';
    } else if (*verify) {
      const RunConfig cfg = resolve(ver);
      VerifyOutput o = cmd_verify(cfg, trajectory_file);
      if (cfg.output.format == OutputFormat::Json) {
        std::cout << to_json(o.board).dump(2) << '\n';
      } else {
        render_table(std::cout, o.board);
      }
      return o.board.failed() ? 1 : 0;
    } else if (*plot) {
      PlotOptions opt;
      opt.log_risk = log_risk;
      opt.edge_tol = plot_edge_tol;
      if (sharpness_file) {
        std::ifstream in(*sharpness_file);
        opt.sharpness = read_sharpness_csv(in);
      }
      for (const auto& path : cmd_plot(plot_files, plot_out, opt)) std::cout << path << '\n';
    } else if (*sweep) {
      const RunConfig cfg = resolve(swp);
      nlohmann::json summary = cmd_sweep(cfg);
      std::cout << summary["clauses"].dump(2) << '\n';
      if (summary["errors"].get<long>() > 0) {
        std::cerr << summary["errors"].get<long>() << " cell(s) failed to run\n";
      }
    } else if (*gendata) {
      std::cout << cmd_gen_data(resolve(gen)) << '\n';
    } else if (*constants) {
      std::cout << cmd_constants(resolve(con)).dump(2) << '\n';
    }
  } catch (const bnspike::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
