#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "deeplcc/commands.hpp"
#include "deeplcc/config.hpp"
#include "deeplcc/errors.hpp"
#include "deeplcc/linalg.hpp"
#include "deeplcc/qp.hpp"
#include "deeplcc/rng.hpp"

namespace {

deeplcc::RunConfig load_config(const std::string& path, std::uint64_t seed_override,
                               bool has_seed, const std::string& out_override) {
  deeplcc::RunConfig cfg = deeplcc::RunConfig::from_file(path);
  if (has_seed) {
    cfg.seed = seed_override;
    cfg.noise.seed = deeplcc::derive_seed(cfg.seed, "noise");
  }
  if (!out_override.empty()) cfg.out_dir = out_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"data-driven predictive platoon control with affine-masked privacy"};
  app.require_subcommand(1);

  std::string config_path, out_dir, mode = "deeplcc", data_path, sweep_spec;
  std::uint64_t seed = 0;
  bool has_seed = false;
  int sweep_seeds = 5;
  bool serial = false;
  std::vector<std::string> compare_logs;

  app.add_flag("--serial", serial, "disable the OpenMP kernels");

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* copt = cmd->add_option("--config", config_path, "configuration file");
    if (needs_config) copt->required();
    cmd->add_option("--out", out_dir, "output directory (overrides run.out)");
    cmd->add_option("--seed", seed, "top-level seed (overrides run.seed)")
        ->each([&](const std::string&) { has_seed = true; });
  };

  CLI::App* collect = app.add_subcommand("collect", "collect offline excitation data");
  add_common(collect, true);

  CLI::App* run = app.add_subcommand("run", "run one closed-loop scenario");
  add_common(run, true);
  run->add_option("--mode", mode, "deeplcc | masked | mpc | hdv");

  CLI::App* compare = app.add_subcommand("compare", "summarize metrics across run logs");
  compare->add_option("logs", compare_logs, "run_log.csv files")->required()->expected(-1);
  compare->add_option("--out", out_dir, "output directory");

  CLI::App* demo = app.add_subcommand("mask-demo", "masking, attack error and witnesses");
  add_common(demo, true);

  CLI::App* minfo = app.add_subcommand("matrix-info", "excitation ranks, bounds, column sweep");
  add_common(minfo, false);
  minfo->add_option("--data", data_path, "dataset CSV to certify");
  minfo->add_option("--sweep", sweep_spec, "comma-separated column counts for the cost sweep");
  minfo->add_option("--sweep-seeds", sweep_seeds, "seeds per sweep point");

  CLI11_PARSE(app, argc, argv);
  if (serial) deeplcc::linalg::set_parallel(false);

  try {
    if (collect->parsed()) {
      const auto cfg = load_config(config_path, seed, has_seed, out_dir);
      return deeplcc::commands::cmd_collect(cfg, cfg.out_dir);
    }
    if (run->parsed()) {
      const auto cfg = load_config(config_path, seed, has_seed, out_dir);
      return deeplcc::commands::cmd_run(cfg, deeplcc::commands::run_mode_from_name(mode),
                                        cfg.out_dir);
    }
    if (compare->parsed()) {
      std::vector<std::filesystem::path> paths(compare_logs.begin(), compare_logs.end());
      return deeplcc::commands::cmd_compare(paths, out_dir.empty() ? "." : out_dir);
    }
    if (demo->parsed()) {
      const auto cfg = load_config(config_path, seed, has_seed, out_dir);
      return deeplcc::commands::cmd_mask_demo(cfg, cfg.out_dir);
    }
    if (minfo->parsed()) {
      if (config_path.empty()) {
        std::cerr << "matrix-info needs --config for fleet and horizon information\n";
        return deeplcc::commands::kExitValidation;
      }
      const auto cfg = load_config(config_path, seed, has_seed, out_dir);
      std::vector<Eigen::Index> cols;
      if (!sweep_spec.empty()) {
        std::string tok;
        std::istringstream is(sweep_spec);
        while (std::getline(is, tok, ',')) cols.push_back(std::stol(tok));
      }
      return deeplcc::commands::cmd_matrix_info(
          cfg, data_path.empty() ? std::filesystem::path() : std::filesystem::path(data_path),
          cols, sweep_seeds, cfg.out_dir);
    }
  } catch (const deeplcc::Error& e) {
    std::cerr << "error (" << deeplcc::errc_name(e.code()) << "): " << e.what() << "\n";
    return deeplcc::commands::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return deeplcc::commands::kExitValidation;
  }
  return 0;
}
