#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "deeplcc/config.hpp"
#include "deeplcc/sim.hpp"

namespace deeplcc::commands {

// exit codes shared with the CLI front end
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitSolver = 3;

enum class RunMode { DeepLcc, Masked, Mpc, Hdv };
RunMode run_mode_from_name(const std::string& name);
const char* run_mode_name(RunMode m);

/// Collect offline data per the config; writes dataset.csv and
/// certificate.txt into out_dir.
int cmd_collect(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct RunOutput {
  RunLog log;
  MetricsReport metrics;
  long solver_failures = 0;
  double mean_solve_seconds = 0.0;
  double max_solve_seconds = 0.0;
  Eigen::Index decision_dim = 0;
};

/// Execute one closed-loop scenario in the given mode. Writes run_log.csv
/// and summary.txt; data-driven modes read cfg.dataset_path.
int cmd_run(const RunConfig& cfg, RunMode mode, const std::filesystem::path& out_dir,
            RunOutput* out = nullptr);

/// The closed loop behind cmd_run, reusable in-process.
RunOutput execute_run(const RunConfig& cfg, RunMode mode);

/// Metric table across run logs; percentage deltas are against the first.
int cmd_compare(const std::vector<std::filesystem::path>& logs,
                const std::filesystem::path& out_dir);

/// True-vs-masked side-by-side trajectories, naive-attack errors and K
/// diversity witnesses for the configured scenario.
int cmd_mask_demo(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct SweepPoint {
  MatrixKind kind = MatrixKind::Hankel;
  Eigen::Index cols = 0;
  std::uint64_t seed = 0;
  double closed_loop_cost = 0.0;
};

/// Fresh data collection + closed loop per (columns, seed) pair; runs are
/// independent and may execute on a small thread pool.
std::vector<SweepPoint> column_sweep(const RunConfig& cfg, MatrixKind kind,
                                     const std::vector<Eigen::Index>& columns, int seeds,
                                     int threads);

/// Excitation ranks and sample bounds for a dataset; optional closed-loop
/// cost sweep over column counts.
int cmd_matrix_info(const RunConfig& cfg, const std::filesystem::path& dataset,
                    const std::vector<Eigen::Index>& sweep_columns, int sweep_seeds,
                    const std::filesystem::path& out_dir);

}  // namespace deeplcc::commands
