#include "deeplcc/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include "deeplcc/csv.hpp"
#include "deeplcc/errors.hpp"
#include "deeplcc/linalg.hpp"
#include "deeplcc/privacy.hpp"
#include "deeplcc/rng.hpp"

namespace deeplcc::commands {

RunMode run_mode_from_name(const std::string& name) {
  if (name == "deeplcc") return RunMode::DeepLcc;
  if (name == "masked") return RunMode::Masked;
  if (name == "mpc") return RunMode::Mpc;
  if (name == "hdv") return RunMode::Hdv;
  throw Error(Errc::ConfigError, "mode must be deeplcc, masked, mpc or hdv");
}

const char* run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::DeepLcc: return "deeplcc";
    case RunMode::Masked: return "masked";
    case RunMode::Mpc: return "mpc";
    case RunMode::Hdv: return "all-hdv";
  }
  return "unknown";
}

int cmd_collect(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const Eigen::Index T = cfg.samples();
  const bool masked_order = cfg.masks.has_value();

  CollectResult result;
  try {
    result = collect_data(cfg.fleet, cfg.ovm, cfg.eq, cfg.excitation, T,
                          derive_seed(cfg.seed, "collect"), cfg.dt, cfg.noise,
                          cfg.controller.matrix_kind, cfg.controller.t_ini,
                          cfg.controller.horizon, masked_order);
  } catch (const Error& e) {
    if (e.code() == Errc::ExcitationFailure) {
      csv::write_text(out_dir / "certificate.txt",
                      std::string("exciting=false\nerror=") + e.what() + "\n");
      std::cerr << "collect: " << e.what() << "\n";
      return kExitValidation;
    }
    throw;
  }

  write_record_csv(out_dir / "dataset.csv", result.record);

  std::ostringstream cert;
  cert << "kind=" << matrix_kind_name(cfg.controller.matrix_kind) << "\n"
       << "samples=" << T << "\n"
       << "columns=" << columns_for_samples(cfg.controller.matrix_kind, T, cfg.controller.t_ini,
                                            cfg.controller.horizon)
       << "\n"
       << "required_order=" << result.required_order << "\n"
       << "exciting=" << (result.certificate.exciting ? "true" : "false") << "\n"
       << "rank=" << result.certificate.rank << "\n"
       << "required_rank=" << result.certificate.required << "\n"
       << "discarded_samples=" << result.certificate.discarded_samples << "\n"
       << "min_samples_bound="
       << min_samples(cfg.controller.matrix_kind, cfg.fleet.m(), cfg.fleet.n, cfg.controller.t_ini,
                      cfg.controller.horizon, masked_order)
       << "\n";
  csv::write_text(out_dir / "certificate.txt", cert.str());
  std::cout << "collect: " << T << " samples, "
            << columns_for_samples(cfg.controller.matrix_kind, T, cfg.controller.t_ini,
                                   cfg.controller.horizon)
            << " columns, exciting=" << (result.certificate.exciting ? "true" : "false") << "\n";
  return kExitOk;
}

namespace {

BlockMatrixSet blocks_from_record(const RunConfig& cfg, const TrajectoryRecord& rec) {
  return partition(cfg.controller.matrix_kind, rec.u_series(), rec.eps_series(), rec.y_series(),
                   cfg.controller.t_ini, cfg.controller.horizon);
}

}  // namespace

RunOutput execute_run(const RunConfig& cfg, RunMode mode) {
  RunOutput out;
  const CostWeights weights = CostWeights::make(cfg.fleet, cfg.controller);

  ControlCallback callback;  // empty for the all-HDV baseline
  std::unique_ptr<DeepLccController> ctrl;
  std::unique_ptr<MpcController> mpc;
  FleetMasks masks;

  if (mode == RunMode::DeepLcc || mode == RunMode::Masked) {
    TrajectoryRecord rec = read_record_csv(cfg.dataset_path);
    if (rec.u.rows() != cfg.fleet.m() || rec.y.rows() != cfg.fleet.n + cfg.fleet.m()) {
      throw Error(Errc::DimensionMismatch, "dataset dimensions do not match the fleet");
    }
    if (mode == RunMode::Masked) {
      if (!cfg.masks.has_value()) {
        throw Error(Errc::ConfigError, "masked mode needs a mask set in the config");
      }
      masks = *cfg.masks;
      rec = mask_dataset(rec, masks);
      const DeepLccProblemSpec spec =
          masked_problem_spec(weights, masks, cfg.fleet, cfg.controller, cfg.constraint_mode);
      ctrl = std::make_unique<DeepLccController>(cfg.fleet, blocks_from_record(cfg, rec), spec,
                                                 cfg.controller, cfg.solver);
      callback = [&](const Eigen::VectorXd& y, double eps, const Eigen::VectorXd&,
                     StepDiagnostics& diag) {
        const StepResult res = ctrl->step(mask_output(masks, y), eps);
        diag.solved = res.solved;
        diag.status = res.status;
        diag.objective = res.objective;
        diag.kkt_residual = res.kkt_residual;
        diag.iterations = res.iterations;
        diag.solve_seconds = res.solve_seconds;
        diag.flagged = res.flagged;
        return res.solved ? unmask_input(masks, res.applied_input)
                          : Eigen::VectorXd::Zero(cfg.fleet.m()).eval();
      };
    } else {
      const DeepLccProblemSpec spec =
          plain_problem_spec(cfg.fleet, weights, cfg.controller, cfg.ones_row);
      ctrl = std::make_unique<DeepLccController>(cfg.fleet, blocks_from_record(cfg, rec), spec,
                                                 cfg.controller, cfg.solver);
      callback = [&](const Eigen::VectorXd& y, double eps, const Eigen::VectorXd&,
                     StepDiagnostics& diag) {
        const StepResult res = ctrl->step(y, eps);
        diag.solved = res.solved;
        diag.status = res.status;
        diag.objective = res.objective;
        diag.kkt_residual = res.kkt_residual;
        diag.iterations = res.iterations;
        diag.solve_seconds = res.solve_seconds;
        diag.flagged = res.flagged;
        return res.applied_input;
      };
    }
    out.decision_dim = ctrl->decision_dim();
  } else if (mode == RunMode::Mpc) {
    const HdvLinearization lin = linearize(cfg.ovm, cfg.eq);
    const LinearDiscreteModel model = discretize(build_continuous(cfg.fleet, lin), cfg.dt);
    mpc = std::make_unique<MpcController>(model, weights, cfg.controller, cfg.solver);
    out.decision_dim = mpc->decision_dim();
    callback = [&](const Eigen::VectorXd&, double, const Eigen::VectorXd& x_state,
                   StepDiagnostics& diag) {
      const StepResult res = mpc->step(x_state);
      diag.solved = res.solved;
      diag.status = res.status;
      diag.objective = res.objective;
      diag.kkt_residual = res.kkt_residual;
      diag.iterations = res.iterations;
      diag.solve_seconds = res.solve_seconds;
      diag.flagged = res.flagged;
      return res.applied_input;
    };
  }

  out.log = simulate(cfg.scenario, cfg.fleet, cfg.ovm, cfg.eq, callback, cfg.noise, cfg.dt);
  out.metrics = compute_metrics(out.log, weights);

  long solves = 0;
  double total_t = 0.0;
  for (const auto& d : out.log.diagnostics) {
    if (!d.solved) continue;
    ++solves;
    total_t += d.solve_seconds;
    out.max_solve_seconds = std::max(out.max_solve_seconds, d.solve_seconds);
    if (d.flagged) ++out.solver_failures;
  }
  out.mean_solve_seconds = solves > 0 ? total_t / static_cast<double>(solves) : 0.0;
  return out;
}

int cmd_run(const RunConfig& cfg, RunMode mode, const std::filesystem::path& out_dir,
            RunOutput* out_ptr) {
  std::filesystem::create_directories(out_dir);
  RunOutput out = execute_run(cfg, mode);

  write_run_log_csv(out_dir / "run_log.csv", out.log);

  std::ostringstream sum;
  sum << "mode=" << run_mode_name(mode) << "\n"
      << "fleet_n=" << cfg.fleet.n << "\n"
      << "fleet_m=" << cfg.fleet.m() << "\n"
      << "matrix_kind=" << matrix_kind_name(cfg.controller.matrix_kind) << "\n"
      << "decision_dim=" << out.decision_dim << "\n"
      << "total_fuel_ml=" << csv::format_double(out.metrics.total_fuel) << "\n"
      << "aave=" << csv::format_double(out.metrics.aave) << "\n"
      << "quadratic_cost=" << csv::format_double(out.metrics.quadratic_cost) << "\n"
      << "collision_events=" << out.metrics.collision_events << "\n"
      << "aave_excluded_steps=" << out.metrics.aave_excluded_steps << "\n"
      << "solver_failures=" << out.solver_failures << "\n"
      << "# timing: mean_solve_ms=" << out.mean_solve_seconds * 1e3
      << " max_solve_ms=" << out.max_solve_seconds * 1e3 << "\n";
  csv::write_text(out_dir / "summary.txt", sum.str());
  std::cout << sum.str();

  const int exit_code = out.solver_failures > 0 ? kExitSolver : kExitOk;
  if (out_ptr != nullptr) *out_ptr = std::move(out);
  return exit_code;
}

namespace {

struct LogMetrics {
  double fuel = 0.0;
  double aave = 0.0;
  Eigen::MatrixXd inputs;  // m x T for the gap column
};

LogMetrics metrics_from_log_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read_table(path);
  double dt = 0.05;
  for (const auto& c : t.comments) {
    const auto pos = c.find("dt=");
    if (pos != std::string::npos) dt = std::stod(c.substr(pos + 3));
  }
  int n_vehicles = 0, m = 0;
  for (const auto& h : t.header) {
    if (h.rfind("v_", 0) == 0) ++n_vehicles;
    if (h.rfind("u_", 0) == 0) ++m;
  }
  const int fuel_col = t.column("fuel_rate_total");
  if (fuel_col < 0 || n_vehicles < 2) {
    throw Error(Errc::IoError, "not a run log: " + path.string());
  }

  LogMetrics lm;
  const Eigen::Index T = t.data.rows();
  for (Eigen::Index k = 0; k < T; ++k) lm.fuel += t.data(k, fuel_col) * dt;

  const int v0_col = t.column("v_0");
  double sum = 0.0;
  long count = 0;
  for (Eigen::Index k = 0; k < T; ++k) {
    const double v0 = t.data(k, v0_col);
    if (v0 <= kAaveVelocityCutoff) continue;
    for (int i = 1; i < n_vehicles; ++i) {
      sum += std::abs(t.data(k, t.column("v_" + std::to_string(i))) - v0) / v0;
      ++count;
    }
  }
  lm.aave = count > 0 ? sum / static_cast<double>(count) : 0.0;

  lm.inputs.resize(m, T);
  for (int i = 0; i < m; ++i) {
    const int c = t.column("u_" + std::to_string(i + 1));
    lm.inputs.row(i) = t.data.col(c).transpose();
  }
  return lm;
}

}  // namespace

int cmd_compare(const std::vector<std::filesystem::path>& logs,
                const std::filesystem::path& out_dir) {
  if (logs.empty()) throw Error(Errc::ConfigError, "compare needs at least one run log");
  std::filesystem::create_directories(out_dir);

  std::vector<LogMetrics> ms;
  ms.reserve(logs.size());
  for (const auto& p : logs) ms.push_back(metrics_from_log_csv(p));

  csv::Table t;
  t.header = {"log", "fuel_ml", "aave", "fuel_delta_pct", "aave_delta_pct", "max_input_gap"};
  std::ostringstream text;
  text << "log,fuel_ml,aave,fuel_delta_pct,aave_delta_pct,max_input_gap\n";
  t.data.resize(static_cast<Eigen::Index>(ms.size()), 6);
  for (size_t i = 0; i < ms.size(); ++i) {
    const double dfuel = 100.0 * (ms[i].fuel - ms[0].fuel) / ms[0].fuel;
    const double daave = ms[0].aave > 0.0 ? 100.0 * (ms[i].aave - ms[0].aave) / ms[0].aave : 0.0;
    double gap = 0.0;
    if (ms[i].inputs.rows() == ms[0].inputs.rows() && ms[i].inputs.cols() == ms[0].inputs.cols() &&
        ms[i].inputs.size() > 0) {
      gap = (ms[i].inputs - ms[0].inputs).cwiseAbs().maxCoeff();
    }
    t.data(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
    t.data(static_cast<Eigen::Index>(i), 1) = ms[i].fuel;
    t.data(static_cast<Eigen::Index>(i), 2) = ms[i].aave;
    t.data(static_cast<Eigen::Index>(i), 3) = dfuel;
    t.data(static_cast<Eigen::Index>(i), 4) = daave;
    t.data(static_cast<Eigen::Index>(i), 5) = gap;
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%.4f,%.6f,%+.2f%%,%+.2f%%,%.3g\n",
                  logs[i].filename().string().c_str(), ms[i].fuel, ms[i].aave, dfuel, daave, gap);
    text << line;
  }
  csv::write_table(out_dir / "compare.csv", t);
  csv::write_text(out_dir / "compare.txt", text.str());
  std::cout << text.str();
  return kExitOk;
}

int cmd_mask_demo(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  if (!cfg.masks.has_value()) {
    throw Error(Errc::ConfigError, "mask-demo needs a mask set in the config");
  }
  std::filesystem::create_directories(out_dir);
  const FleetMasks& masks = *cfg.masks;

  RunOutput run = execute_run(cfg, RunMode::Masked);
  const TrajectoryRecord& truth = run.log.record;
  const TrajectoryRecord masked = mask_dataset(truth, masks);

  // side-by-side trajectories of the exchanged signals
  {
    const int m = cfg.fleet.m();
    csv::Table t;
    t.comments.push_back(" true vs exchanged (masked) CAV signals");
    t.header.push_back("t");
    for (int i = 1; i <= m; ++i) {
      const std::string s = std::to_string(i);
      t.header.push_back("s_err_" + s);
      t.header.push_back("v_err_" + s);
      t.header.push_back("u_" + s);
      t.header.push_back("masked_s_err_" + s);
      t.header.push_back("masked_v_err_" + s);
      t.header.push_back("masked_u_" + s);
    }
    const Eigen::Index T = truth.length();
    t.data.resize(T, static_cast<Eigen::Index>(t.header.size()));
    for (Eigen::Index k = 0; k < T; ++k) {
      Eigen::Index c = 0;
      t.data(k, c++) = static_cast<double>(k) * truth.dt;
      for (int i = 0; i < m; ++i) {
        t.data(k, c++) = truth.y(2 * i, k);
        t.data(k, c++) = truth.y(2 * i + 1, k);
        t.data(k, c++) = truth.u(i, k);
        t.data(k, c++) = masked.y(2 * i, k);
        t.data(k, c++) = masked.y(2 * i + 1, k);
        t.data(k, c++) = masked.u(i, k);
      }
    }
    csv::write_table(out_dir / "side_by_side.csv", t);
  }

  const NaiveAttackReport attack = naive_attacker_estimate(truth, masked, cfg.fleet);
  std::ostringstream rep;
  for (int i = 0; i < cfg.fleet.m(); ++i) {
    rep << "cav_" << (i + 1) << "_spacing_rmse=" << csv::format_double(attack.spacing_rmse[i])
        << "\ncav_" << (i + 1) << "_velocity_rmse=" << csv::format_double(attack.velocity_rmse[i])
        << "\ncav_" << (i + 1) << "_input_rmse=" << csv::format_double(attack.input_rmse[i])
        << "\n";
  }
  csv::write_text(out_dir / "attack_rmse.txt", rep.str());

  // witnesses against the first CAV's exchanged sequences
  {
    Eigen::MatrixXd mx(2, masked.length());
    mx.row(0) = masked.y.row(0);
    mx.row(1) = masked.y.row(1);
    const Eigen::VectorXd mu = masked.u.row(0).transpose();
    const auto witnesses =
        diversity_witnesses(mx, mu, cfg.demo_witnesses, derive_seed(cfg.seed, "witnesses"));

    csv::Table t;
    t.header = {"witness", "P00", "P01", "P10", "P11", "l0", "l1", "p_u", "l_u",
                "remask_residual"};
    t.data.resize(static_cast<Eigen::Index>(witnesses.size()), 10);
    for (size_t i = 0; i < witnesses.size(); ++i) {
      const auto& w = witnesses[i];
      const Eigen::Index r = static_cast<Eigen::Index>(i);
      t.data(r, 0) = static_cast<double>(i);
      t.data(r, 1) = w.state_map.P(0, 0);
      t.data(r, 2) = w.state_map.P(0, 1);
      t.data(r, 3) = w.state_map.P(1, 0);
      t.data(r, 4) = w.state_map.P(1, 1);
      t.data(r, 5) = w.state_map.l[0];
      t.data(r, 6) = w.state_map.l[1];
      t.data(r, 7) = w.input_map.p;
      t.data(r, 8) = w.input_map.l;
      t.data(r, 9) = w.remask_residual;
    }
    csv::write_table(out_dir / "witnesses.csv", t);
  }

  std::cout << "mask-demo: wrote side_by_side.csv, attack_rmse.txt, witnesses.csv\n"
            << rep.str();
  return kExitOk;
}

std::vector<SweepPoint> column_sweep(const RunConfig& cfg, MatrixKind kind,
                                     const std::vector<Eigen::Index>& columns, int seeds,
                                     int threads) {
  std::vector<SweepPoint> points;
  for (Eigen::Index cols : columns) {
    for (int s = 0; s < seeds; ++s) {
      SweepPoint p;
      p.kind = kind;
      p.cols = cols;
      p.seed = derive_seed(cfg.seed, "sweep", static_cast<std::uint64_t>(cols) * 1000 +
                                                  static_cast<std::uint64_t>(s));
      points.push_back(p);
    }
  }

  const auto run_one = [&](SweepPoint& p) {
    RunConfig local = cfg;
    local.controller.matrix_kind = kind;
    local.columns = p.cols;
    local.seed = p.seed;
    local.noise.seed = derive_seed(p.seed, "noise");

    const CollectResult data = collect_data(
        local.fleet, local.ovm, local.eq, local.excitation, local.samples(),
        derive_seed(p.seed, "collect"), local.dt, local.noise, kind, local.controller.t_ini,
        local.controller.horizon, local.masks.has_value());
    const CostWeights weights = CostWeights::make(local.fleet, local.controller);
    const BlockMatrixSet blocks =
        partition(kind, data.record.u_series(), data.record.eps_series(), data.record.y_series(),
                  local.controller.t_ini, local.controller.horizon);
    DeepLccController ctrl(local.fleet, blocks,
                           plain_problem_spec(local.fleet, weights, local.controller,
                                              local.ones_row),
                           local.controller, local.solver);
    const ControlCallback cb = [&](const Eigen::VectorXd& y, double eps, const Eigen::VectorXd&,
                                   StepDiagnostics& diag) {
      const StepResult res = ctrl.step(y, eps);
      diag.solved = res.solved;
      diag.flagged = res.flagged;
      return res.applied_input;
    };
    const RunLog log =
        simulate(local.scenario, local.fleet, local.ovm, local.eq, cb, local.noise, local.dt);
    p.closed_loop_cost = quadratic_cost(log, weights);
  };

  threads = std::max(1, threads);
  if (threads == 1) {
    for (auto& p : points) run_one(p);
    return points;
  }

  // outer parallelism over independent runs: drop to serial kernels so the
  // machine is not oversubscribed (results are bitwise identical either way)
  const bool was_parallel = linalg::parallel_enabled();
  linalg::set_parallel(false);
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      while (true) {
        const size_t i = next.fetch_add(1);
        if (i >= points.size()) break;
        run_one(points[i]);
      }
    });
  }
  for (auto& th : pool) th.join();
  linalg::set_parallel(was_parallel);
  return points;
}

int cmd_matrix_info(const RunConfig& cfg, const std::filesystem::path& dataset,
                    const std::vector<Eigen::Index>& sweep_columns, int sweep_seeds,
                    const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const int t_ini = cfg.controller.t_ini, N = cfg.controller.horizon;
  const int n = cfg.fleet.n, m = cfg.fleet.m();

  std::ostringstream info;
  if (!dataset.empty()) {
    const TrajectoryRecord rec = read_record_csv(dataset);
    const Series combined = rec.combined_input_series();
    const int hankel_order = t_ini + N + 2 * n;
    const auto hc = is_hankel_exciting(combined, hankel_order);
    info << "samples=" << rec.length() << "\n"
         << "hankel_columns=" << columns_for_samples(MatrixKind::Hankel, rec.length(), t_ini, N)
         << "\n"
         << "page_columns=" << columns_for_samples(MatrixKind::Page, rec.length(), t_ini, N)
         << "\n"
         << "hankel_order=" << hankel_order << "\n"
         << "hankel_exciting=" << (hc.exciting ? "true" : "false") << "\n"
         << "hankel_rank=" << hc.rank << "/" << hc.required << "\n";
    if (rec.length() >= static_cast<Eigen::Index>(t_ini + N) * (2 * n + 1)) {
      const auto pc = is_page_exciting(combined, t_ini + N, 2 * n + 1);
      info << "page_order=" << (2 * n + 1) << "\n"
           << "page_exciting=" << (pc.exciting ? "true" : "false") << "\n"
           << "page_rank=" << pc.rank << "/" << pc.required << "\n";
    } else {
      info << "page_order=" << (2 * n + 1) << "\n"
           << "page_exciting=insufficient_data\n";
    }
  }
  info << "min_samples_hankel=" << min_samples(MatrixKind::Hankel, m, n, t_ini, N, false) << "\n"
       << "min_samples_hankel_masked=" << min_samples(MatrixKind::Hankel, m, n, t_ini, N, true)
       << "\n"
       << "min_samples_page=" << min_samples(MatrixKind::Page, m, n, t_ini, N, false) << "\n"
       << "min_samples_page_masked=" << min_samples(MatrixKind::Page, m, n, t_ini, N, true)
       << "\n";
  csv::write_text(out_dir / "matrix_info.txt", info.str());
  std::cout << info.str();

  if (!sweep_columns.empty()) {
    const int threads = static_cast<int>(
        std::min<unsigned>(std::thread::hardware_concurrency(), 4u));
    const auto points = column_sweep(cfg, cfg.controller.matrix_kind, sweep_columns,
                                     std::max(1, sweep_seeds), std::max(1, threads));
    csv::Table t;
    t.header = {"kind", "columns", "seed", "closed_loop_cost"};
    t.data.resize(static_cast<Eigen::Index>(points.size()), 4);
    for (size_t i = 0; i < points.size(); ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(i);
      t.data(r, 0) = points[i].kind == MatrixKind::Hankel ? 0.0 : 1.0;
      t.data(r, 1) = static_cast<double>(points[i].cols);
      t.data(r, 2) = static_cast<double>(points[i].seed % 1000000);
      t.data(r, 3) = points[i].closed_loop_cost;
    }
    csv::write_table(out_dir / "column_sweep.csv", t);
    std::cout << "sweep: " << points.size() << " runs written to column_sweep.csv\n";
  }
  return kExitOk;
}

}  // namespace deeplcc::commands
