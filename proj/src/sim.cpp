#include "deeplcc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deeplcc/csv.hpp"
#include "deeplcc/errors.hpp"
#include "deeplcc/rng.hpp"

namespace deeplcc {

void ScenarioSpec::validate(double a_min) const {
  if (!(duration > 0.0)) throw Error(Errc::ConfigError, "scenario duration must be > 0");
  if (kind == Kind::EmergencyBrake) {
    if (!(brake_decel < 0.0) || brake_decel < a_min) {
      throw Error(Errc::ConfigError, "brake deceleration must lie in [a_min, 0)");
    }
    if (!(v_low >= 0.0 && v_low < v_star)) {
      throw Error(Errc::ConfigError, "brake target velocity must lie in [0, v_star)");
    }
  }
}

std::vector<std::pair<double, double>> ScenarioSpec::default_cycle_knots(double v_star) {
  // accelerate / cruise / decelerate segments around the equilibrium speed
  return {{0.0, v_star},        {3.0, v_star},       {8.0, v_star + 5.0}, {12.0, v_star + 5.0},
          {17.0, v_star - 2.0}, {21.0, v_star - 2.0}, {26.0, v_star + 4.0}, {30.0, v_star + 4.0},
          {35.0, v_star},       {40.0, v_star}};
}

Eigen::VectorXd ScenarioSpec::head_velocity_profile(double dt, Eigen::Index steps) const {
  Eigen::VectorXd v(steps);
  if (kind == Kind::EmergencyBrake) {
    const double t_brake = (v_star - v_low) / (-brake_decel);
    const double t_hold_end = brake_start + t_brake + low_duration;
    const double t_recover = (v_star - v_low) / recovery_accel;
    for (Eigen::Index k = 0; k < steps; ++k) {
      const double t = static_cast<double>(k) * dt;
      if (t < brake_start) {
        v[k] = v_star;
      } else if (t < brake_start + t_brake) {
        v[k] = v_star + brake_decel * (t - brake_start);
      } else if (t < t_hold_end) {
        v[k] = v_low;
      } else if (t < t_hold_end + t_recover) {
        v[k] = v_low + recovery_accel * (t - t_hold_end);
      } else {
        v[k] = v_star;
      }
    }
    return v;
  }

  std::vector<std::pair<double, double>> knots = cycle_knots;
  if (kind == Kind::DriveCycle && knots.empty()) knots = default_cycle_knots(v_star);
  if (kind == Kind::ReplayCsv) {
    const csv::Table t = csv::read_table(csv_path);
    const int tc = t.column("t"), vc = t.column("v_head");
    if (tc < 0 || vc < 0) throw Error(Errc::IoError, "replay CSV needs columns t, v_head");
    knots.clear();
    for (Eigen::Index r = 0; r < t.data.rows(); ++r) {
      knots.emplace_back(t.data(r, tc), t.data(r, vc));
    }
    if (knots.empty()) throw Error(Errc::InsufficientData, "replay CSV has no rows");
  }

  for (Eigen::Index k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (t <= knots.front().first) {
      v[k] = knots.front().second;
    } else if (t >= knots.back().first) {
      v[k] = knots.back().second;
    } else {
      for (size_t i = 1; i < knots.size(); ++i) {
        if (t <= knots[i].first) {
          const double w = (t - knots[i - 1].first) / (knots[i].first - knots[i - 1].first);
          v[k] = (1.0 - w) * knots[i - 1].second + w * knots[i].second;
          break;
        }
      }
    }
  }
  return v;
}

RunLog simulate(const ScenarioSpec& scn, const FleetTopology& fleet, const OvmParams& ovm,
                const Equilibrium& eq, const ControlCallback& controller, const NoiseSpec& noise,
                double dt) {
  if (!(dt > 0.0)) throw Error(Errc::ConfigError, "dt must be > 0");
  const int n = fleet.n, m = fleet.m();
  const auto steps = static_cast<Eigen::Index>(std::llround(scn.duration / dt));
  const Eigen::VectorXd v_head = scn.head_velocity_profile(dt, steps + 1);

  RunLog log;
  log.fleet = fleet;
  log.eq = eq;
  log.dt = dt;
  log.record.dt = dt;
  log.record.u.resize(m, steps);
  log.record.eps.resize(steps);
  log.record.y.resize(n + m, steps);
  log.record.positions.resize(n + 1, steps);
  log.record.velocities.resize(n + 1, steps);
  log.accelerations.resize(n + 1, steps);
  log.diagnostics.resize(static_cast<size_t>(steps));

  Rng rng(derive_seed(noise.seed, "hdv-noise"));

  // equilibrium start: uniform spacing s*, all at the head's initial speed
  Eigen::VectorXd pos(n + 1), vel(n + 1);
  pos[0] = 0.0;
  vel[0] = v_head[0];
  for (int i = 1; i <= n; ++i) {
    pos[i] = pos[i - 1] - eq.s_star;
    vel[i] = eq.v_star;
  }

  Eigen::VectorXd y(n + m), x_state(2 * n), accel(n + 1), u(m);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const double eps = vel[0] - eq.v_star;

    int row = 0;
    for (int idx : fleet.cav_indices) {
      y[row++] = (pos[idx - 1] - pos[idx]) - eq.s_star;
      y[row++] = vel[idx] - eq.v_star;
    }
    for (int idx : fleet.hdv_indices) y[row++] = vel[idx] - eq.v_star;
    for (int i = 1; i <= n; ++i) {
      x_state[2 * (i - 1)] = (pos[i - 1] - pos[i]) - eq.s_star;
      x_state[2 * (i - 1) + 1] = vel[i] - eq.v_star;
    }

    StepDiagnostics diag;
    if (controller) {
      u = controller(y, eps, x_state, diag);
      if (u.size() != m) throw Error(Errc::DimensionMismatch, "controller returned wrong size");
    }

    // accelerations: head follows the profile, HDVs the car-following law
    // plus noise, CAVs the commanded input (or the law in the baseline)
    accel[0] = (v_head[k + 1] - v_head[k]) / dt;
    int cav_slot = 0;
    for (int i = 1; i <= n; ++i) {
      const double s = pos[i - 1] - pos[i];
      const double s_dot = vel[i - 1] - vel[i];
      if (fleet.is_cav(i)) {
        if (controller) {
          accel[i] = u[cav_slot];
        } else {
          accel[i] = ovm_acceleration(ovm, s, s_dot, vel[i]) +
                     (noise.half_width > 0.0
                          ? rng.uniform(-noise.half_width, noise.half_width)
                          : 0.0);
        }
        log.record.u(cav_slot, k) = accel[i];
        ++cav_slot;
      } else {
        accel[i] = ovm_acceleration(ovm, s, s_dot, vel[i]) +
                   (noise.half_width > 0.0 ? rng.uniform(-noise.half_width, noise.half_width)
                                           : 0.0);
      }
    }

    log.record.eps[k] = eps;
    log.record.y.col(k) = y;
    log.record.positions.col(k) = pos;
    log.record.velocities.col(k) = vel;
    log.accelerations.col(k) = accel;
    log.diagnostics[static_cast<size_t>(k)] = diag;

    // explicit Euler
    for (int i = 0; i <= n; ++i) pos[i] += vel[i] * dt;
    for (int i = 1; i <= n; ++i) vel[i] += accel[i] * dt;
    vel[0] = v_head[k + 1];

    for (int i = 1; i <= n; ++i) {
      if (pos[i - 1] - pos[i] <= 0.0) ++log.collision_events;
    }
  }
  return log;
}

CollectResult collect_data(const FleetTopology& fleet, const OvmParams& ovm, const Equilibrium& eq,
                           const ExcitationSpec& excitation, Eigen::Index T, std::uint64_t seed,
                           double dt, const NoiseSpec& noise, MatrixKind kind, int t_ini,
                           int horizon, bool masked_order) {
  if (T < 1) throw Error(Errc::DimensionMismatch, "need T >= 1 samples");
  const int n = fleet.n, m = fleet.m();

  Rng input_rng(derive_seed(seed, "excitation-input"));
  Rng head_rng(derive_seed(seed, "excitation-head"));
  Rng noise_rng(derive_seed(noise.seed, "hdv-noise"));

  CollectResult out;
  TrajectoryRecord& rec = out.record;
  rec.dt = dt;
  rec.u.resize(m, T);
  rec.eps.resize(T);
  rec.y.resize(n + m, T);
  rec.positions.resize(n + 1, T);
  rec.velocities.resize(n + 1, T);

  Eigen::VectorXd pos(n + 1), vel(n + 1);
  pos[0] = 0.0;
  vel[0] = eq.v_star;
  for (int i = 1; i <= n; ++i) {
    pos[i] = pos[i - 1] - eq.s_star;
    vel[i] = eq.v_star;
  }

  for (Eigen::Index k = 0; k < T; ++k) {
    const double eps =
        excitation.head_half_width > 0.0
            ? head_rng.uniform(-excitation.head_half_width, excitation.head_half_width)
            : 0.0;
    vel[0] = eq.v_star + eps;

    int row = 0;
    for (int idx : fleet.cav_indices) {
      rec.y(row++, k) = (pos[idx - 1] - pos[idx]) - eq.s_star;
      rec.y(row++, k) = vel[idx] - eq.v_star;
    }
    for (int idx : fleet.hdv_indices) rec.y(row++, k) = vel[idx] - eq.v_star;
    rec.eps[k] = eps;
    rec.positions.col(k) = pos;
    rec.velocities.col(k) = vel;

    Eigen::VectorXd accel(n + 1);
    accel[0] = 0.0;
    int cav_slot = 0;
    for (int i = 1; i <= n; ++i) {
      const double s = pos[i - 1] - pos[i];
      const double s_dot = vel[i - 1] - vel[i];
      if (fleet.is_cav(i)) {
        const double u = excitation.input_half_width > 0.0
                             ? input_rng.uniform(-excitation.input_half_width,
                                                 excitation.input_half_width)
                             : 0.0;
        rec.u(cav_slot++, k) = u;
        accel[i] = u;
      } else {
        accel[i] = ovm_acceleration(ovm, s, s_dot, vel[i]) +
                   (noise.half_width > 0.0
                        ? noise_rng.uniform(-noise.half_width, noise.half_width)
                        : 0.0);
      }
    }

    for (int i = 0; i <= n; ++i) pos[i] += vel[i] * dt;
    for (int i = 1; i <= n; ++i) vel[i] += accel[i] * dt;
  }

  const Series combined = rec.combined_input_series();
  if (kind == MatrixKind::Hankel) {
    out.required_order = t_ini + horizon + 2 * n + (masked_order ? 1 : 0);
    out.certificate = is_hankel_exciting(combined, static_cast<int>(out.required_order));
  } else {
    out.required_order = 2 * n + (masked_order ? 2 : 1);
    out.certificate =
        is_page_exciting(combined, t_ini + horizon, static_cast<int>(out.required_order));
  }
  if (!out.certificate.exciting) {
    throw Error(Errc::ExcitationFailure,
                "collected data fails the excitation certificate (rank " +
                    std::to_string(out.certificate.rank) + " of " +
                    std::to_string(out.certificate.required) + "); try another seed");
  }
  return out;
}

double fuel_rate(double v, double a) {
  const double R = 0.333 + 0.00108 * v * v + 1.200 * a;
  if (R <= 0.0) return 0.444;
  double f = 0.444 + 0.090 * R * v;
  if (a > 0.0) f += 0.054 * a * a * v;
  return f;
}

double total_fuel(const RunLog& log) {
  const int n = log.fleet.n;
  double total = 0.0;
  for (int i = 2; i <= n; ++i) {
    for (Eigen::Index k = 0; k < log.record.length(); ++k) {
      total += fuel_rate(log.record.velocities(i, k), log.accelerations(i, k)) * log.dt;
    }
  }
  return total;
}

double aave(const RunLog& log, long* excluded_steps) {
  const int n = log.fleet.n;
  double sum = 0.0;
  long count = 0, excluded = 0;
  for (Eigen::Index k = 0; k < log.record.length(); ++k) {
    const double v0 = log.record.velocities(0, k);
    if (v0 <= kAaveVelocityCutoff) {
      ++excluded;
      continue;
    }
    for (int i = 1; i <= n; ++i) {
      sum += std::abs(log.record.velocities(i, k) - v0) / v0;
      ++count;
    }
  }
  if (excluded_steps != nullptr) *excluded_steps = excluded;
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

double quadratic_cost(const RunLog& log, const CostWeights& weights) {
  double cost = 0.0;
  for (Eigen::Index k = 0; k < log.record.length(); ++k) {
    const Eigen::VectorXd y = log.record.y.col(k);
    const Eigen::VectorXd u = log.record.u.col(k);
    cost += y.dot(weights.Q * y) + u.dot(weights.R * u);
  }
  return cost;
}

MetricsReport compute_metrics(const RunLog& log, const CostWeights& weights) {
  MetricsReport rep;
  rep.total_fuel = total_fuel(log);
  rep.aave = aave(log, &rep.aave_excluded_steps);
  rep.quadratic_cost = quadratic_cost(log, weights);
  rep.collision_events = log.collision_events;
  rep.per_vehicle_fuel.resize(static_cast<size_t>(log.fleet.n), 0.0);
  for (int i = 1; i <= log.fleet.n; ++i) {
    double f = 0.0;
    for (Eigen::Index k = 0; k < log.record.length(); ++k) {
      f += fuel_rate(log.record.velocities(i, k), log.accelerations(i, k)) * log.dt;
    }
    rep.per_vehicle_fuel[static_cast<size_t>(i - 1)] = f;
  }
  return rep;
}

void write_run_log_csv(const std::filesystem::path& path, const RunLog& log) {
  const Eigen::Index T = log.record.length();
  const int n = log.fleet.n, m = log.fleet.m();
  csv::Table t;
  t.comments.push_back(" dt=" + csv::format_double(log.dt));
  t.header.push_back("t");
  for (int i = 0; i <= n; ++i) t.header.push_back("p_" + std::to_string(i));
  for (int i = 0; i <= n; ++i) t.header.push_back("v_" + std::to_string(i));
  for (int i = 1; i <= m; ++i) t.header.push_back("u_" + std::to_string(i));
  t.header.push_back("eps");
  t.header.push_back("fuel_rate_total");
  t.header.push_back("objective");
  t.header.push_back("solver_status");
  t.header.push_back("kkt_residual");
  t.header.push_back("iterations");

  t.data.resize(T, static_cast<Eigen::Index>(t.header.size()));
  for (Eigen::Index k = 0; k < T; ++k) {
    Eigen::Index c = 0;
    t.data(k, c++) = static_cast<double>(k) * log.dt;
    for (int i = 0; i <= n; ++i) t.data(k, c++) = log.record.positions(i, k);
    for (int i = 0; i <= n; ++i) t.data(k, c++) = log.record.velocities(i, k);
    for (int i = 0; i < m; ++i) t.data(k, c++) = log.record.u(i, k);
    t.data(k, c++) = log.record.eps[k];
    double fr = 0.0;
    for (int i = 2; i <= n; ++i) fr += fuel_rate(log.record.velocities(i, k), log.accelerations(i, k));
    t.data(k, c++) = fr;
    const auto& d = log.diagnostics[static_cast<size_t>(k)];
    t.data(k, c++) = d.objective;
    t.data(k, c++) = d.solved ? static_cast<double>(d.status == QpStatus::Optimal ? 0 : 1) : -1.0;
    t.data(k, c++) = d.kkt_residual;
    t.data(k, c++) = d.iterations;
  }
  csv::write_table(path, t);
}

}  // namespace deeplcc
