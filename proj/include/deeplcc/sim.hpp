#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "deeplcc/controller.hpp"
#include "deeplcc/datamat.hpp"
#include "deeplcc/model.hpp"
#include "deeplcc/trajectory.hpp"

namespace deeplcc {

struct ScenarioSpec {
  enum class Kind { DriveCycle, EmergencyBrake, ReplayCsv };
  Kind kind = Kind::EmergencyBrake;
  double duration = 15.0;  // s
  double v_star = 15.0;    // m/s

  // EmergencyBrake: cruise, brake to v_low, dwell, recover
  double brake_start = 2.0;     // s
  double brake_decel = -5.0;    // m/s^2, must be < 0
  double v_low = 5.0;           // m/s
  double low_duration = 3.0;    // s
  double recovery_accel = 2.0;  // m/s^2

  // DriveCycle: piecewise-linear (time, velocity) knots; held outside
  std::vector<std::pair<double, double>> cycle_knots;

  // ReplayCsv: columns t, v_head; linearly interpolated onto the grid
  std::filesystem::path csv_path;

  void validate(double a_min) const;

  /// Head-vehicle velocity at each sample time 0, dt, ..., (steps-1) dt.
  Eigen::VectorXd head_velocity_profile(double dt, Eigen::Index steps) const;

  static std::vector<std::pair<double, double>> default_cycle_knots(double v_star);
};

struct NoiseSpec {
  double half_width = 0.3;  // m/s^2, additive on HDV accelerations
  std::uint64_t seed = 1;
};

struct StepDiagnostics {
  bool solved = false;
  QpStatus status = QpStatus::Optimal;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  double solve_seconds = 0.0;
  bool flagged = false;
};

/// CAV inputs for one step, given the measured output, head-vehicle velocity
/// error and the full linearization state (for the model-based baseline).
using ControlCallback = std::function<Eigen::VectorXd(
    const Eigen::VectorXd& y, double eps, const Eigen::VectorXd& x_state, StepDiagnostics& diag)>;

struct RunLog {
  TrajectoryRecord record;
  Eigen::MatrixXd accelerations;  // (n+1) x T, applied accelerations
  std::vector<StepDiagnostics> diagnostics;
  FleetTopology fleet;
  Equilibrium eq;
  double dt = 0.05;
  long collision_events = 0;
};

/// Nonlinear plant rollout: HDVs follow the car-following law plus noise,
/// CAVs integrate the callback's input (or fall back to the car-following
/// law when no callback is given), the head vehicle tracks the scenario
/// profile exactly. Explicit Euler at dt.
RunLog simulate(const ScenarioSpec& scn, const FleetTopology& fleet, const OvmParams& ovm,
                const Equilibrium& eq, const ControlCallback& controller, const NoiseSpec& noise,
                double dt);

struct ExcitationSpec {
  double input_half_width = 1.0;  // m/s^2 around 0
  double head_half_width = 1.0;   // m/s around v*
};

struct CollectResult {
  TrajectoryRecord record;
  ExcitationCertificate certificate;
  Eigen::Index required_order = 0;
};

/// Offline data collection around the equilibrium with i.i.d. uniform
/// excitation. Throws Error(ExcitationFailure) when the generated record
/// fails the excitation certificate for the requested structure.
CollectResult collect_data(const FleetTopology& fleet, const OvmParams& ovm, const Equilibrium& eq,
                           const ExcitationSpec& excitation, Eigen::Index T, std::uint64_t seed,
                           double dt, const NoiseSpec& noise, MatrixKind kind, int t_ini,
                           int horizon, bool masked_order = false);

/// Instantaneous fuel rate [mL/s] of one vehicle.
double fuel_rate(double v, double a);

struct MetricsReport {
  double total_fuel = 0.0;       // mL, vehicles 2..n
  double aave = 0.0;             // dimensionless
  double quadratic_cost = 0.0;   // per the controller weights
  long collision_events = 0;
  long aave_excluded_steps = 0;  // steps with v_0 below the cutoff
  std::vector<double> per_vehicle_fuel;  // vehicles 1..n
};

inline constexpr double kAaveVelocityCutoff = 0.1;  // m/s

double total_fuel(const RunLog& log);
double aave(const RunLog& log, long* excluded_steps = nullptr);
double quadratic_cost(const RunLog& log, const CostWeights& weights);
MetricsReport compute_metrics(const RunLog& log, const CostWeights& weights);

void write_run_log_csv(const std::filesystem::path& path, const RunLog& log);

}  // namespace deeplcc
