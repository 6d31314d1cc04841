#pragma once

#include <Eigen/Core>
#include <optional>

#include "deeplcc/datamat.hpp"
#include "deeplcc/model.hpp"
#include "deeplcc/qp.hpp"

namespace deeplcc {

struct ControllerConfig {
  int t_ini = 15;
  int horizon = 30;  // N
  double w_s = 0.5;
  double w_v = 1.0;
  double w_u = 0.1;
  double s_err_min = -15.0, s_err_max = 20.0;
  double v_err_min = -30.0, v_err_max = 30.0;
  double a_min = -5.0, a_max = 2.0;
  double lambda_g = 100.0;
  double lambda_sigma = 10000.0;
  MatrixKind matrix_kind = MatrixKind::Hankel;
  bool regularized = true;

  void validate() const;
};

struct CostWeights {
  Eigen::MatrixXd Q;  // (n+m) x (n+m)
  Eigen::MatrixXd R;  // m x m

  static CostWeights make(const FleetTopology& fleet, const ControllerConfig& cfg);
};

/// Stacked per-step output bounds (CAV blocks get spacing+velocity bounds,
/// HDV entries velocity bounds only).
Eigen::VectorXd output_lower_bounds(const FleetTopology& fleet, const ControllerConfig& cfg);
Eigen::VectorXd output_upper_bounds(const FleetTopology& fleet, const ControllerConfig& cfg);

/// FIFO window of the last t_ini steps, oldest first.
class PastBuffer {
public:
  PastBuffer() = default;
  PastBuffer(int m, int p, int t_ini);

  void push(const Eigen::VectorXd& u, double eps, const Eigen::VectorXd& y);
  bool warmed_up() const { return count_ >= t_ini_; }
  int t_ini() const { return t_ini_; }

  Eigen::VectorXd u_ini() const;    // m * t_ini
  Eigen::VectorXd eps_ini() const;  // t_ini
  Eigen::VectorXd y_ini() const;    // p * t_ini

private:
  int m_ = 0, p_ = 0, t_ini_ = 0;
  long count_ = 0;
  Eigen::MatrixXd u_, y_;  // columns oldest first once warm
  Eigen::VectorXd eps_;
};

/// Everything the QP assembly needs besides data and buffers. The masked
/// problem differs from the plain one only through these fields.
struct DeepLccProblemSpec {
  Eigen::MatrixXd Q, R;          // per-step quadratic weights
  Eigen::VectorXd q_y, r_u;      // per-step linear cost (zero when plain)
  Eigen::MatrixXd y_map, u_map;  // constraint row maps (identity when plain)
  Eigen::VectorXd y_lo, y_hi;    // bounds on y_map * y(k)
  Eigen::VectorXd u_lo, u_hi;    // bounds on u_map * u(k)
  bool ones_row = false;
  double objective_offset = 0.0;  // rho constant of the masked problem
  // what the buffer records while warming up (the masked image of the zero
  // input when the controller operates on masked signals); empty = zeros
  Eigen::VectorXd warmup_input;
};

DeepLccProblemSpec plain_problem_spec(const FleetTopology& fleet, const CostWeights& weights,
                                      const ControllerConfig& cfg, bool ones_row);

/// Decision vector is g (cols) followed by the slack sigma_y (p * t_ini)
/// when cfg.regularized. u and y are eliminated through U_f g and Y_f g.
QuadraticProgram assemble_deeplcc_spec(const BlockMatrixSet& blocks, const Eigen::VectorXd& u_ini,
                                       const Eigen::VectorXd& eps_ini,
                                       const Eigen::VectorXd& y_ini,
                                       const DeepLccProblemSpec& spec,
                                       const ControllerConfig& cfg);

QuadraticProgram assemble_deeplcc(const BlockMatrixSet& blocks, const PastBuffer& buf,
                                  const CostWeights& weights, const ControllerConfig& cfg,
                                  bool ones_row);

struct StepResult {
  Eigen::VectorXd applied_input;  // decoded, plant frame
  bool solved = false;            // false while warming up
  QpStatus status = QpStatus::Optimal;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  double solve_seconds = 0.0;
  bool flagged = false;  // best-iterate fallback was applied
};

/// Receding-horizon driver around one assembled problem: the quadratic part
/// and the constraint rows are fixed per dataset, only the right-hand sides
/// move with the buffers, so the solver factorization is reused across steps.
class DeepLccController {
public:
  DeepLccController(const FleetTopology& fleet, BlockMatrixSet blocks, DeepLccProblemSpec spec,
                    ControllerConfig cfg, QpSettings solver_settings = {});

  /// Observe (y(t), eps(t)), return the input applied at t. Warmup applies
  /// zeros. The applied input and the measurement are pushed into the buffer.
  StepResult step(const Eigen::VectorXd& y, double eps);

  /// Solve from the current buffers without advancing them.
  StepResult solve_current(const Eigen::VectorXd* u_override = nullptr);

  bool warmed_up() const { return buffer_.warmed_up(); }
  Eigen::Index decision_dim() const { return dim_; }
  const BlockMatrixSet& blocks() const { return blocks_; }
  const DeepLccProblemSpec& spec() const { return spec_; }
  const ControllerConfig& config() const { return cfg_; }

private:
  void ensure_setup();
  Eigen::VectorXd equality_rhs() const;

  FleetTopology fleet_;
  BlockMatrixSet blocks_;
  DeepLccProblemSpec spec_;
  ControllerConfig cfg_;
  QpSettings solver_settings_;
  PastBuffer buffer_;
  QpSolver solver_;
  bool setup_done_ = false;
  Eigen::Index dim_ = 0;
  int m_ = 0, p_ = 0;
};

/// Output-feedback MPC baseline on the discretized model, same horizon,
/// weights and constraints as the data-driven controller.
QuadraticProgram assemble_mpc(const LinearDiscreteModel& model, const Eigen::VectorXd& x_est,
                              const CostWeights& weights, const ControllerConfig& cfg);

class MpcController {
public:
  MpcController(LinearDiscreteModel model, CostWeights weights, ControllerConfig cfg,
                QpSettings solver_settings = {});

  /// Solve from the (true) linearization state; returns the first input.
  StepResult step(const Eigen::VectorXd& x_est);
  Eigen::Index decision_dim() const { return static_cast<Eigen::Index>(cfg_.horizon) * m_; }

private:
  LinearDiscreteModel model_;
  CostWeights weights_;
  ControllerConfig cfg_;
  QpSettings solver_settings_;
  LiftedResponse lifted_;
  Eigen::MatrixXd Tu_rows_;  // future block rows of T_u
  Eigen::MatrixXd Tx_rows_;
  Eigen::VectorXd y_lo_, y_hi_;
  QpSolver solver_;
  bool setup_done_ = false;
  int m_ = 0, p_ = 0;
};

}  // namespace deeplcc
