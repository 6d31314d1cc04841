#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <vector>

namespace deeplcc {

/// Bound magnitudes at or above this count as infinite.
inline constexpr double kQpInf = 1e30;
inline constexpr double kQpInfThreshold = 1e20;

/// minimize x'Px + q'x  s.t.  A_eq x = b_eq,  lo <= A_in x <= hi
struct QuadraticProgram {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A_eq;  // may have 0 rows
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;  // may have 0 rows
  Eigen::VectorXd lo, hi;

  Eigen::Index dim() const { return P.rows(); }
  void validate() const;  // dims, symmetry to 1e-12, lo <= hi
};

enum class QpStatus { Optimal, PrimalInfeasible, MaxIterations };
const char* qp_status_name(QpStatus s);

struct QpSolution {
  Eigen::VectorXd x;
  QpStatus status = QpStatus::MaxIterations;
  double kkt_residual = 0.0;  // max of stationarity/feasibility/complementarity
  int iterations = 0;
  double objective = 0.0;  // x'Px + q'x at x
};

struct QpSettings {
  double abs_tol = 1e-8;
  double rel_tol = 1e-9;
  int max_iter = 20000;
  bool polish = true;

  // operator-splitting internals
  double sigma = 1e-6;
  double rho = 0.1;
  double rho_eq_scale = 1e3;
  double over_relaxation = 1.6;
  int check_interval = 10;
  double inf_tol = 1e-5;  // infeasibility certificate tolerance
};

/// Dense operator-splitting solver with an active-set polishing step.
/// setup() factors everything that depends on (P, A); the receding-horizon
/// loop then only updates right-hand sides and re-solves warm-started.
/// One instance must not be shared between threads.
class QpSolver {
public:
  void setup(QuadraticProgram qp, QpSettings settings = {});
  bool is_setup() const { return setup_done_; }

  void update_linear_cost(const Eigen::VectorXd& q);
  void update_equality_rhs(const Eigen::VectorXd& b_eq);
  void update_bounds(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

  QpSolution solve();       // warm-started from the previous solution
  QpSolution solve_cold();  // reset iterates first

  const QuadraticProgram& problem() const { return qp_; }

private:
  struct Residuals {
    double prim = 0.0, dual = 0.0, eps_prim = 0.0, eps_dual = 0.0;
  };

  void equilibrate();
  void factor();
  Residuals residuals(const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                      const Eigen::VectorXd& y) const;
  double kkt_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  bool primal_infeasibility_certificate(const Eigen::VectorXd& dy) const;
  bool polish(Eigen::VectorXd& x, Eigen::VectorXd& y, double& kkt) ;
  void ensure_polish_factor();
  Eigen::VectorXd base_kkt_solve(const Eigen::VectorXd& rx, const Eigen::VectorXd& re);

  QuadraticProgram qp_;
  QpSettings st_;
  bool setup_done_ = false;

  // merged constraints (rows of A_eq first), scaled quantities
  Eigen::Index n_ = 0, m_rows_ = 0, n_eq_ = 0;
  Eigen::MatrixXd P2_;       // 2 P: gradient matrix of the x'Px + q'x objective
  Eigen::MatrixXd A_;        // scaled merged constraint matrix
  Eigen::VectorXd l_, u_;    // scaled merged bounds
  Eigen::VectorXd rho_;      // per-row penalty
  Eigen::VectorXd rho_inv_;
  Eigen::MatrixXd Ps_;       // scaled P
  Eigen::VectorXd qs_;       // scaled q
  Eigen::VectorXd D_, E_;    // column / row scalings
  double cost_scale_ = 1.0;
  Eigen::MatrixXd chol_M_;   // factor of Ps + sigma I + A' rho A

  // unscaled merged constraints for residuals
  Eigen::MatrixXd A_un_;
  Eigen::VectorXd l_un_, u_un_;

  // iterates (scaled space)
  Eigen::VectorXd xs_, zs_, ys_;
  bool have_warm_ = false;

  // polish: cached factor of [[P + dI, A_eq'],[A_eq, -dI]] and per-row columns
  bool polish_factored_ = false;
  Eigen::MatrixXd polish_LD_;
  double polish_delta_ = 1e-7;
  std::map<Eigen::Index, Eigen::VectorXd> polish_col_cache_;
};

/// One-shot cold solve.
QpSolution solve(const QuadraticProgram& qp, const QpSettings& settings = {});

/// Debug dump: P, q, A_eq, b_eq, A_in, lo, hi as separate CSV files.
void dump_csv(const QuadraticProgram& qp, const std::filesystem::path& dir);

}  // namespace deeplcc
