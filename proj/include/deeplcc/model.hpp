#pragma once

#include <Eigen/Core>
#include <vector>

namespace deeplcc {

/// Vehicle indices of the platoon behind the head vehicle. Indices are
/// 1-based as in the usual platoon numbering; the head vehicle (index 0)
/// is excluded from n.
struct FleetTopology {
  int n = 0;                     // vehicles behind the head
  std::vector<int> cav_indices;  // strictly increasing subset of 1..n
  std::vector<int> hdv_indices;  // complement, strictly increasing

  int m() const { return static_cast<int>(cav_indices.size()); }
  bool is_cav(int i) const;

  /// Validates the partition invariants; throws Error(DimensionMismatch).
  static FleetTopology make(int n, std::vector<int> cavs);
};

struct OvmParams {
  double alpha = 0.6;   // driver gain [1/s]
  double beta = 0.9;    // relative-velocity gain [1/s]
  double s_st = 5.0;    // standstill spacing [m]
  double s_go = 35.0;   // free-flow spacing [m]
  double v_max = 30.0;  // free-flow speed [m/s]

  void validate() const;
};

struct Equilibrium {
  double s_star = 0.0;
  double v_star = 0.0;
};

/// Spacing-dependent desired velocity of the car-following law.
double ovm_desired_velocity(const OvmParams& p, double s);

/// Acceleration F(s, s_dot, v) = alpha (V(s) - v) + beta s_dot.
double ovm_acceleration(const OvmParams& p, double s, double s_dot, double v);

/// Solve V(s*) = v* for the equilibrium spacing (bisection to 1e-10 m).
Equilibrium solve_equilibrium(const OvmParams& p, double v_star);

struct HdvLinearization {
  double alpha1 = 0.0;  // dF/ds        [1/s^2]
  double alpha2 = 0.0;  // dF/dsdot - dF/dv [1/s]
  double alpha3 = 0.0;  // dF/dsdot     [1/s]

  double well_posedness() const { return alpha1 - alpha2 * alpha3 + alpha3 * alpha3; }
};

/// Partial derivatives of the car-following law at the equilibrium.
/// Throws Error(WellPosednessViolation) when alpha1 - alpha2 alpha3 + alpha3^2
/// vanishes (|.| < 1e-12), which would make the fleet unstabilizable.
HdvLinearization linearize(const OvmParams& p, const Equilibrium& eq);

struct LinearContinuousModel {
  Eigen::MatrixXd A;  // 2n x 2n
  Eigen::MatrixXd B;  // 2n x m
  Eigen::VectorXd H;  // 2n
  Eigen::MatrixXd C;  // (n+m) x 2n
  FleetTopology fleet;
};

/// Error-coordinate state space of the mixed platoon. State is
/// (spacing error, velocity error) per vehicle, stacked front to back.
LinearContinuousModel build_continuous(const FleetTopology& fleet, const HdvLinearization& lin);

struct LinearDiscreteModel {
  Eigen::MatrixXd A_d;      // 2n x 2n
  Eigen::MatrixXd B_d;      // 2n x m
  Eigen::VectorXd H_d;      // 2n
  Eigen::MatrixXd C_d;      // (n+m) x 2n
  Eigen::MatrixXd B_hat_d;  // [H_d, B_d], 2n x (m+1)
  double dt = 0.0;
  FleetTopology fleet;
};

/// Zero-order-hold discretization. A_d = e^{A dt}; B_d, H_d are the matching
/// convolution integrals, computed in one pass from the exponential of the
/// augmented matrix [[A, B_hat], [0, 0]].
LinearDiscreteModel discretize(const LinearContinuousModel& model, double dt);

/// expm by scaling-and-squaring with a Taylor series truncated at 1e-12.
Eigen::MatrixXd expm(const Eigen::MatrixXd& M);

/// Offsets and maps of an affine-in-the-input reformulation. Identity maps
/// and zero offsets give back the plain model response.
struct ResponseMaps {
  Eigen::MatrixXd input_matrix;   // 2n x m, e.g. B_d or B_d P_u^{-1}
  Eigen::MatrixXd output_map;     // (n+m) x 2n, e.g. C_d or P_y C_d
  Eigen::VectorXd input_offset;   // 2n, e.g. 0 or -B_d P_u^{-1} L_u
  Eigen::VectorXd output_offset;  // n+m, e.g. 0 or L_y
};

/// Lifted input-output response over a horizon of `depth` steps:
/// stacked y = T_u u + T_eps eps + T_x x0 + T_l.
struct LiftedResponse {
  Eigen::MatrixXd T_u;    // (n+m)*depth x m*depth, block lower triangular
  Eigen::MatrixXd T_eps;  // (n+m)*depth x depth
  Eigen::MatrixXd T_x;    // (n+m)*depth x 2n
  Eigen::VectorXd T_l;    // (n+m)*depth
  int depth = 0;
};

LiftedResponse lifted_response(const LinearDiscreteModel& d, const ResponseMaps& maps,
                               int t_ini, int horizon);
LiftedResponse lifted_response_depth(const LinearDiscreteModel& d, const ResponseMaps& maps,
                                     int depth);

ResponseMaps identity_maps(const LinearDiscreteModel& d);

}  // namespace deeplcc
