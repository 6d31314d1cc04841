#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "deeplcc/controller.hpp"
#include "deeplcc/model.hpp"
#include "deeplcc/trajectory.hpp"

namespace deeplcc {

/// Invertible affine map on a CAV state (spacing error, velocity error).
struct AffineMap2 {
  Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
  Eigen::Vector2d l = Eigen::Vector2d::Zero();

  void validate() const;  // |det P| >= 1e-9
  Eigen::Vector2d apply(const Eigen::Vector2d& x) const { return P * x + l; }
  Eigen::Vector2d invert(const Eigen::Vector2d& xb) const { return P.inverse() * (xb - l); }

  static AffineMap2 rotation(double angle, const Eigen::Vector2d& offset);
};

/// Invertible affine map on a scalar CAV input.
struct AffineMap1 {
  double p = 1.0;
  double l = 0.0;

  void validate() const;  // |p| >= 1e-9
  double apply(double u) const { return p * u + l; }
  double invert(double ub) const { return (ub - l) / p; }
};

/// Per-CAV maps plus their fleet-level lifted forms.
struct FleetMasks {
  FleetTopology fleet;
  std::vector<AffineMap2> state_maps;  // ordered by cav_indices
  std::vector<AffineMap1> input_maps;
  Eigen::MatrixXd P_u;  // m x m diagonal
  Eigen::VectorXd L_u;  // m
  Eigen::MatrixXd P_y;  // (n+m) x (n+m), identity on HDV rows
  Eigen::VectorXd L_y;  // (n+m), zero on HDV rows

  bool is_identity() const;
};

/// Build the lifted maps; throws Error(SingularMap) on a degenerate local map.
FleetMasks lift_maps(const std::vector<AffineMap2>& state_maps,
                     const std::vector<AffineMap1>& input_maps, const FleetTopology& fleet);

FleetMasks identity_masks(const FleetTopology& fleet);

/// The mask set used in the paper's experiments (fleet must have m = 2).
FleetMasks paper_masks(const FleetTopology& fleet);

Eigen::VectorXd mask_output(const FleetMasks& masks, const Eigen::VectorXd& y);
Eigen::VectorXd unmask_output(const FleetMasks& masks, const Eigen::VectorXd& yb);
Eigen::VectorXd mask_input(const FleetMasks& masks, const Eigen::VectorXd& u);
Eigen::VectorXd unmask_input(const FleetMasks& masks, const Eigen::VectorXd& ub);

/// Transformed cost pieces of the masked problem and the offset constant.
struct MaskedProblemParams {
  Eigen::MatrixXd Q_bar;  // P_y^{-T} Q P_y^{-1}
  Eigen::VectorXd q_bar;  // -2 Q_bar L_y
  Eigen::MatrixXd R_bar;  // P_u^{-T} R P_u^{-1}
  Eigen::VectorXd r_bar;  // -2 R_bar L_u
  double rho = 0.0;       // N (L_y' Q_bar L_y + L_u' R_bar L_u)
  // offsets of the masked model, for response-map oracles
  Eigen::MatrixXd input_matrix_bar;  // B_d P_u^{-1}
  Eigen::VectorXd input_offset_bar;  // -B_d P_u^{-1} L_u
};

MaskedProblemParams transform_cost(const CostWeights& weights, const FleetMasks& masks, int N);

/// Masked-model response maps for lifted_response (needs the plant model).
ResponseMaps masked_response_maps(const LinearDiscreteModel& d, const FleetMasks& masks);

enum class ConstraintMode { PaperLiteral, ExactPreimage };

struct MaskedConstraints {
  Eigen::MatrixXd y_map, u_map;  // rows act on (y_bar, u_bar)
  Eigen::VectorXd y_lo, y_hi, u_lo, u_hi;
};

/// PaperLiteral transforms the bound vectors as printed; ExactPreimage maps
/// the feasible set itself (the two agree only for maps that preserve boxes).
/// PaperLiteral throws Error(InvalidLiteralBounds) when a transformed lower
/// bound exceeds its upper bound (e.g. negative input scaling).
MaskedConstraints transform_constraints(const FleetTopology& fleet, const ControllerConfig& cfg,
                                        const FleetMasks& masks, ConstraintMode mode);

/// Masked copy of a record: u and the CAV blocks of y are mapped, eps and
/// the plant-state fields are untouched.
TrajectoryRecord mask_dataset(const TrajectoryRecord& rec, const FleetMasks& masks);

/// Spec for the masked problem (mandatory ones row, transformed cost and
/// constraints). Feed to assemble_deeplcc_spec / DeepLccController together
/// with *masked* blocks and buffers.
DeepLccProblemSpec masked_problem_spec(const CostWeights& weights, const FleetMasks& masks,
                                       const FleetTopology& fleet, const ControllerConfig& cfg,
                                       ConstraintMode mode);

QuadraticProgram assemble_masked_deeplcc(const BlockMatrixSet& masked_blocks,
                                         const PastBuffer& masked_buf,
                                         const MaskedProblemParams& params,
                                         const FleetTopology& fleet, const FleetMasks& masks,
                                         const ControllerConfig& cfg, ConstraintMode mode);

/// One candidate explanation of an intercepted masked trajectory.
struct DiversityWitness {
  AffineMap2 state_map;
  AffineMap1 input_map;
  Eigen::MatrixXd decoded_x;  // 2 x T
  Eigen::VectorXd decoded_u;  // T
  double remask_residual = 0.0;
};

/// Decode one CAV's masked sequences through a candidate map pair.
DiversityWitness decode_with_maps(const Eigen::MatrixXd& masked_x,
                                  const Eigen::VectorXd& masked_u, const AffineMap2& sm,
                                  const AffineMap1& im);

/// K distinct trajectory explanations consistent with the observed masked
/// data; candidates are sampled rotations/offsets/scalings, re-verified by
/// re-masking, and kept pairwise separated by at least `min_separation`.
std::vector<DiversityWitness> diversity_witnesses(const Eigen::MatrixXd& masked_x,
                                                  const Eigen::VectorXd& masked_u, int K,
                                                  std::uint64_t seed,
                                                  double min_separation = 1e-3);

/// Attack baseline: the eavesdropper takes masked signals at face value.
struct NaiveAttackReport {
  // one entry per CAV, ordered by cav_indices
  std::vector<double> spacing_rmse;
  std::vector<double> velocity_rmse;
  std::vector<double> input_rmse;
};

NaiveAttackReport naive_attacker_estimate(const TrajectoryRecord& truth,
                                          const TrajectoryRecord& masked,
                                          const FleetTopology& fleet);

}  // namespace deeplcc
