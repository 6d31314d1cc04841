#include "deeplcc/privacy.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "deeplcc/errors.hpp"
#include "deeplcc/rng.hpp"

namespace deeplcc {

void AffineMap2::validate() const {
  if (std::abs(P.determinant()) < 1e-9) {
    throw Error(Errc::SingularMap, "state map is numerically singular");
  }
}

AffineMap2 AffineMap2::rotation(double angle, const Eigen::Vector2d& offset) {
  AffineMap2 m;
  m.P << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  m.l = offset;
  return m;
}

void AffineMap1::validate() const {
  if (std::abs(p) < 1e-9) throw Error(Errc::SingularMap, "input map is numerically singular");
}

bool FleetMasks::is_identity() const {
  return P_y.isIdentity(0.0) && P_u.isIdentity(0.0) && L_y.isZero(0.0) && L_u.isZero(0.0);
}

FleetMasks lift_maps(const std::vector<AffineMap2>& state_maps,
                     const std::vector<AffineMap1>& input_maps, const FleetTopology& fleet) {
  const int n = fleet.n, m = fleet.m();
  if (static_cast<int>(state_maps.size()) != m || static_cast<int>(input_maps.size()) != m) {
    throw Error(Errc::DimensionMismatch, "need exactly one state and one input map per CAV");
  }
  for (const auto& sm : state_maps) sm.validate();
  for (const auto& im : input_maps) im.validate();

  FleetMasks fm;
  fm.fleet = fleet;
  fm.state_maps = state_maps;
  fm.input_maps = input_maps;
  fm.P_u = Eigen::MatrixXd::Zero(m, m);
  fm.L_u = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < m; ++i) {
    fm.P_u(i, i) = input_maps[i].p;
    fm.L_u[i] = input_maps[i].l;
  }
  fm.P_y = Eigen::MatrixXd::Identity(n + m, n + m);
  fm.L_y = Eigen::VectorXd::Zero(n + m);
  for (int i = 0; i < m; ++i) {
    fm.P_y.block<2, 2>(2 * i, 2 * i) = state_maps[i].P;
    fm.L_y.segment<2>(2 * i) = state_maps[i].l;
  }
  return fm;
}

FleetMasks identity_masks(const FleetTopology& fleet) {
  std::vector<AffineMap2> sm(fleet.m());
  std::vector<AffineMap1> im(fleet.m());
  return lift_maps(sm, im, fleet);
}

FleetMasks paper_masks(const FleetTopology& fleet) {
  if (fleet.m() != 2) {
    throw Error(Errc::DimensionMismatch, "reference mask set is defined for two CAVs");
  }
  std::vector<AffineMap2> sm(2);
  sm[0] = AffineMap2::rotation(M_PI / 4.0, Eigen::Vector2d(5.0, 3.0));
  sm[1] = AffineMap2::rotation(8.0 * M_PI / 9.0, Eigen::Vector2d(5.0, 3.0));
  std::vector<AffineMap1> im(2);
  im[0] = AffineMap1{-1.5, 1.0};
  im[1] = AffineMap1{1.5, -1.0};
  return lift_maps(sm, im, fleet);
}

Eigen::VectorXd mask_output(const FleetMasks& masks, const Eigen::VectorXd& y) {
  if (y.size() != masks.P_y.rows()) throw Error(Errc::DimensionMismatch, "output size mismatch");
  return masks.P_y * y + masks.L_y;
}

Eigen::VectorXd unmask_output(const FleetMasks& masks, const Eigen::VectorXd& yb) {
  if (yb.size() != masks.P_y.rows()) throw Error(Errc::DimensionMismatch, "output size mismatch");
  Eigen::VectorXd y = yb - masks.L_y;
  // P_y is block diagonal: invert the CAV blocks in place
  for (int i = 0; i < masks.fleet.m(); ++i) {
    y.segment<2>(2 * i) = masks.state_maps[i].P.inverse() * y.segment<2>(2 * i);
  }
  return y;
}

Eigen::VectorXd mask_input(const FleetMasks& masks, const Eigen::VectorXd& u) {
  if (u.size() != masks.P_u.rows()) throw Error(Errc::DimensionMismatch, "input size mismatch");
  return masks.P_u * u + masks.L_u;
}

Eigen::VectorXd unmask_input(const FleetMasks& masks, const Eigen::VectorXd& ub) {
  if (ub.size() != masks.P_u.rows()) throw Error(Errc::DimensionMismatch, "input size mismatch");
  Eigen::VectorXd u(ub.size());
  for (int i = 0; i < masks.fleet.m(); ++i) u[i] = masks.input_maps[i].invert(ub[i]);
  return u;
}

MaskedProblemParams transform_cost(const CostWeights& weights, const FleetMasks& masks, int N) {
  if (N < 1) throw Error(Errc::DimensionMismatch, "horizon must be >= 1");
  const Eigen::MatrixXd Py_inv = masks.P_y.inverse();
  const Eigen::MatrixXd Pu_inv = masks.P_u.inverse();

  MaskedProblemParams mp;
  mp.Q_bar = Py_inv.transpose() * weights.Q * Py_inv;
  mp.q_bar = -2.0 * mp.Q_bar * masks.L_y;
  mp.R_bar = Pu_inv.transpose() * weights.R * Pu_inv;
  mp.r_bar = -2.0 * mp.R_bar * masks.L_u;
  mp.rho = static_cast<double>(N) *
           (masks.L_y.dot(mp.Q_bar * masks.L_y) + masks.L_u.dot(mp.R_bar * masks.L_u));
  return mp;
}

ResponseMaps masked_response_maps(const LinearDiscreteModel& d, const FleetMasks& masks) {
  const Eigen::MatrixXd Pu_inv = masks.P_u.inverse();
  ResponseMaps maps;
  maps.input_matrix = d.B_d * Pu_inv;
  maps.output_map = masks.P_y * d.C_d;
  maps.input_offset = -d.B_d * Pu_inv * masks.L_u;
  maps.output_offset = masks.L_y;
  return maps;
}

MaskedConstraints transform_constraints(const FleetTopology& fleet, const ControllerConfig& cfg,
                                        const FleetMasks& masks, ConstraintMode mode) {
  const int m = fleet.m(), p = fleet.n + fleet.m();
  const Eigen::VectorXd y_lo = output_lower_bounds(fleet, cfg);
  const Eigen::VectorXd y_hi = output_upper_bounds(fleet, cfg);
  const Eigen::VectorXd u_lo = Eigen::VectorXd::Constant(m, cfg.a_min);
  const Eigen::VectorXd u_hi = Eigen::VectorXd::Constant(m, cfg.a_max);

  MaskedConstraints mc;
  if (mode == ConstraintMode::PaperLiteral) {
    mc.y_map = Eigen::MatrixXd::Identity(p, p);
    mc.u_map = Eigen::MatrixXd::Identity(m, m);
    mc.y_lo = masks.P_y * y_lo + masks.L_y;
    mc.y_hi = masks.P_y * y_hi + masks.L_y;
    mc.u_lo = masks.P_u * u_lo + masks.L_u;
    mc.u_hi = masks.P_u * u_hi + masks.L_u;
    for (Eigen::Index i = 0; i < mc.y_lo.size(); ++i) {
      if (mc.y_lo[i] > mc.y_hi[i]) {
        throw Error(Errc::InvalidLiteralBounds,
                    "literal output bounds invert under this mask; use the exact-preimage mode");
      }
    }
    for (Eigen::Index i = 0; i < mc.u_lo.size(); ++i) {
      if (mc.u_lo[i] > mc.u_hi[i]) {
        throw Error(Errc::InvalidLiteralBounds,
                    "literal input bounds invert under this mask; use the exact-preimage mode");
      }
    }
    return mc;
  }

  // exact preimage: y_lo <= P_y^{-1} (y_bar - L_y) <= y_hi expressed as
  // rows on y_bar with shifted bounds
  mc.y_map = masks.P_y.inverse();
  mc.u_map = masks.P_u.inverse();
  const Eigen::VectorXd y_shift = mc.y_map * masks.L_y;
  const Eigen::VectorXd u_shift = mc.u_map * masks.L_u;
  mc.y_lo = y_lo + y_shift;
  mc.y_hi = y_hi + y_shift;
  mc.u_lo = u_lo + u_shift;
  mc.u_hi = u_hi + u_shift;
  return mc;
}

TrajectoryRecord mask_dataset(const TrajectoryRecord& rec, const FleetMasks& masks) {
  if (rec.u.rows() != masks.P_u.rows() || rec.y.rows() != masks.P_y.rows()) {
    throw Error(Errc::DimensionMismatch, "record dimensions do not match the mask set");
  }
  TrajectoryRecord out = rec;
  out.masked = true;
  for (Eigen::Index k = 0; k < rec.length(); ++k) {
    out.u.col(k) = masks.P_u * rec.u.col(k) + masks.L_u;
    out.y.col(k) = masks.P_y * rec.y.col(k) + masks.L_y;
  }
  return out;
}

DeepLccProblemSpec masked_problem_spec(const CostWeights& weights, const FleetMasks& masks,
                                       const FleetTopology& fleet, const ControllerConfig& cfg,
                                       ConstraintMode mode) {
  const MaskedProblemParams params = transform_cost(weights, masks, cfg.horizon);
  const MaskedConstraints mc = transform_constraints(fleet, cfg, masks, mode);
  DeepLccProblemSpec spec;
  spec.Q = params.Q_bar;
  spec.R = params.R_bar;
  spec.q_y = params.q_bar;
  spec.r_u = params.r_bar;
  spec.y_map = mc.y_map;
  spec.u_map = mc.u_map;
  spec.y_lo = mc.y_lo;
  spec.y_hi = mc.y_hi;
  spec.u_lo = mc.u_lo;
  spec.u_hi = mc.u_hi;
  spec.ones_row = true;  // offsets are carried through the data by 1' g = 1
  spec.objective_offset = params.rho;
  // a zero plant input shows up in the masked buffer as L_u
  spec.warmup_input = masks.L_u;
  return spec;
}

QuadraticProgram assemble_masked_deeplcc(const BlockMatrixSet& masked_blocks,
                                         const PastBuffer& masked_buf,
                                         const MaskedProblemParams& params,
                                         const FleetTopology& fleet, const FleetMasks& masks,
                                         const ControllerConfig& cfg, ConstraintMode mode) {
  if (!masked_buf.warmed_up()) throw Error(Errc::NotWarmedUp, "past buffer is not full yet");
  const MaskedConstraints mc = transform_constraints(fleet, cfg, masks, mode);
  DeepLccProblemSpec spec;
  spec.Q = params.Q_bar;
  spec.R = params.R_bar;
  spec.q_y = params.q_bar;
  spec.r_u = params.r_bar;
  spec.y_map = mc.y_map;
  spec.u_map = mc.u_map;
  spec.y_lo = mc.y_lo;
  spec.y_hi = mc.y_hi;
  spec.u_lo = mc.u_lo;
  spec.u_hi = mc.u_hi;
  spec.ones_row = true;
  spec.objective_offset = params.rho;
  return assemble_deeplcc_spec(masked_blocks, masked_buf.u_ini(), masked_buf.eps_ini(),
                               masked_buf.y_ini(), spec, cfg);
}

DiversityWitness decode_with_maps(const Eigen::MatrixXd& masked_x, const Eigen::VectorXd& masked_u,
                                  const AffineMap2& sm, const AffineMap1& im) {
  sm.validate();
  im.validate();
  const Eigen::Index T = masked_x.cols();
  DiversityWitness w;
  w.state_map = sm;
  w.input_map = im;
  w.decoded_x.resize(2, T);
  w.decoded_u.resize(masked_u.size());
  const Eigen::Matrix2d P_inv = sm.P.inverse();
  for (Eigen::Index k = 0; k < T; ++k) {
    w.decoded_x.col(k) = P_inv * (masked_x.col(k) - sm.l);
  }
  for (Eigen::Index k = 0; k < masked_u.size(); ++k) {
    w.decoded_u[k] = im.invert(masked_u[k]);
  }
  double res = 0.0;
  for (Eigen::Index k = 0; k < T; ++k) {
    res = std::max(res,
                   (sm.P * w.decoded_x.col(k) + sm.l - masked_x.col(k)).cwiseAbs().maxCoeff());
  }
  for (Eigen::Index k = 0; k < masked_u.size(); ++k) {
    res = std::max(res, std::abs(im.apply(w.decoded_u[k]) - masked_u[k]));
  }
  w.remask_residual = res;
  return w;
}

std::vector<DiversityWitness> diversity_witnesses(const Eigen::MatrixXd& masked_x,
                                                  const Eigen::VectorXd& masked_u, int K,
                                                  std::uint64_t seed, double min_separation) {
  if (K < 1) throw Error(Errc::DimensionMismatch, "need K >= 1 witnesses");
  if (masked_x.cols() == 0 || masked_u.size() == 0) {
    throw Error(Errc::InsufficientData, "masked sequences are empty");
  }
  Rng rng(seed);
  std::vector<DiversityWitness> out;
  out.reserve(static_cast<size_t>(K));

  int attempts = 0;
  while (static_cast<int>(out.size()) < K) {
    if (++attempts > 100 * K) {
      throw Error(Errc::InsufficientData, "could not sample separated witnesses");
    }
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    const Eigen::Vector2d off(rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0));
    AffineMap2 sm = AffineMap2::rotation(angle, off);
    AffineMap1 im;
    im.p = rng.uniform(0.5, 3.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    im.l = rng.uniform(-2.0, 2.0);

    DiversityWitness cand = decode_with_maps(masked_x, masked_u, sm, im);
    bool separated = true;
    for (const auto& prev : out) {
      const double gap =
          std::max((cand.decoded_x - prev.decoded_x).cwiseAbs().maxCoeff(),
                   (cand.decoded_u - prev.decoded_u).cwiseAbs().maxCoeff());
      if (gap < min_separation) {
        separated = false;
        break;
      }
    }
    if (separated) out.push_back(std::move(cand));
  }
  return out;
}

NaiveAttackReport naive_attacker_estimate(const TrajectoryRecord& truth,
                                          const TrajectoryRecord& masked,
                                          const FleetTopology& fleet) {
  if (truth.length() != masked.length()) {
    throw Error(Errc::DimensionMismatch, "record lengths differ");
  }
  const Eigen::Index T = truth.length();
  const int m = fleet.m();
  NaiveAttackReport rep;
  rep.spacing_rmse.resize(m, 0.0);
  rep.velocity_rmse.resize(m, 0.0);
  rep.input_rmse.resize(m, 0.0);
  for (int i = 0; i < m; ++i) {
    double ss = 0.0, sv = 0.0, su = 0.0;
    for (Eigen::Index k = 0; k < T; ++k) {
      const double ds = masked.y(2 * i, k) - truth.y(2 * i, k);
      const double dv = masked.y(2 * i + 1, k) - truth.y(2 * i + 1, k);
      const double du = masked.u(i, k) - truth.u(i, k);
      ss += ds * ds;
      sv += dv * dv;
      su += du * du;
    }
    rep.spacing_rmse[static_cast<size_t>(i)] = std::sqrt(ss / static_cast<double>(T));
    rep.velocity_rmse[static_cast<size_t>(i)] = std::sqrt(sv / static_cast<double>(T));
    rep.input_rmse[static_cast<size_t>(i)] = std::sqrt(su / static_cast<double>(T));
  }
  return rep;
}

}  // namespace deeplcc
