#include "deeplcc/model.hpp"

#include <algorithm>
#include <cmath>

#include "deeplcc/errors.hpp"

namespace deeplcc {

bool FleetTopology::is_cav(int i) const {
  return std::binary_search(cav_indices.begin(), cav_indices.end(), i);
}

FleetTopology FleetTopology::make(int n, std::vector<int> cavs) {
  if (n < 1) throw Error(Errc::DimensionMismatch, "fleet needs n >= 1");
  std::sort(cavs.begin(), cavs.end());
  if (std::adjacent_find(cavs.begin(), cavs.end()) != cavs.end()) {
    throw Error(Errc::DimensionMismatch, "duplicate CAV index");
  }
  if (!cavs.empty() && (cavs.front() < 1 || cavs.back() > n)) {
    throw Error(Errc::DimensionMismatch, "CAV index outside 1..n");
  }
  FleetTopology f;
  f.n = n;
  f.cav_indices = std::move(cavs);
  for (int i = 1; i <= n; ++i) {
    if (!std::binary_search(f.cav_indices.begin(), f.cav_indices.end(), i)) {
      f.hdv_indices.push_back(i);
    }
  }
  return f;
}

void OvmParams::validate() const {
  if (!(s_st > 0.0 && s_st < s_go)) throw Error(Errc::DimensionMismatch, "need 0 < s_st < s_go");
  if (!(alpha > 0.0)) throw Error(Errc::DimensionMismatch, "need alpha > 0");
  if (!(beta >= 0.0)) throw Error(Errc::DimensionMismatch, "need beta >= 0");
  if (!(v_max > 0.0)) throw Error(Errc::DimensionMismatch, "need v_max > 0");
}

double ovm_desired_velocity(const OvmParams& p, double s) {
  if (s <= p.s_st) return 0.0;
  if (s >= p.s_go) return p.v_max;
  const double phase = M_PI * (s - p.s_st) / (p.s_go - p.s_st);
  return 0.5 * p.v_max * (1.0 - std::cos(phase));
}

double ovm_acceleration(const OvmParams& p, double s, double s_dot, double v) {
  return p.alpha * (ovm_desired_velocity(p, s) - v) + p.beta * s_dot;
}

Equilibrium solve_equilibrium(const OvmParams& p, double v_star) {
  p.validate();
  if (!(v_star > 0.0 && v_star < p.v_max)) {
    throw Error(Errc::DimensionMismatch, "equilibrium velocity must lie in (0, v_max)");
  }
  double lo = p.s_st, hi = p.s_go;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (ovm_desired_velocity(p, mid) < v_star) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return Equilibrium{0.5 * (lo + hi), v_star};
}

HdvLinearization linearize(const OvmParams& p, const Equilibrium& eq) {
  p.validate();
  const double range = p.s_go - p.s_st;
  double vprime = 0.0;
  if (eq.s_star > p.s_st && eq.s_star < p.s_go) {
    const double phase = M_PI * (eq.s_star - p.s_st) / range;
    vprime = 0.5 * p.v_max * (M_PI / range) * std::sin(phase);
  }
  HdvLinearization lin;
  lin.alpha1 = p.alpha * vprime;
  lin.alpha2 = p.alpha + p.beta;
  lin.alpha3 = p.beta;
  if (std::abs(lin.well_posedness()) < 1e-12) {
    throw Error(Errc::WellPosednessViolation,
                "alpha1 - alpha2*alpha3 + alpha3^2 vanishes at this equilibrium");
  }
  return lin;
}

LinearContinuousModel build_continuous(const FleetTopology& fleet, const HdvLinearization& lin) {
  const int n = fleet.n;
  const int m = fleet.m();
  LinearContinuousModel mdl;
  mdl.fleet = fleet;
  mdl.A = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  mdl.B = Eigen::MatrixXd::Zero(2 * n, m);
  mdl.H = Eigen::VectorXd::Zero(2 * n);
  mdl.C = Eigen::MatrixXd::Zero(n + m, 2 * n);

  for (int i = 1; i <= n; ++i) {
    const int r = 2 * (i - 1);
    // spacing error row: s_i' = v_{i-1} - v_i
    mdl.A(r, r + 1) = -1.0;
    if (i > 1) mdl.A(r, r - 1) = 1.0;
    if (!fleet.is_cav(i)) {
      mdl.A(r + 1, r) = lin.alpha1;
      mdl.A(r + 1, r + 1) = -lin.alpha2;
      if (i > 1) mdl.A(r + 1, r - 1) = lin.alpha3;
    }
  }
  // head-vehicle disturbance enters the first vehicle's block
  mdl.H(0) = 1.0;
  mdl.H(1) = lin.alpha3;

  for (int kidx = 0; kidx < m; ++kidx) {
    mdl.B(2 * fleet.cav_indices[kidx] - 1, kidx) = 1.0;
  }

  // outputs: full CAV states first, then HDV velocity errors
  int row = 0;
  for (int idx : fleet.cav_indices) {
    mdl.C(row++, 2 * (idx - 1)) = 1.0;
    mdl.C(row++, 2 * (idx - 1) + 1) = 1.0;
  }
  for (int idx : fleet.hdv_indices) {
    mdl.C(row++, 2 * (idx - 1) + 1) = 1.0;
  }
  return mdl;
}

Eigen::MatrixXd expm(const Eigen::MatrixXd& M) {
  const Eigen::Index n = M.rows();
  double norm = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) norm = std::max(norm, M.row(i).cwiseAbs().sum());
  int squarings = 0;
  double scale = 1.0;
  while (norm * scale > 0.5) {
    scale *= 0.5;
    ++squarings;
  }
  const Eigen::MatrixXd S = M * scale;
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= 40; ++k) {
    term = (term * S) / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, result.cwiseAbs().maxCoeff())) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

LinearDiscreteModel discretize(const LinearContinuousModel& model, double dt) {
  if (dt < 0.0) throw Error(Errc::DimensionMismatch, "dt must be >= 0");
  const int n2 = static_cast<int>(model.A.rows());
  const int m = static_cast<int>(model.B.cols());

  // augmented [[A, B_hat], [0, 0]]; its exponential carries A_d and the
  // input integrals in one block row
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n2 + m + 1, n2 + m + 1);
  aug.topLeftCorner(n2, n2) = model.A;
  aug.block(0, n2, n2, 1) = model.H;
  if (m > 0) aug.block(0, n2 + 1, n2, m) = model.B;
  const Eigen::MatrixXd E = expm(aug * dt);

  LinearDiscreteModel d;
  d.fleet = model.fleet;
  d.dt = dt;
  d.A_d = E.topLeftCorner(n2, n2);
  d.H_d = E.block(0, n2, n2, 1);
  d.B_d = E.block(0, n2 + 1, n2, m);
  d.C_d = model.C;
  d.B_hat_d.resize(n2, m + 1);
  d.B_hat_d.col(0) = d.H_d;
  if (m > 0) d.B_hat_d.rightCols(m) = d.B_d;
  return d;
}

ResponseMaps identity_maps(const LinearDiscreteModel& d) {
  ResponseMaps maps;
  maps.input_matrix = d.B_d;
  maps.output_map = d.C_d;
  maps.input_offset = Eigen::VectorXd::Zero(d.A_d.rows());
  maps.output_offset = Eigen::VectorXd::Zero(d.C_d.rows());
  return maps;
}

LiftedResponse lifted_response_depth(const LinearDiscreteModel& d, const ResponseMaps& maps,
                                     int depth) {
  if (depth < 1) throw Error(Errc::DimensionMismatch, "lifted response needs depth >= 1");
  const int n2 = static_cast<int>(d.A_d.rows());
  const int m = static_cast<int>(maps.input_matrix.cols());
  const int p = static_cast<int>(maps.output_map.rows());
  if (maps.output_map.cols() != n2 || maps.input_matrix.rows() != n2 ||
      maps.input_offset.size() != n2 || maps.output_offset.size() != p) {
    throw Error(Errc::DimensionMismatch, "response map shapes do not match the model");
  }

  // powers of A_d premultiplied by the output map
  std::vector<Eigen::MatrixXd> cpow(depth);  // output_map * A_d^k
  cpow[0] = maps.output_map;
  for (int k = 1; k < depth; ++k) cpow[k] = cpow[k - 1] * d.A_d;

  LiftedResponse lr;
  lr.depth = depth;
  lr.T_u = Eigen::MatrixXd::Zero(p * depth, m * depth);
  lr.T_eps = Eigen::MatrixXd::Zero(p * depth, depth);
  lr.T_x = Eigen::MatrixXd::Zero(p * depth, n2);
  lr.T_l = Eigen::VectorXd::Zero(p * depth);

  Eigen::VectorXd offset_sum = Eigen::VectorXd::Zero(p);  // sum_k C A^k L_u
  Eigen::VectorXd apow_lu = maps.input_offset;            // A_d^k * input_offset
  for (int k = 0; k < depth; ++k) {
    lr.T_x.middleRows(k * p, p) = cpow[k];
    for (int j = 0; j < k; ++j) {
      lr.T_u.block(k * p, j * m, p, m) = cpow[k - 1 - j] * maps.input_matrix;
      lr.T_eps.block(k * p, j, p, 1) = cpow[k - 1 - j] * d.H_d;
    }
    lr.T_l.segment(k * p, p) = maps.output_offset + offset_sum;
    offset_sum += maps.output_map * apow_lu;
    apow_lu = d.A_d * apow_lu;
  }
  return lr;
}

LiftedResponse lifted_response(const LinearDiscreteModel& d, const ResponseMaps& maps,
                               int t_ini, int horizon) {
  if (t_ini < 1 || horizon < 1) {
    throw Error(Errc::DimensionMismatch, "lifted response needs t_ini >= 1 and horizon >= 1");
  }
  return lifted_response_depth(d, maps, t_ini + horizon);
}

}  // namespace deeplcc
