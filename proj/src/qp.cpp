#include "deeplcc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deeplcc/csv.hpp"
#include "deeplcc/errors.hpp"
#include "deeplcc/linalg.hpp"

namespace deeplcc {

namespace {

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

bool is_inf(double b) { return std::abs(b) >= kQpInfThreshold; }

}  // namespace

const char* qp_status_name(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::PrimalInfeasible: return "primal_infeasible";
    case QpStatus::MaxIterations: return "max_iterations";
  }
  return "unknown";
}

void QuadraticProgram::validate() const {
  const Eigen::Index d = P.rows();
  if (P.cols() != d) throw Error(Errc::DimensionMismatch, "P must be square");
  if (q.size() != d) throw Error(Errc::DimensionMismatch, "q size mismatch");
  if (A_eq.rows() > 0 && A_eq.cols() != d) throw Error(Errc::DimensionMismatch, "A_eq cols");
  if (b_eq.size() != A_eq.rows()) throw Error(Errc::DimensionMismatch, "b_eq size");
  if (A_in.rows() > 0 && A_in.cols() != d) throw Error(Errc::DimensionMismatch, "A_in cols");
  if (lo.size() != A_in.rows() || hi.size() != A_in.rows()) {
    throw Error(Errc::DimensionMismatch, "lo/hi size");
  }
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (lo[i] > hi[i]) throw Error(Errc::DimensionMismatch, "lo > hi in inequality row");
  }
  const double asym = (P - P.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if (asym > 1e-12 * scale) throw Error(Errc::DimensionMismatch, "P is not symmetric");
}

void QpSolver::setup(QuadraticProgram qp, QpSettings settings) {
  qp.validate();
  qp_ = std::move(qp);
  st_ = settings;
  n_ = qp_.dim();
  n_eq_ = qp_.A_eq.rows();

  // merge constraints, dropping inequality rows with both bounds infinite
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < qp_.A_in.rows(); ++i) {
    if (!(is_inf(qp_.lo[i]) && is_inf(qp_.hi[i]))) keep.push_back(i);
  }
  m_rows_ = n_eq_ + static_cast<Eigen::Index>(keep.size());
  A_un_.resize(m_rows_, n_);
  l_un_.resize(m_rows_);
  u_un_.resize(m_rows_);
  if (n_eq_ > 0) {
    A_un_.topRows(n_eq_) = qp_.A_eq;
    l_un_.head(n_eq_) = qp_.b_eq;
    u_un_.head(n_eq_) = qp_.b_eq;
  }
  for (size_t k = 0; k < keep.size(); ++k) {
    const Eigen::Index i = keep[k];
    A_un_.row(n_eq_ + static_cast<Eigen::Index>(k)) = qp_.A_in.row(i);
    l_un_[n_eq_ + static_cast<Eigen::Index>(k)] = is_inf(qp_.lo[i]) ? -kQpInf : qp_.lo[i];
    u_un_[n_eq_ + static_cast<Eigen::Index>(k)] = is_inf(qp_.hi[i]) ? kQpInf : qp_.hi[i];
  }

  P2_ = 2.0 * qp_.P;  // objective is x'Px + q'x; the solver works with its gradient
  equilibrate();
  factor();

  xs_ = Eigen::VectorXd::Zero(n_);
  zs_ = Eigen::VectorXd::Zero(m_rows_);
  ys_ = Eigen::VectorXd::Zero(m_rows_);
  have_warm_ = false;
  polish_factored_ = false;
  polish_col_cache_.clear();
  setup_done_ = true;
}

void QpSolver::equilibrate() {
  D_ = Eigen::VectorXd::Ones(n_);
  E_ = Eigen::VectorXd::Ones(m_rows_);
  cost_scale_ = 1.0;

  Ps_ = P2_;
  A_ = A_un_;

  const auto clamp_scale = [](double v) {
    if (v < 1e-6) v = 1.0;  // empty row/col: leave alone
    return std::clamp(std::sqrt(1.0 / v), 1e-4, 1e4);
  };

  for (int pass = 0; pass < 10; ++pass) {
    Eigen::VectorXd dx(n_), dz(m_rows_);
    for (Eigen::Index j = 0; j < n_; ++j) {
      double cn = Ps_.col(j).cwiseAbs().maxCoeff();
      if (m_rows_ > 0) cn = std::max(cn, A_.col(j).cwiseAbs().maxCoeff());
      dx[j] = clamp_scale(cn);
    }
    for (Eigen::Index i = 0; i < m_rows_; ++i) {
      dz[i] = clamp_scale(A_.row(i).cwiseAbs().maxCoeff());
    }
    Ps_ = dx.asDiagonal() * Ps_ * dx.asDiagonal();
    A_ = dz.asDiagonal() * A_ * dx.asDiagonal();
    D_ = D_.cwiseProduct(dx);
    E_ = E_.cwiseProduct(dz);
  }

  qs_ = D_.cwiseProduct(qp_.q);
  double cost_norm = qs_.size() ? inf_norm(qs_) : 0.0;
  double pcols = 0.0;
  for (Eigen::Index j = 0; j < n_; ++j) pcols += Ps_.col(j).cwiseAbs().maxCoeff();
  if (n_ > 0) pcols /= static_cast<double>(n_);
  cost_norm = std::max(cost_norm, pcols);
  cost_scale_ = (cost_norm > 1e-12) ? 1.0 / cost_norm : 1.0;
  Ps_ *= cost_scale_;
  qs_ *= cost_scale_;

  l_.resize(m_rows_);
  u_.resize(m_rows_);
  for (Eigen::Index i = 0; i < m_rows_; ++i) {
    l_[i] = is_inf(l_un_[i]) ? -kQpInf : E_[i] * l_un_[i];
    u_[i] = is_inf(u_un_[i]) ? kQpInf : E_[i] * u_un_[i];
  }

  rho_.resize(m_rows_);
  for (Eigen::Index i = 0; i < m_rows_; ++i) {
    const bool eq_like = (i < n_eq_) || (l_[i] == u_[i]);
    rho_[i] = eq_like ? st_.rho * st_.rho_eq_scale : st_.rho;
  }
  rho_inv_ = rho_.cwiseInverse();
}

void QpSolver::factor() {
  chol_M_ = Ps_;
  chol_M_.diagonal().array() += st_.sigma;
  if (m_rows_ > 0) linalg::add_weighted_gram(A_, rho_, chol_M_);
  if (!linalg::cholesky_factor(chol_M_)) {
    throw Error(Errc::DimensionMismatch, "reduced system is not positive definite");
  }
}

void QpSolver::update_linear_cost(const Eigen::VectorXd& q) {
  if (q.size() != n_) throw Error(Errc::DimensionMismatch, "q size");
  qp_.q = q;
  qs_ = cost_scale_ * D_.cwiseProduct(q);
}

void QpSolver::update_equality_rhs(const Eigen::VectorXd& b_eq) {
  if (b_eq.size() != n_eq_) throw Error(Errc::DimensionMismatch, "b_eq size");
  qp_.b_eq = b_eq;
  l_un_.head(n_eq_) = b_eq;
  u_un_.head(n_eq_) = b_eq;
  l_.head(n_eq_) = E_.head(n_eq_).cwiseProduct(b_eq);
  u_.head(n_eq_) = l_.head(n_eq_);
}

void QpSolver::update_bounds(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() != qp_.A_in.rows() || hi.size() != qp_.A_in.rows()) {
    throw Error(Errc::DimensionMismatch, "bounds size");
  }
  qp_.lo = lo;
  qp_.hi = hi;
  // the kept-row mapping from setup() is positional: re-derive it
  Eigen::Index k = n_eq_;
  for (Eigen::Index i = 0; i < qp_.A_in.rows(); ++i) {
    if (is_inf(lo[i]) && is_inf(hi[i])) continue;
    l_un_[k] = is_inf(lo[i]) ? -kQpInf : lo[i];
    u_un_[k] = is_inf(hi[i]) ? kQpInf : hi[i];
    l_[k] = is_inf(lo[i]) ? -kQpInf : E_[k] * lo[i];
    u_[k] = is_inf(hi[i]) ? kQpInf : E_[k] * hi[i];
    ++k;
  }
  if (k != m_rows_) {
    throw Error(Errc::DimensionMismatch, "bound update changed the finite-row pattern");
  }
}

QpSolver::Residuals QpSolver::residuals(const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                                        const Eigen::VectorXd& y) const {
  Residuals r;
  const Eigen::VectorXd Ax = A_un_ * x;
  const Eigen::VectorXd Px = P2_ * x;
  const Eigen::VectorXd Aty = A_un_.transpose() * y;
  r.prim = m_rows_ ? inf_norm(Ax - z) : 0.0;
  r.dual = inf_norm(Px + qp_.q + Aty);
  r.eps_prim = st_.abs_tol + st_.rel_tol * std::max(inf_norm(Ax), inf_norm(z));
  r.eps_dual = st_.abs_tol +
               st_.rel_tol * std::max({inf_norm(Px), inf_norm(qp_.q), inf_norm(Aty)});
  return r;
}

double QpSolver::kkt_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  const Eigen::VectorXd Ax = A_un_ * x;
  double stat = inf_norm(P2_ * x + qp_.q + A_un_.transpose() * y);
  double feas = 0.0, comp = 0.0;
  for (Eigen::Index i = 0; i < m_rows_; ++i) {
    const double lo = l_un_[i], hi = u_un_[i];
    const double below = is_inf(lo) ? 0.0 : std::max(0.0, lo - Ax[i]);
    const double above = is_inf(hi) ? 0.0 : std::max(0.0, Ax[i] - hi);
    feas = std::max(feas, std::max(below, above));
    if (lo == hi) continue;  // equality rows: multiplier is free
    const double yp = std::max(y[i], 0.0);   // pushes against hi
    const double ym = std::max(-y[i], 0.0);  // pushes against lo
    if (yp > 0.0) comp = std::max(comp, is_inf(hi) ? yp : yp * std::abs(hi - Ax[i]));
    if (ym > 0.0) comp = std::max(comp, is_inf(lo) ? ym : ym * std::abs(Ax[i] - lo));
  }
  return std::max({stat, feas, comp});
}

bool QpSolver::primal_infeasibility_certificate(const Eigen::VectorXd& dy) const {
  const double dy_norm = inf_norm(dy);
  if (dy_norm < 1e-14) return false;
  const double aty = inf_norm(A_un_.transpose() * dy);
  if (aty > st_.inf_tol * dy_norm) return false;
  double support = 0.0;
  for (Eigen::Index i = 0; i < m_rows_; ++i) {
    const double p = std::max(dy[i], 0.0), m = std::min(dy[i], 0.0);
    if (p > 1e-12 * dy_norm) {
      if (is_inf(u_un_[i])) return false;
      support += u_un_[i] * p;
    }
    if (m < -1e-12 * dy_norm) {
      if (is_inf(l_un_[i])) return false;
      support += l_un_[i] * m;
    }
  }
  return support < -st_.inf_tol * dy_norm;
}

void QpSolver::ensure_polish_factor() {
  if (polish_factored_) return;
  const Eigen::Index dim = n_ + n_eq_;
  polish_LD_.setZero(dim, dim);
  polish_LD_.topLeftCorner(n_, n_) = P2_;
  polish_LD_.topLeftCorner(n_, n_).diagonal().array() += polish_delta_;
  if (n_eq_ > 0) {
    polish_LD_.block(n_, 0, n_eq_, n_) = qp_.A_eq;
    polish_LD_.block(0, n_, n_, n_eq_) = qp_.A_eq.transpose();
    polish_LD_.bottomRightCorner(n_eq_, n_eq_).diagonal().array() -= polish_delta_;
  }
  if (!linalg::ldlt_factor(polish_LD_)) {
    // fall back to a heavier regularization once
    polish_LD_.setZero(dim, dim);
    polish_LD_.topLeftCorner(n_, n_) = P2_;
    polish_LD_.topLeftCorner(n_, n_).diagonal().array() += 1e-4;
    if (n_eq_ > 0) {
      polish_LD_.block(n_, 0, n_eq_, n_) = qp_.A_eq;
      polish_LD_.block(0, n_, n_, n_eq_) = qp_.A_eq.transpose();
      polish_LD_.bottomRightCorner(n_eq_, n_eq_).diagonal().array() -= 1e-4;
    }
    if (!linalg::ldlt_factor(polish_LD_)) {
      throw Error(Errc::DimensionMismatch, "polish factorization failed");
    }
  }
  polish_factored_ = true;
  polish_col_cache_.clear();
}

Eigen::VectorXd QpSolver::base_kkt_solve(const Eigen::VectorXd& rx, const Eigen::VectorXd& re) {
  Eigen::VectorXd rhs(n_ + n_eq_);
  rhs.head(n_) = rx;
  if (n_eq_ > 0) rhs.tail(n_eq_) = re;
  linalg::ldlt_solve(polish_LD_, rhs);
  return rhs;
}

bool QpSolver::polish(Eigen::VectorXd& x, Eigen::VectorXd& y, double& kkt) {
  ensure_polish_factor();

  // active inequality rows, identified by the multiplier sign
  std::vector<Eigen::Index> act;
  std::vector<double> act_rhs;
  for (Eigen::Index i = n_eq_; i < m_rows_; ++i) {
    if (y[i] < -1e-10 && !is_inf(l_un_[i])) {
      act.push_back(i);
      act_rhs.push_back(l_un_[i]);
    } else if (y[i] > 1e-10 && !is_inf(u_un_[i])) {
      act.push_back(i);
      act_rhs.push_back(u_un_[i]);
    }
  }
  const Eigen::Index k = static_cast<Eigen::Index>(act.size());

  // columns K0^{-1} [a_i; 0] for the Schur complement, cached per row
  std::vector<const Eigen::VectorXd*> cols(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    auto it = polish_col_cache_.find(act[j]);
    if (it == polish_col_cache_.end()) {
      Eigen::VectorXd col =
          base_kkt_solve(A_un_.row(act[j]).transpose(), Eigen::VectorXd::Zero(n_eq_));
      it = polish_col_cache_.emplace(act[j], std::move(col)).first;
    }
    cols[j] = &it->second;
  }

  Eigen::MatrixXd S(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      S(i, j) = A_un_.row(act[i]).dot(cols[j]->head(n_));
    }
    S(i, i) += polish_delta_;
  }
  Eigen::MatrixXd S_LD;
  if (k > 0) {
    S_LD = 0.5 * (S + S.transpose());
    if (!linalg::ldlt_factor(S_LD)) return false;
  }

  // solve [[P, Aeq', Aact'], [Aeq, 0, 0], [Aact, 0, 0]] via Schur, then a
  // couple of refinement sweeps against the unregularized KKT system
  Eigen::VectorXd xp = Eigen::VectorXd::Zero(n_);
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(n_eq_);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(k);

  for (int sweep = 0; sweep < 3; ++sweep) {
    Eigen::VectorXd rx = -qp_.q - P2_ * xp;
    if (n_eq_ > 0) rx -= qp_.A_eq.transpose() * nu;
    Eigen::VectorXd re = qp_.b_eq - (n_eq_ > 0 ? (qp_.A_eq * xp).eval() : Eigen::VectorXd());
    Eigen::VectorXd ra(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      rx -= A_un_.row(act[j]).transpose() * mu[j];
      ra[j] = act_rhs[static_cast<size_t>(j)] - A_un_.row(act[j]).dot(xp);
    }
    const double rn = std::max({inf_norm(rx), inf_norm(re), inf_norm(ra)});
    if (rn < 1e-14) break;

    Eigen::VectorXd s0 = base_kkt_solve(rx, re);
    Eigen::VectorXd dmu(k);
    if (k > 0) {
      Eigen::VectorXd t(k);
      for (Eigen::Index j = 0; j < k; ++j) t[j] = A_un_.row(act[j]).dot(s0.head(n_)) - ra[j];
      linalg::ldlt_solve(S_LD, t);
      dmu = t;
      for (Eigen::Index j = 0; j < k; ++j) s0 -= (*cols[j]) * dmu[j];
    }
    xp += s0.head(n_);
    if (n_eq_ > 0) nu += s0.tail(n_eq_);
    if (k > 0) mu += dmu;
  }

  Eigen::VectorXd yp = Eigen::VectorXd::Zero(m_rows_);
  if (n_eq_ > 0) yp.head(n_eq_) = nu;
  for (Eigen::Index j = 0; j < k; ++j) yp[act[j]] = mu[j];

  const double kkt_pol = kkt_residual(xp, yp);
  if (!std::isfinite(kkt_pol) || kkt_pol >= kkt) return false;
  x = xp;
  y = yp;
  kkt = kkt_pol;
  return true;
}

QpSolution QpSolver::solve_cold() {
  xs_.setZero();
  zs_.setZero();
  ys_.setZero();
  have_warm_ = false;
  return solve();
}

QpSolution QpSolver::solve() {
  if (!setup_done_) throw Error(Errc::DimensionMismatch, "solver not set up");

  QpSolution sol;

  // no constraints at all: direct positive definite solve
  if (m_rows_ == 0) {
    Eigen::MatrixXd L = P2_;
    if (!linalg::cholesky_factor(L)) {
      throw Error(Errc::DimensionMismatch, "unconstrained problem needs positive definite P");
    }
    Eigen::VectorXd x = -qp_.q;
    linalg::cholesky_solve(L, x);
    sol.x = x;
    sol.status = QpStatus::Optimal;
    sol.kkt_residual = inf_norm(P2_ * x + qp_.q);
    sol.iterations = 0;
    sol.objective = x.dot(qp_.P * x) + qp_.q.dot(x);
    return sol;
  }

  const double alpha = st_.over_relaxation;
  Eigen::VectorXd y_prev_check = ys_;
  Eigen::VectorXd rhs(n_), xt(n_), zt(m_rows_), v(m_rows_);

  double best_kkt = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x, best_y;
  double tighten = 1.0;
  int infeas_hits = 0;

  int iter = 0;
  for (iter = 1; iter <= st_.max_iter; ++iter) {
    rhs = st_.sigma * xs_ - qs_;
    rhs.noalias() += A_.transpose() * (rho_.cwiseProduct(zs_) - ys_);
    xt = rhs;
    linalg::cholesky_solve(chol_M_, xt);
    zt.noalias() = A_ * xt;

    xs_ = alpha * xt + (1.0 - alpha) * xs_;
    v = alpha * zt + (1.0 - alpha) * zs_;
    zs_ = (v + rho_inv_.cwiseProduct(ys_)).cwiseMax(l_).cwiseMin(u_);
    ys_ += rho_.cwiseProduct(v - zs_);

    if (iter % st_.check_interval == 0 || iter == st_.max_iter) {
      // unscale for the convergence test
      const Eigen::VectorXd x = D_.cwiseProduct(xs_);
      const Eigen::VectorXd z = zs_.cwiseQuotient(E_);
      const Eigen::VectorXd y = E_.cwiseProduct(ys_) / cost_scale_;

      const Eigen::VectorXd dy = y - y_prev_check;
      y_prev_check = y;
      if (primal_infeasibility_certificate(dy)) {
        if (++infeas_hits >= 2) {
          sol.x = x;
          sol.status = QpStatus::PrimalInfeasible;
          sol.kkt_residual = kkt_residual(x, y);
          sol.iterations = iter;
          sol.objective = x.dot(qp_.P * x) + qp_.q.dot(x);
          return sol;
        }
      } else {
        infeas_hits = 0;
      }

      const Residuals r = residuals(x, z, y);
      const double admm_eps_p = std::max(r.eps_prim, 1e-6) * tighten;
      const double admm_eps_d = std::max(r.eps_dual, 1e-6) * tighten;
      if (r.prim <= admm_eps_p && r.dual <= admm_eps_d) {
        Eigen::VectorXd xc = x, yc = y;
        double kkt = kkt_residual(xc, yc);
        if (st_.polish) polish(xc, yc, kkt);
        if (kkt < best_kkt) {
          best_kkt = kkt;
          best_x = xc;
          best_y = yc;
        }
        if (best_kkt <= st_.abs_tol) {
          sol.x = best_x;
          sol.status = QpStatus::Optimal;
          sol.kkt_residual = best_kkt;
          sol.iterations = iter;
          sol.objective = best_x.dot(qp_.P * best_x) + qp_.q.dot(best_x);
          have_warm_ = true;
          return sol;
        }
        tighten *= 0.1;  // keep iterating toward a tighter hand-off point
      }
    }
  }

  const Eigen::VectorXd x = D_.cwiseProduct(xs_);
  const Eigen::VectorXd y = E_.cwiseProduct(ys_) / cost_scale_;
  if (best_x.size() == 0) {
    best_x = x;
    best_y = y;
    best_kkt = kkt_residual(x, y);
  }
  sol.x = best_x;
  sol.status = QpStatus::MaxIterations;
  sol.kkt_residual = best_kkt;
  sol.iterations = st_.max_iter;
  sol.objective = best_x.dot(qp_.P * best_x) + qp_.q.dot(best_x);
  return sol;
}

QpSolution solve(const QuadraticProgram& qp, const QpSettings& settings) {
  QpSolver solver;
  solver.setup(qp, settings);
  return solver.solve_cold();
}

void dump_csv(const QuadraticProgram& qp, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  csv::write_matrix(dir / "P.csv", qp.P);
  csv::write_matrix(dir / "q.csv", qp.q);
  csv::write_matrix(dir / "A_eq.csv", qp.A_eq);
  csv::write_matrix(dir / "b_eq.csv", qp.b_eq);
  csv::write_matrix(dir / "A_in.csv", qp.A_in);
  csv::write_matrix(dir / "lo.csv", qp.lo);
  csv::write_matrix(dir / "hi.csv", qp.hi);
}

}  // namespace deeplcc
