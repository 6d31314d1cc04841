#include "deeplcc/controller.hpp"

#include <Eigen/Cholesky>
#include <chrono>
#include <cmath>

#include "deeplcc/errors.hpp"
#include "deeplcc/linalg.hpp"

namespace deeplcc {

void ControllerConfig::validate() const {
  if (t_ini < 1 || horizon < 1) throw Error(Errc::DimensionMismatch, "horizons must be >= 1");
  if (!(w_s > 0 && w_v > 0 && w_u > 0)) throw Error(Errc::DimensionMismatch, "weights must be > 0");
  if (s_err_min > s_err_max || v_err_min > v_err_max || a_min > a_max) {
    throw Error(Errc::DimensionMismatch, "bounds must be ordered");
  }
  if (regularized && !(lambda_g > 0 && lambda_sigma > 0)) {
    throw Error(Errc::DimensionMismatch, "regularized mode needs lambda_g, lambda_sigma > 0");
  }
}

CostWeights CostWeights::make(const FleetTopology& fleet, const ControllerConfig& cfg) {
  const int n = fleet.n, m = fleet.m();
  CostWeights w;
  w.Q = Eigen::MatrixXd::Zero(n + m, n + m);
  for (int i = 0; i < m; ++i) {
    w.Q(2 * i, 2 * i) = cfg.w_s;
    w.Q(2 * i + 1, 2 * i + 1) = cfg.w_v;
  }
  for (int i = 2 * m; i < n + m; ++i) w.Q(i, i) = cfg.w_v;
  w.R = cfg.w_u * Eigen::MatrixXd::Identity(m, m);
  return w;
}

Eigen::VectorXd output_lower_bounds(const FleetTopology& fleet, const ControllerConfig& cfg) {
  const int n = fleet.n, m = fleet.m();
  Eigen::VectorXd lo(n + m);
  for (int i = 0; i < m; ++i) {
    lo[2 * i] = cfg.s_err_min;
    lo[2 * i + 1] = cfg.v_err_min;
  }
  for (int i = 2 * m; i < n + m; ++i) lo[i] = cfg.v_err_min;
  return lo;
}

Eigen::VectorXd output_upper_bounds(const FleetTopology& fleet, const ControllerConfig& cfg) {
  const int n = fleet.n, m = fleet.m();
  Eigen::VectorXd hi(n + m);
  for (int i = 0; i < m; ++i) {
    hi[2 * i] = cfg.s_err_max;
    hi[2 * i + 1] = cfg.v_err_max;
  }
  for (int i = 2 * m; i < n + m; ++i) hi[i] = cfg.v_err_max;
  return hi;
}

PastBuffer::PastBuffer(int m, int p, int t_ini) : m_(m), p_(p), t_ini_(t_ini) {
  u_ = Eigen::MatrixXd::Zero(m, t_ini);
  y_ = Eigen::MatrixXd::Zero(p, t_ini);
  eps_ = Eigen::VectorXd::Zero(t_ini);
}

void PastBuffer::push(const Eigen::VectorXd& u, double eps, const Eigen::VectorXd& y) {
  if (u.size() != m_ || y.size() != p_) {
    throw Error(Errc::DimensionMismatch, "buffer push size mismatch");
  }
  if (count_ < t_ini_) {
    u_.col(count_) = u;
    y_.col(count_) = y;
    eps_[count_] = eps;
  } else {
    u_.leftCols(t_ini_ - 1) = u_.rightCols(t_ini_ - 1).eval();
    y_.leftCols(t_ini_ - 1) = y_.rightCols(t_ini_ - 1).eval();
    eps_.head(t_ini_ - 1) = eps_.tail(t_ini_ - 1).eval();
    u_.col(t_ini_ - 1) = u;
    y_.col(t_ini_ - 1) = y;
    eps_[t_ini_ - 1] = eps;
  }
  ++count_;
}

Eigen::VectorXd PastBuffer::u_ini() const {
  Eigen::VectorXd v(m_ * t_ini_);
  for (int k = 0; k < t_ini_; ++k) v.segment(k * m_, m_) = u_.col(k);
  return v;
}

Eigen::VectorXd PastBuffer::eps_ini() const { return eps_; }

Eigen::VectorXd PastBuffer::y_ini() const {
  Eigen::VectorXd v(p_ * t_ini_);
  for (int k = 0; k < t_ini_; ++k) v.segment(k * p_, p_) = y_.col(k);
  return v;
}

DeepLccProblemSpec plain_problem_spec(const FleetTopology& fleet, const CostWeights& weights,
                                      const ControllerConfig& cfg, bool ones_row) {
  const int m = fleet.m(), p = fleet.n + fleet.m();
  DeepLccProblemSpec spec;
  spec.Q = weights.Q;
  spec.R = weights.R;
  spec.q_y = Eigen::VectorXd::Zero(p);
  spec.r_u = Eigen::VectorXd::Zero(m);
  spec.y_map = Eigen::MatrixXd::Identity(p, p);
  spec.u_map = Eigen::MatrixXd::Identity(m, m);
  spec.y_lo = output_lower_bounds(fleet, cfg);
  spec.y_hi = output_upper_bounds(fleet, cfg);
  spec.u_lo = Eigen::VectorXd::Constant(m, cfg.a_min);
  spec.u_hi = Eigen::VectorXd::Constant(m, cfg.a_max);
  spec.ones_row = ones_row;
  return spec;
}

namespace {

/// (I_N (x) M) * B without forming the Kronecker product.
Eigen::MatrixXd blockwise_apply(const Eigen::MatrixXd& M, const Eigen::MatrixXd& B, int steps) {
  const Eigen::Index bs = M.cols();
  Eigen::MatrixXd out(M.rows() * steps, B.cols());
  for (int k = 0; k < steps; ++k) {
    out.middleRows(k * M.rows(), M.rows()).noalias() = M * B.middleRows(k * bs, bs);
  }
  return out;
}

Eigen::MatrixXd chol_of_weight(const Eigen::MatrixXd& W) {
  Eigen::LLT<Eigen::MatrixXd> llt(W);
  if (llt.info() != Eigen::Success) {
    throw Error(Errc::DimensionMismatch, "cost weight block is not positive definite");
  }
  return Eigen::MatrixXd(llt.matrixU());  // W = U' U
}

}  // namespace

QuadraticProgram assemble_deeplcc_spec(const BlockMatrixSet& blocks, const Eigen::VectorXd& u_ini,
                                       const Eigen::VectorXd& eps_ini,
                                       const Eigen::VectorXd& y_ini,
                                       const DeepLccProblemSpec& spec,
                                       const ControllerConfig& cfg) {
  cfg.validate();
  const int t_ini = blocks.t_ini, N = blocks.horizon;
  const int m = blocks.m, p = blocks.p;
  if (t_ini != cfg.t_ini || N != cfg.horizon) {
    throw Error(Errc::DimensionMismatch, "block horizons do not match the configuration");
  }
  if (spec.Q.rows() != p || spec.R.rows() != m) {
    throw Error(Errc::DimensionMismatch, "weight shapes do not match the data blocks");
  }
  if (u_ini.size() != m * t_ini || eps_ini.size() != t_ini || y_ini.size() != p * t_ini) {
    throw Error(Errc::DimensionMismatch, "buffer shapes do not match the data blocks");
  }

  const Eigen::Index cols = blocks.cols;
  const Eigen::Index n_sigma = cfg.regularized ? static_cast<Eigen::Index>(p) * t_ini : 0;
  const Eigen::Index dim = cols + n_sigma;

  // objective: J = g' (Yf' Q~ Yf + Uf' R~ Uf) g + (Yf' q~ + Uf' r~)' g
  //            + lambda_g |g|^2 + lambda_sigma |sigma|^2
  const Eigen::MatrixXd Zy = blockwise_apply(chol_of_weight(spec.Q), blocks.Y_f, N);
  const Eigen::MatrixXd Zu = blockwise_apply(chol_of_weight(spec.R), blocks.U_f, N);

  QuadraticProgram qp;
  qp.P = Eigen::MatrixXd::Zero(dim, dim);
  {
    Eigen::MatrixXd Pg = Eigen::MatrixXd::Zero(cols, cols);
    const Eigen::VectorXd ones_y = Eigen::VectorXd::Ones(Zy.rows());
    const Eigen::VectorXd ones_u = Eigen::VectorXd::Ones(Zu.rows());
    linalg::add_weighted_gram(Zy, ones_y, Pg);
    linalg::add_weighted_gram(Zu, ones_u, Pg);
    if (cfg.regularized) Pg.diagonal().array() += cfg.lambda_g;
    qp.P.topLeftCorner(cols, cols) = Pg;
    if (n_sigma > 0) {
      qp.P.bottomRightCorner(n_sigma, n_sigma).diagonal().setConstant(cfg.lambda_sigma);
    }
  }
  qp.q = Eigen::VectorXd::Zero(dim);
  if (spec.q_y.cwiseAbs().maxCoeff() > 0.0 || spec.r_u.cwiseAbs().maxCoeff() > 0.0) {
    Eigen::VectorXd qy_stack(p * N), ru_stack(m * N);
    for (int k = 0; k < N; ++k) {
      qy_stack.segment(k * p, p) = spec.q_y;
      ru_stack.segment(k * m, m) = spec.r_u;
    }
    qp.q.head(cols) = blocks.Y_f.transpose() * qy_stack + blocks.U_f.transpose() * ru_stack;
  }

  // equalities: U_p g = u_ini; E_p g = eps_ini; E_f g = 0;
  //             Y_p g (- sigma) = y_ini; optional 1' g = 1
  const Eigen::Index eq_rows = m * t_ini + t_ini + N + p * t_ini + (spec.ones_row ? 1 : 0);
  qp.A_eq = Eigen::MatrixXd::Zero(eq_rows, dim);
  qp.b_eq = Eigen::VectorXd::Zero(eq_rows);
  Eigen::Index r = 0;
  qp.A_eq.block(r, 0, m * t_ini, cols) = blocks.U_p;
  qp.b_eq.segment(r, m * t_ini) = u_ini;
  r += m * t_ini;
  qp.A_eq.block(r, 0, t_ini, cols) = blocks.E_p;
  qp.b_eq.segment(r, t_ini) = eps_ini;
  r += t_ini;
  qp.A_eq.block(r, 0, N, cols) = blocks.E_f;
  r += N;
  qp.A_eq.block(r, 0, p * t_ini, cols) = blocks.Y_p;
  if (n_sigma > 0) {
    qp.A_eq.block(r, cols, n_sigma, n_sigma) = -Eigen::MatrixXd::Identity(n_sigma, n_sigma);
  }
  qp.b_eq.segment(r, p * t_ini) = y_ini;
  r += p * t_ini;
  if (spec.ones_row) {
    qp.A_eq.block(r, 0, 1, cols).setOnes();
    qp.b_eq[r] = 1.0;
  }

  // inequalities: y_lo <= y_map y(k) <= y_hi and u_lo <= u_map u(k) <= u_hi
  const Eigen::Index in_rows = static_cast<Eigen::Index>(p + m) * N;
  qp.A_in = Eigen::MatrixXd::Zero(in_rows, dim);
  qp.lo.resize(in_rows);
  qp.hi.resize(in_rows);
  qp.A_in.block(0, 0, p * N, cols) = blockwise_apply(spec.y_map, blocks.Y_f, N);
  qp.A_in.block(p * N, 0, m * N, cols) = blockwise_apply(spec.u_map, blocks.U_f, N);
  for (int k = 0; k < N; ++k) {
    qp.lo.segment(k * p, p) = spec.y_lo;
    qp.hi.segment(k * p, p) = spec.y_hi;
    qp.lo.segment(p * N + k * m, m) = spec.u_lo;
    qp.hi.segment(p * N + k * m, m) = spec.u_hi;
  }
  return qp;
}

QuadraticProgram assemble_deeplcc(const BlockMatrixSet& blocks, const PastBuffer& buf,
                                  const CostWeights& weights, const ControllerConfig& cfg,
                                  bool ones_row) {
  if (!buf.warmed_up()) throw Error(Errc::NotWarmedUp, "past buffer is not full yet");
  // reconstruct the fleet shape from the block dimensions
  const int m = blocks.m, p = blocks.p;
  std::vector<int> cavs;
  for (int i = 1; i <= m; ++i) cavs.push_back(i);
  const FleetTopology shape = FleetTopology::make(p - m, cavs);
  DeepLccProblemSpec spec = plain_problem_spec(shape, weights, cfg, ones_row);
  spec.Q = weights.Q;
  spec.R = weights.R;
  return assemble_deeplcc_spec(blocks, buf.u_ini(), buf.eps_ini(), buf.y_ini(), spec, cfg);
}

DeepLccController::DeepLccController(const FleetTopology& fleet, BlockMatrixSet blocks,
                                     DeepLccProblemSpec spec, ControllerConfig cfg,
                                     QpSettings solver_settings)
    : fleet_(fleet),
      blocks_(std::move(blocks)),
      spec_(std::move(spec)),
      cfg_(std::move(cfg)),
      solver_settings_(solver_settings),
      buffer_(blocks_.m, blocks_.p, cfg_.t_ini),
      m_(blocks_.m),
      p_(blocks_.p) {
  cfg_.validate();
  dim_ = blocks_.cols + (cfg_.regularized ? static_cast<Eigen::Index>(p_) * cfg_.t_ini : 0);
}

void DeepLccController::ensure_setup() {
  if (setup_done_) return;
  const QuadraticProgram qp = assemble_deeplcc_spec(
      blocks_, Eigen::VectorXd::Zero(m_ * cfg_.t_ini), Eigen::VectorXd::Zero(cfg_.t_ini),
      Eigen::VectorXd::Zero(p_ * cfg_.t_ini), spec_, cfg_);
  solver_.setup(qp, solver_settings_);
  setup_done_ = true;
}

Eigen::VectorXd DeepLccController::equality_rhs() const {
  const int t_ini = cfg_.t_ini, N = cfg_.horizon;
  const Eigen::Index rows =
      static_cast<Eigen::Index>(m_) * t_ini + t_ini + N + static_cast<Eigen::Index>(p_) * t_ini +
      (spec_.ones_row ? 1 : 0);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
  Eigen::Index r = 0;
  b.segment(r, m_ * t_ini) = buffer_.u_ini();
  r += m_ * t_ini;
  b.segment(r, t_ini) = buffer_.eps_ini();
  r += t_ini + N;  // E_f rows stay zero
  b.segment(r, p_ * t_ini) = buffer_.y_ini();
  r += p_ * t_ini;
  if (spec_.ones_row) b[r] = 1.0;
  return b;
}

StepResult DeepLccController::solve_current(const Eigen::VectorXd* u_override) {
  if (!buffer_.warmed_up()) throw Error(Errc::NotWarmedUp, "past buffer is not full yet");
  ensure_setup();
  solver_.update_equality_rhs(equality_rhs());

  const auto start = std::chrono::steady_clock::now();
  const QpSolution sol = solver_.solve();
  const auto stop = std::chrono::steady_clock::now();

  StepResult res;
  res.solved = true;
  res.status = sol.status;
  res.objective = sol.objective;
  res.kkt_residual = sol.kkt_residual;
  res.iterations = sol.iterations;
  res.solve_seconds = std::chrono::duration<double>(stop - start).count();
  res.flagged = (sol.status != QpStatus::Optimal);

  // u(t) is the first block of U_f g
  const Eigen::VectorXd g = sol.x.head(blocks_.cols);
  res.applied_input = blocks_.U_f.topRows(m_) * g;
  if (u_override != nullptr) res.applied_input = *u_override;
  return res;
}

StepResult DeepLccController::step(const Eigen::VectorXd& y, double eps) {
  StepResult res;
  if (!buffer_.warmed_up()) {
    res.applied_input =
        spec_.warmup_input.size() == m_ ? spec_.warmup_input : Eigen::VectorXd::Zero(m_);
    res.solved = false;
    buffer_.push(res.applied_input, eps, y);
    return res;
  }
  res = solve_current();
  buffer_.push(res.applied_input, eps, y);
  return res;
}

QuadraticProgram assemble_mpc(const LinearDiscreteModel& model, const Eigen::VectorXd& x_est,
                              const CostWeights& weights, const ControllerConfig& cfg) {
  cfg.validate();
  const int N = cfg.horizon;
  const int m = static_cast<int>(model.B_d.cols());
  const int p = static_cast<int>(model.C_d.rows());
  if (x_est.size() != model.A_d.rows()) {
    throw Error(Errc::DimensionMismatch, "state estimate size mismatch");
  }

  const LiftedResponse lr = lifted_response_depth(model, identity_maps(model), N);
  const Eigen::VectorXd y_free = lr.T_x * x_est;  // eps = 0 over the horizon

  const Eigen::MatrixXd Lq = chol_of_weight(weights.Q);
  const Eigen::MatrixXd Lr = chol_of_weight(weights.R);
  Eigen::MatrixXd Zy(p * N, m * N);
  Eigen::VectorXd zy_free(p * N);
  for (int k = 0; k < N; ++k) {
    Zy.middleRows(k * p, p) = Lq * lr.T_u.middleRows(k * p, p);
    zy_free.segment(k * p, p) = Lq * y_free.segment(k * p, p);
  }

  QuadraticProgram qp;
  const Eigen::Index dim = static_cast<Eigen::Index>(m) * N;
  qp.P = Eigen::MatrixXd::Zero(dim, dim);
  {
    Eigen::MatrixXd Pg = Eigen::MatrixXd::Zero(dim, dim);
    linalg::add_weighted_gram(Zy, Eigen::VectorXd::Ones(Zy.rows()), Pg);
    for (int k = 0; k < N; ++k) {
      Pg.block(k * m, k * m, m, m) += weights.R;
    }
    qp.P = Pg;
  }
  qp.q = 2.0 * (Zy.transpose() * zy_free);

  qp.A_eq.resize(0, dim);
  qp.b_eq.resize(0);

  const FleetTopology& fleet = model.fleet;
  const Eigen::VectorXd ylo1 = output_lower_bounds(fleet, cfg);
  const Eigen::VectorXd yhi1 = output_upper_bounds(fleet, cfg);
  const Eigen::Index rows = static_cast<Eigen::Index>(p + m) * N;
  qp.A_in = Eigen::MatrixXd::Zero(rows, dim);
  qp.lo.resize(rows);
  qp.hi.resize(rows);
  qp.A_in.topRows(p * N) = lr.T_u;
  qp.A_in.bottomRows(m * N) = Eigen::MatrixXd::Identity(m * N, m * N);
  for (int k = 0; k < N; ++k) {
    qp.lo.segment(k * p, p) = ylo1 - y_free.segment(k * p, p);
    qp.hi.segment(k * p, p) = yhi1 - y_free.segment(k * p, p);
    qp.lo.segment(p * N + k * m, m).setConstant(cfg.a_min);
    qp.hi.segment(p * N + k * m, m).setConstant(cfg.a_max);
  }
  return qp;
}

MpcController::MpcController(LinearDiscreteModel model, CostWeights weights, ControllerConfig cfg,
                             QpSettings solver_settings)
    : model_(std::move(model)),
      weights_(std::move(weights)),
      cfg_(std::move(cfg)),
      solver_settings_(solver_settings) {
  cfg_.validate();
  m_ = static_cast<int>(model_.B_d.cols());
  p_ = static_cast<int>(model_.C_d.rows());
  lifted_ = lifted_response_depth(model_, identity_maps(model_), cfg_.horizon);
  y_lo_ = output_lower_bounds(model_.fleet, cfg_);
  y_hi_ = output_upper_bounds(model_.fleet, cfg_);
}

StepResult MpcController::step(const Eigen::VectorXd& x_est) {
  const int N = cfg_.horizon;
  const Eigen::VectorXd y_free = lifted_.T_x * x_est;

  if (!setup_done_) {
    solver_.setup(assemble_mpc(model_, x_est, weights_, cfg_), solver_settings_);
    setup_done_ = true;
  } else {
    // only q and the output-row bounds move with the state
    Eigen::MatrixXd Lq = Eigen::LLT<Eigen::MatrixXd>(weights_.Q).matrixU();
    Eigen::VectorXd zy_free(p_ * N);
    Eigen::MatrixXd Zy(p_ * N, static_cast<Eigen::Index>(m_) * N);
    for (int k = 0; k < N; ++k) {
      Zy.middleRows(k * p_, p_) = Lq * lifted_.T_u.middleRows(k * p_, p_);
      zy_free.segment(k * p_, p_) = Lq * y_free.segment(k * p_, p_);
    }
    solver_.update_linear_cost(2.0 * (Zy.transpose() * zy_free));
    Eigen::VectorXd lo(static_cast<Eigen::Index>(p_ + m_) * N), hi(lo.size());
    for (int k = 0; k < N; ++k) {
      lo.segment(k * p_, p_) = y_lo_ - y_free.segment(k * p_, p_);
      hi.segment(k * p_, p_) = y_hi_ - y_free.segment(k * p_, p_);
      lo.segment(p_ * N + k * m_, m_).setConstant(cfg_.a_min);
      hi.segment(p_ * N + k * m_, m_).setConstant(cfg_.a_max);
    }
    solver_.update_bounds(lo, hi);
  }

  const auto start = std::chrono::steady_clock::now();
  const QpSolution sol = solver_.solve();
  const auto stop = std::chrono::steady_clock::now();

  StepResult res;
  res.solved = true;
  res.status = sol.status;
  res.kkt_residual = sol.kkt_residual;
  res.iterations = sol.iterations;
  res.solve_seconds = std::chrono::duration<double>(stop - start).count();
  res.flagged = (sol.status != QpStatus::Optimal);
  // report the full predicted cost, including the input-independent part,
  // so it is comparable with the data-driven objective
  Eigen::MatrixXd Lq = Eigen::LLT<Eigen::MatrixXd>(weights_.Q).matrixU();
  double free_cost = 0.0;
  for (int k = 0; k < cfg_.horizon; ++k) {
    free_cost += (Lq * y_free.segment(k * p_, p_)).squaredNorm();
  }
  res.objective = sol.objective + free_cost;
  res.applied_input = sol.x.head(m_);
  return res;
}

}  // namespace deeplcc
