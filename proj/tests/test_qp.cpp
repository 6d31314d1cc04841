#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "deeplcc/qp.hpp"
#include "deeplcc/rng.hpp"

using namespace deeplcc;

namespace {

// ---------------------------------------------------------------------------
// oracle 1: exhaustive active-set enumeration on one-sided rows
// minimize x'Px + q'x  s.t.  A_eq x = b_eq,  rows a_i' x <= b_i
// Every subset of active inequalities yields an equality-constrained
// candidate; the best feasible candidate is the optimum.
struct OneSided {
  Eigen::MatrixXd A;  // r x d
  Eigen::VectorXd b;  // r
};

double enumeration_oracle(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                          const Eigen::MatrixXd& A_eq, const Eigen::VectorXd& b_eq,
                          const OneSided& in) {
  const Eigen::Index d = P.rows(), p = A_eq.rows(), r = in.A.rows();
  REQUIRE(r <= 14);
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 0; mask < (1ULL << r); ++mask) {
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < r; ++i) {
      if (mask & (1ULL << i)) ++k;
    }
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(d + p + k, d + p + k);
    Eigen::VectorXd rhs(d + p + k);
    K.topLeftCorner(d, d) = 2.0 * P;  // stationarity of x'Px + q'x
    rhs.head(d) = -q;
    if (p > 0) {
      K.block(d, 0, p, d) = A_eq;
      K.block(0, d, d, p) = A_eq.transpose();
      rhs.segment(d, p) = b_eq;
    }
    Eigen::Index row = d + p;
    for (Eigen::Index i = 0; i < r; ++i) {
      if (!(mask & (1ULL << i))) continue;
      K.block(row, 0, 1, d) = in.A.row(i);
      K.block(0, row, d, 1) = in.A.row(i).transpose();
      rhs[row] = in.b[i];
      ++row;
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd x = sol.head(d);
    bool feasible = true;
    for (Eigen::Index i = 0; i < r && feasible; ++i) {
      if (in.A.row(i).dot(x) > in.b[i] + 1e-8) feasible = false;
    }
    if (p > 0 && (A_eq * x - b_eq).cwiseAbs().maxCoeff() > 1e-8) feasible = false;
    if (!feasible) continue;
    best = std::min(best, x.dot(P * x) + q.dot(x));
  }
  return best;
}

// ---------------------------------------------------------------------------
// oracle 2: accelerated projected gradient on the dual (for larger row
// counts). Independent of the operator-splitting implementation.
double dual_fista_oracle(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                         const Eigen::MatrixXd& A_eq, const Eigen::VectorXd& b_eq,
                         const OneSided& in, int iters = 200000) {
  const Eigen::Index p = A_eq.rows(), r = in.A.rows();
  Eigen::MatrixXd A(p + r, P.rows());
  Eigen::VectorXd b(p + r);
  if (p > 0) {
    A.topRows(p) = A_eq;
    b.head(p) = b_eq;
  }
  A.bottomRows(r) = in.A;
  b.tail(r) = in.b;

  const Eigen::LLT<Eigen::MatrixXd> llt((2.0 * P).eval());
  const Eigen::MatrixXd PiAt = llt.solve(A.transpose());
  const Eigen::MatrixXd M = A * PiAt;  // A P^{-1} A'
  const Eigen::VectorXd v = A * llt.solve(q);
  const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues().maxCoeff();
  const double step = 1.0 / std::max(L, 1e-12);

  Eigen::VectorXd y = Eigen::VectorXd::Zero(p + r), z = y;
  double t = 1.0;
  for (int it = 0; it < iters; ++it) {
    // gradient of the dual at the extrapolated point
    const Eigen::VectorXd grad = -(M * z + v) - b;
    Eigen::VectorXd y_new = z + step * grad;
    for (Eigen::Index i = p; i < p + r; ++i) y_new[i] = std::max(0.0, y_new[i]);
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = y_new + ((t - 1.0) / t_new) * (y_new - y);
    y = y_new;
    t = t_new;
  }
  const Eigen::VectorXd x = -llt.solve(q + A.transpose() * y);
  return x.dot(P * x) + q.dot(x);
}

QuadraticProgram to_program(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                            const Eigen::MatrixXd& A_eq, const Eigen::VectorXd& b_eq,
                            const OneSided& in) {
  QuadraticProgram qp;
  qp.P = P;
  qp.q = q;
  qp.A_eq = A_eq;
  qp.b_eq = b_eq;
  qp.A_in = in.A;
  qp.hi = in.b;
  qp.lo = Eigen::VectorXd::Constant(in.A.rows(), -kQpInf);
  return qp;
}

struct RandomInstance {
  Eigen::MatrixXd P, A_eq;
  Eigen::VectorXd q, b_eq;
  OneSided in;
};

RandomInstance random_instance(Rng& rng, Eigen::Index d, Eigen::Index p, Eigen::Index r) {
  RandomInstance inst;
  Eigen::MatrixXd B(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) B(i, j) = rng.uniform(-1.0, 1.0);
  }
  inst.P = B.transpose() * B + 0.5 * Eigen::MatrixXd::Identity(d, d);
  inst.q.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) inst.q[i] = rng.uniform(-2.0, 2.0);

  Eigen::VectorXd x_feas(d);
  for (Eigen::Index i = 0; i < d; ++i) x_feas[i] = rng.uniform(-1.0, 1.0);

  inst.A_eq.resize(p, d);
  inst.b_eq.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) inst.A_eq(i, j) = rng.uniform(-1.0, 1.0);
    inst.b_eq[i] = inst.A_eq.row(i).dot(x_feas);
  }
  inst.in.A.resize(r, d);
  inst.in.b.resize(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) inst.in.A(i, j) = rng.uniform(-1.0, 1.0);
    // keep the feasible point inside, some rows nearly active
    inst.in.b[i] = inst.in.A.row(i).dot(x_feas) + rng.uniform(0.01, 1.5);
  }
  return inst;
}

}  // namespace

TEST_CASE("textbook instances") {
  SUBCASE("unconstrained quadratic bowl") {
    QuadraticProgram qp;
    qp.P = Eigen::MatrixXd::Identity(2, 2);
    qp.q = Eigen::VectorXd::Constant(2, -2.0);
    qp.A_eq.resize(0, 2);
    qp.b_eq.resize(0);
    qp.A_in.resize(0, 2);
    qp.lo.resize(0);
    qp.hi.resize(0);
    const QpSolution sol = solve(qp);
    CHECK(sol.status == QpStatus::Optimal);
    CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sol.x[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sol.kkt_residual <= 1e-9);
  }
  SUBCASE("box projection in one dimension") {
    QuadraticProgram qp;
    qp.P = Eigen::MatrixXd::Constant(1, 1, 2.0);
    qp.q = Eigen::VectorXd::Zero(1);
    qp.A_eq.resize(0, 1);
    qp.b_eq.resize(0);
    qp.A_in = Eigen::MatrixXd::Identity(1, 1);
    qp.lo = Eigen::VectorXd::Constant(1, 1.0);
    qp.hi = Eigen::VectorXd::Constant(1, 2.0);
    const QpSolution sol = solve(qp);
    CHECK(sol.status == QpStatus::Optimal);
    CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("single equality splits evenly") {
    QuadraticProgram qp;
    qp.P = Eigen::MatrixXd::Identity(2, 2);
    qp.q = Eigen::VectorXd::Zero(2);
    qp.A_eq = Eigen::MatrixXd::Ones(1, 2);
    qp.b_eq = Eigen::VectorXd::Ones(1);
    qp.A_in.resize(0, 2);
    qp.lo.resize(0);
    qp.hi.resize(0);
    const QpSolution sol = solve(qp);
    CHECK(sol.status == QpStatus::Optimal);
    CHECK(sol.x[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(sol.x[1] == doctest::Approx(0.5).epsilon(1e-8));
  }
}

TEST_CASE("objective matches the oracles on 100 random instances") {
  Rng rng(51);
  int enumerated = 0, refined = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index d = 2 + rng.uniform_int(0, 28);
    const Eigen::Index p = rng.uniform_int(0, std::min<Eigen::Index>(3, d - 1));
    const bool small = rep % 10 < 7;
    const Eigen::Index r = small ? rng.uniform_int(1, 12) : rng.uniform_int(13, 20);
    const RandomInstance inst = random_instance(rng, d, p, r);

    const QpSolution sol = solve(to_program(inst.P, inst.q, inst.A_eq, inst.b_eq, inst.in));
    REQUIRE(sol.status == QpStatus::Optimal);

    double ref;
    if (small) {
      ref = enumeration_oracle(inst.P, inst.q, inst.A_eq, inst.b_eq, inst.in);
      ++enumerated;
    } else {
      ref = dual_fista_oracle(inst.P, inst.q, inst.A_eq, inst.b_eq, inst.in, 60000);
      ++refined;
    }
    CHECK(std::abs(sol.objective - ref) <= 1e-6 * std::max(1.0, std::abs(ref)));
  }
  CHECK(enumerated >= 60);
  CHECK(refined >= 20);
}

TEST_CASE("scaling the cost leaves the minimizer unchanged") {
  Rng rng(52);
  const RandomInstance inst = random_instance(rng, 12, 2, 8);
  const QpSolution a = solve(to_program(inst.P, inst.q, inst.A_eq, inst.b_eq, inst.in));
  const QpSolution b =
      solve(to_program(7.5 * inst.P, 7.5 * inst.q, inst.A_eq, inst.b_eq, inst.in));
  REQUIRE(a.status == QpStatus::Optimal);
  REQUIRE(b.status == QpStatus::Optimal);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("identical solves are bitwise identical") {
  Rng rng(53);
  const RandomInstance inst = random_instance(rng, 15, 1, 10);
  const auto qp = to_program(inst.P, inst.q, inst.A_eq, inst.b_eq, inst.in);
  const QpSolution a = solve(qp);
  const QpSolution b = solve(qp);
  REQUIRE(a.x.size() == b.x.size());
  for (Eigen::Index i = 0; i < a.x.size(); ++i) CHECK(a.x[i] == b.x[i]);
}

TEST_CASE("contradictory bounds produce an infeasibility certificate") {
  QuadraticProgram qp;
  qp.P = Eigen::MatrixXd::Identity(1, 1);
  qp.q = Eigen::VectorXd::Zero(1);
  qp.A_eq.resize(0, 1);
  qp.b_eq.resize(0);
  qp.A_in.resize(2, 1);
  qp.A_in << 1.0, 1.0;
  qp.lo.resize(2);
  qp.hi.resize(2);
  qp.lo << -kQpInf, 1.0;  // x <= 0 and x >= 1
  qp.hi << 0.0, kQpInf;
  QpSettings st;
  st.max_iter = 4000;
  const QpSolution sol = solve(qp, st);
  CHECK(sol.status == QpStatus::PrimalInfeasible);
}

TEST_CASE("rows with two infinite bounds are dropped at assembly") {
  QuadraticProgram qp;
  qp.P = Eigen::MatrixXd::Identity(2, 2);
  qp.q = Eigen::VectorXd::Constant(2, -1.0);
  qp.A_eq.resize(0, 2);
  qp.b_eq.resize(0);
  qp.A_in = Eigen::MatrixXd::Identity(2, 2);
  qp.lo.resize(2);
  qp.hi.resize(2);
  qp.lo << -kQpInf, -kQpInf;
  qp.hi << kQpInf, 0.5;
  const QpSolution sol = solve(qp);
  CHECK(sol.status == QpStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(sol.x[1] == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("active constraints are polished to tight kkt residuals") {
  Rng rng(54);
  for (int rep = 0; rep < 10; ++rep) {
    const RandomInstance inst = random_instance(rng, 20, 2, 10);
    const QpSolution sol = solve(to_program(inst.P, inst.q, inst.A_eq, inst.b_eq, inst.in));
    REQUIRE(sol.status == QpStatus::Optimal);
    CHECK(sol.kkt_residual <= 1e-8);
  }
}

TEST_CASE("asymmetric cost matrix is rejected") {
  QuadraticProgram qp;
  qp.P.resize(2, 2);
  qp.P << 1.0, 0.5, 0.0, 1.0;
  qp.q = Eigen::VectorXd::Zero(2);
  qp.A_eq.resize(0, 2);
  qp.b_eq.resize(0);
  qp.A_in.resize(0, 2);
  qp.lo.resize(0);
  qp.hi.resize(0);
  CHECK_THROWS(solve(qp));
}
