#pragma once

#include <Eigen/Core>

namespace deeplcc::linalg {

// Dense kernels on the hot path of the predictive controller: Gram products
// over the data matrices, normal-matrix formation, Cholesky factorization and
// triangular solves inside the QP solver.
//
// Each kernel exists twice: a serial reference in `serial` and an OpenMP
// variant in `par`. The parallel versions split work over output elements
// only, so every element is produced by the same reduction order as the
// reference and the results are bitwise identical for any thread count.
// The unqualified entry points dispatch on set_parallel()/problem size.

void set_parallel(bool on);
bool parallel_enabled();
int thread_count();

namespace serial {

/// C = A^T diag(w) B. A is k x m, B is k x n, w is k.
void weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w,
                   const Eigen::MatrixXd& B, Eigen::MatrixXd& C);

/// C += A^T diag(w) A (C must be m x m already).
void add_weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w, Eigen::MatrixXd& C);

/// In-place lower Cholesky of a symmetric positive definite matrix.
/// Returns false if a non-positive pivot is hit.
bool cholesky_factor(Eigen::MatrixXd& a);

/// Solve L L^T x = b in place given the factor from cholesky_factor.
void cholesky_solve(const Eigen::MatrixXd& L, Eigen::VectorXd& x);

/// In-place LDL^T (no pivoting) of a symmetric quasi-definite matrix.
/// L in the strict lower triangle with unit diagonal, D on the diagonal.
bool ldlt_factor(Eigen::MatrixXd& a);
void ldlt_solve(const Eigen::MatrixXd& LD, Eigen::VectorXd& x);

}  // namespace serial

namespace par {

void weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w,
                   const Eigen::MatrixXd& B, Eigen::MatrixXd& C);
void add_weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w, Eigen::MatrixXd& C);
bool cholesky_factor(Eigen::MatrixXd& a);
bool ldlt_factor(Eigen::MatrixXd& a);

}  // namespace par

// Dispatching entry points.
void weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w,
                   const Eigen::MatrixXd& B, Eigen::MatrixXd& C);
void add_weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w, Eigen::MatrixXd& C);
bool cholesky_factor(Eigen::MatrixXd& a);
inline void cholesky_solve(const Eigen::MatrixXd& L, Eigen::VectorXd& x) {
  serial::cholesky_solve(L, x);  // sequential by nature; see linalg.cpp
}
bool ldlt_factor(Eigen::MatrixXd& a);
inline void ldlt_solve(const Eigen::MatrixXd& LD, Eigen::VectorXd& x) {
  serial::ldlt_solve(LD, x);
}

}  // namespace deeplcc::linalg
