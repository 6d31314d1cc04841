#include "deeplcc/linalg.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace deeplcc::linalg {

namespace {
std::atomic<bool> g_parallel{true};

// Below this many output elements the fork/join overhead dominates.
constexpr Eigen::Index kParallelCutoff = 64 * 64;
}  // namespace

void set_parallel(bool on) { g_parallel.store(on); }

bool parallel_enabled() {
#ifdef _OPENMP
  return g_parallel.load();
#else
  return false;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return parallel_enabled() ? omp_get_max_threads() : 1;
#else
  return 1;
#endif
}

namespace serial {

void weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w,
                   const Eigen::MatrixXd& B, Eigen::MatrixXd& C) {
  const Eigen::Index m = A.cols(), n = B.cols(), k = A.rows();
  C.resize(m, n);
  Eigen::VectorXd wb(k);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index r = 0; r < k; ++r) wb[r] = w[r] * B(r, j);
    for (Eigen::Index i = 0; i < m; ++i) {
      double acc = 0.0;
      const double* a = A.col(i).data();
      const double* b = wb.data();
      for (Eigen::Index r = 0; r < k; ++r) acc += a[r] * b[r];
      C(i, j) = acc;
    }
  }
}

void add_weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w, Eigen::MatrixXd& C) {
  const Eigen::Index m = A.cols(), k = A.rows();
  Eigen::VectorXd wa(k);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index r = 0; r < k; ++r) wa[r] = w[r] * A(r, j);
    // symmetric: fill lower triangle of column j, mirror afterwards
    for (Eigen::Index i = j; i < m; ++i) {
      double acc = 0.0;
      const double* a = A.col(i).data();
      const double* b = wa.data();
      for (Eigen::Index r = 0; r < k; ++r) acc += a[r] * b[r];
      C(i, j) += acc;
    }
  }
  for (Eigen::Index j = 1; j < m; ++j)
    for (Eigen::Index i = 0; i < j; ++i) C(i, j) = C(j, i);
}

bool cholesky_factor(Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index kcol = 0; kcol < n; ++kcol) {
    double d = a(kcol, kcol);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    d = std::sqrt(d);
    a(kcol, kcol) = d;
    const double inv = 1.0 / d;
    for (Eigen::Index i = kcol + 1; i < n; ++i) a(i, kcol) *= inv;
    // trailing update, column by column
    for (Eigen::Index j = kcol + 1; j < n; ++j) {
      const double ljk = a(j, kcol);
      if (ljk == 0.0) continue;
      double* colj = a.col(j).data();
      const double* colk = a.col(kcol).data();
      for (Eigen::Index i = j; i < n; ++i) colj[i] -= colk[i] * ljk;
    }
  }
  return true;
}

void cholesky_solve(const Eigen::MatrixXd& L, Eigen::VectorXd& x) {
  const Eigen::Index n = L.rows();
  // forward: column-oriented so the axpy walks contiguous memory
  for (Eigen::Index j = 0; j < n; ++j) {
    x[j] /= L(j, j);
    const double xj = x[j];
    const double* col = L.col(j).data();
    for (Eigen::Index i = j + 1; i < n; ++i) x[i] -= col[i] * xj;
  }
  // backward with L^T: row dot products over the stored columns
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double acc = x[i];
    const double* col = L.col(i).data();
    for (Eigen::Index j = i + 1; j < n; ++j) acc -= col[j] * x[j];
    x[i] = acc / L(i, i);
  }
}

bool ldlt_factor(Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index kcol = 0; kcol < n; ++kcol) {
    const double d = a(kcol, kcol);
    if (d == 0.0 || !std::isfinite(d)) return false;
    const double inv = 1.0 / d;
    for (Eigen::Index i = kcol + 1; i < n; ++i) a(i, kcol) *= inv;
    for (Eigen::Index j = kcol + 1; j < n; ++j) {
      const double s = a(j, kcol) * d;
      if (s == 0.0) continue;
      double* colj = a.col(j).data();
      const double* colk = a.col(kcol).data();
      for (Eigen::Index i = j; i < n; ++i) colj[i] -= colk[i] * s;
    }
  }
  return true;
}

void ldlt_solve(const Eigen::MatrixXd& LD, Eigen::VectorXd& x) {
  const Eigen::Index n = LD.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    const double xj = x[j];
    const double* col = LD.col(j).data();
    for (Eigen::Index i = j + 1; i < n; ++i) x[i] -= col[i] * xj;
  }
  for (Eigen::Index i = 0; i < n; ++i) x[i] /= LD(i, i);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double acc = x[i];
    const double* col = LD.col(i).data();
    for (Eigen::Index j = i + 1; j < n; ++j) acc -= col[j] * x[j];
    x[i] = acc;
  }
}

}  // namespace serial

namespace par {

void weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w,
                   const Eigen::MatrixXd& B, Eigen::MatrixXd& C) {
  const Eigen::Index m = A.cols(), n = B.cols(), k = A.rows();
  C.resize(m, n);
#pragma omp parallel
  {
    Eigen::VectorXd wb(k);
#pragma omp for schedule(static)
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index r = 0; r < k; ++r) wb[r] = w[r] * B(r, j);
      for (Eigen::Index i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* a = A.col(i).data();
        const double* b = wb.data();
        for (Eigen::Index r = 0; r < k; ++r) acc += a[r] * b[r];
        C(i, j) = acc;
      }
    }
  }
}

void add_weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w, Eigen::MatrixXd& C) {
  const Eigen::Index m = A.cols(), k = A.rows();
#pragma omp parallel
  {
    Eigen::VectorXd wa(k);
    // dynamic schedule: lower-triangle columns have uneven cost
#pragma omp for schedule(dynamic, 8)
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index r = 0; r < k; ++r) wa[r] = w[r] * A(r, j);
      for (Eigen::Index i = j; i < m; ++i) {
        double acc = 0.0;
        const double* a = A.col(i).data();
        const double* b = wa.data();
        for (Eigen::Index r = 0; r < k; ++r) acc += a[r] * b[r];
        C(i, j) += acc;
      }
    }
  }
  for (Eigen::Index j = 1; j < m; ++j)
    for (Eigen::Index i = 0; i < j; ++i) C(i, j) = C(j, i);
}

bool cholesky_factor(Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  bool ok = true;
#pragma omp parallel
  {
    for (Eigen::Index kcol = 0; kcol < n; ++kcol) {
#pragma omp single
      {
        double d = a(kcol, kcol);
        if (!(d > 0.0) || !std::isfinite(d)) {
          ok = false;
        } else {
          d = std::sqrt(d);
          a(kcol, kcol) = d;
          const double inv = 1.0 / d;
          for (Eigen::Index i = kcol + 1; i < n; ++i) a(i, kcol) *= inv;
        }
      }
      if (!ok) break;
#pragma omp for schedule(dynamic, 16)
      for (Eigen::Index j = kcol + 1; j < n; ++j) {
        const double ljk = a(j, kcol);
        if (ljk == 0.0) continue;
        double* colj = a.col(j).data();
        const double* colk = a.col(kcol).data();
        for (Eigen::Index i = j; i < n; ++i) colj[i] -= colk[i] * ljk;
      }
    }
  }
  return ok;
}

bool ldlt_factor(Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  bool ok = true;
#pragma omp parallel
  {
    for (Eigen::Index kcol = 0; kcol < n; ++kcol) {
#pragma omp single
      {
        const double d = a(kcol, kcol);
        if (d == 0.0 || !std::isfinite(d)) {
          ok = false;
        } else {
          const double inv = 1.0 / d;
          for (Eigen::Index i = kcol + 1; i < n; ++i) a(i, kcol) *= inv;
        }
      }
      if (!ok) break;
      const double d = a(kcol, kcol);
#pragma omp for schedule(dynamic, 16)
      for (Eigen::Index j = kcol + 1; j < n; ++j) {
        const double s = a(j, kcol) * d;
        if (s == 0.0) continue;
        double* colj = a.col(j).data();
        const double* colk = a.col(kcol).data();
        for (Eigen::Index i = j; i < n; ++i) colj[i] -= colk[i] * s;
      }
    }
  }
  return ok;
}

}  // namespace par

void weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w,
                   const Eigen::MatrixXd& B, Eigen::MatrixXd& C) {
  if (parallel_enabled() && A.cols() * B.cols() >= kParallelCutoff) {
    par::weighted_gram(A, w, B, C);
  } else {
    serial::weighted_gram(A, w, B, C);
  }
}

void add_weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w, Eigen::MatrixXd& C) {
  if (parallel_enabled() && A.cols() * A.cols() >= kParallelCutoff) {
    par::add_weighted_gram(A, w, C);
  } else {
    serial::add_weighted_gram(A, w, C);
  }
}

bool cholesky_factor(Eigen::MatrixXd& a) {
  if (parallel_enabled() && a.rows() >= 256) return par::cholesky_factor(a);
  return serial::cholesky_factor(a);
}

bool ldlt_factor(Eigen::MatrixXd& a) {
  if (parallel_enabled() && a.rows() >= 256) return par::ldlt_factor(a);
  return serial::ldlt_factor(a);
}

}  // namespace deeplcc::linalg
