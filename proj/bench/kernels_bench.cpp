// Timing comparison of the serial reference kernels against the OpenMP
// variants at controller-realistic sizes. Build target: kernels_bench.

#include <chrono>
#include <cstdio>
#include <functional>

#include "deeplcc/linalg.hpp"
#include "deeplcc/rng.hpp"

namespace {

using deeplcc::Rng;
namespace linalg = deeplcc::linalg;

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-1.0, 1.0);
  }
  return m;
}

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

}  // namespace

int main() {
  std::printf("threads available: %d\n", linalg::thread_count());
  std::printf("%-28s %10s %12s %12s %8s\n", "kernel", "size", "serial_ms", "openmp_ms",
              "speedup");

  Rng rng(7);
  for (const Eigen::Index n : {256L, 512L, 1024L}) {
    const Eigen::Index k = 300;
    const Eigen::MatrixXd A = random_matrix(rng, k, n);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(k);

    Eigen::MatrixXd Cs = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd Cp = Eigen::MatrixXd::Zero(n, n);
    const double ts = time_best_of(3, [&] {
      Cs.setZero();
      linalg::serial::add_weighted_gram(A, w, Cs);
    });
    const double tp = time_best_of(3, [&] {
      Cp.setZero();
      linalg::par::add_weighted_gram(A, w, Cp);
    });
    const bool same = (Cs - Cp).cwiseAbs().maxCoeff() == 0.0;
    std::printf("%-28s %10ld %12.3f %12.3f %7.2fx %s\n", "add_weighted_gram(300xN)", n, ts * 1e3,
                tp * 1e3, ts / tp, same ? "" : "MISMATCH");
  }

  for (const Eigen::Index n : {256L, 512L, 1024L}) {
    Eigen::MatrixXd base = random_matrix(rng, n, n);
    Eigen::MatrixXd spd = base * base.transpose();
    spd.diagonal().array() += static_cast<double>(n);

    Eigen::MatrixXd Ls, Lp;
    const double ts = time_best_of(3, [&] {
      Ls = spd;
      linalg::serial::cholesky_factor(Ls);
    });
    const double tp = time_best_of(3, [&] {
      Lp = spd;
      linalg::par::cholesky_factor(Lp);
    });
    const bool same = (Ls - Lp).cwiseAbs().maxCoeff() == 0.0;
    std::printf("%-28s %10ld %12.3f %12.3f %7.2fx %s\n", "cholesky_factor", n, ts * 1e3, tp * 1e3,
                ts / tp, same ? "" : "MISMATCH");
  }
  return 0;
}
