#include <doctest.h>

#include <Eigen/Dense>

#include "deeplcc/datamat.hpp"
#include "deeplcc/errors.hpp"
#include "deeplcc/model.hpp"
#include "deeplcc/rng.hpp"

using namespace deeplcc;

namespace {

Series scalar_series(std::initializer_list<double> vals) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v[i++] = x;
  return Series::from_vector(v);
}

Series random_series(Rng& rng, Eigen::Index q, Eigen::Index T, double scale = 1.0) {
  Series s;
  s.values.resize(q, T);
  for (Eigen::Index j = 0; j < T; ++j) {
    for (Eigen::Index i = 0; i < q; ++i) s.values(i, j) = rng.uniform(-scale, scale);
  }
  return s;
}

}  // namespace

TEST_CASE("hankel matrix layout") {
  SUBCASE("scalar example") {
    const auto h = hankel(scalar_series({1, 2, 3, 4}), 2);
    Eigen::MatrixXd expect(2, 3);
    expect << 1, 2, 3, 2, 3, 4;
    CHECK((h - expect).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("full depth gives one stacked column") {
    const auto s = scalar_series({5, 6, 7});
    const auto h = hankel(s, 3);
    CHECK(h.cols() == 1);
    CHECK(h(0, 0) == 5.0);
    CHECK(h(2, 0) == 7.0);
  }
  SUBCASE("vector-valued windows") {
    Series s;
    s.values.resize(2, 3);
    s.values << 1, 2, 3, 10, 20, 30;
    const auto h = hankel(s, 2);
    Eigen::MatrixXd expect(4, 2);
    expect << 1, 2, 10, 20, 2, 3, 20, 30;
    CHECK((h - expect).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("depth beyond length throws") {
    CHECK_THROWS_AS(hankel(scalar_series({1, 2}), 3), Error);
  }
  SUBCASE("every window is reproduced") {
    Rng rng(41);
    const auto s = random_series(rng, 3, 23);
    const int k = 5;
    const auto h = hankel(s, k);
    for (Eigen::Index j = 0; j < h.cols(); ++j) {
      for (int r = 0; r < k; ++r) {
        CHECK((h.block(3 * r, j, 3, 1) - s.values.col(j + r)).cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }
}

TEST_CASE("page matrix layout") {
  SUBCASE("even split") {
    const auto p = page(scalar_series({1, 2, 3, 4, 5, 6}), 2);
    Eigen::MatrixXd expect(2, 3);
    expect << 1, 3, 5, 2, 4, 6;
    CHECK((p - expect).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("trailing samples are dropped") {
    const auto p = page(scalar_series({1, 2, 3, 4, 5}), 2);
    Eigen::MatrixXd expect(2, 2);
    expect << 1, 3, 2, 4;
    CHECK((p - expect).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("depth four blocks") {
    const auto p = page(scalar_series({1, 2, 3, 4, 5, 6, 7, 8}), 4);
    Eigen::MatrixXd expect(4, 2);
    expect << 1, 5, 2, 6, 3, 7, 4, 8;
    CHECK((p - expect).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("columns tile the series disjointly") {
    Rng rng(42);
    const auto s = random_series(rng, 2, 21);
    const int k = 4;
    const auto p = page(s, k);
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      for (int r = 0; r < k; ++r) {
        CHECK((p.block(2 * r, j, 2, 1) - s.values.col(j * k + r)).cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }
}

TEST_CASE("past/future partition") {
  Rng rng(43);
  SUBCASE("hankel with exactly one column") {
    const int t_ini = 3, N = 4;
    const auto u = random_series(rng, 2, t_ini + N);
    const auto e = random_series(rng, 1, t_ini + N);
    const auto y = random_series(rng, 3, t_ini + N);
    const auto b = partition(MatrixKind::Hankel, u, e, y, t_ini, N);
    CHECK(b.cols == 1);
    for (int k = 0; k < t_ini; ++k) {
      CHECK((b.U_p.block(2 * k, 0, 2, 1) - u.values.col(k)).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("page column count follows the floor rule") {
    const int t_ini = 2, N = 3;
    const auto u = random_series(rng, 1, 3 * (t_ini + N));
    const auto e = random_series(rng, 1, 3 * (t_ini + N));
    const auto y = random_series(rng, 2, 3 * (t_ini + N));
    const auto b = partition(MatrixKind::Page, u, e, y, t_ini, N);
    CHECK(b.cols == 3);
  }
  SUBCASE("the reference configuration consumes 944 samples for 900 columns") {
    CHECK(samples_for_columns(MatrixKind::Hankel, 900, 15, 30) == 944);
    CHECK(columns_for_samples(MatrixKind::Hankel, 944, 15, 30) == 900);
    CHECK(samples_for_columns(MatrixKind::Page, 900, 15, 30) == 900 * 45);
  }
  SUBCASE("stacked past/future blocks reproduce the source matrix") {
    const int t_ini = 3, N = 2;
    const auto u = random_series(rng, 2, 17);
    const auto e = random_series(rng, 1, 17);
    const auto y = random_series(rng, 4, 17);
    const auto b = partition(MatrixKind::Hankel, u, e, y, t_ini, N);
    Eigen::MatrixXd stacked(b.U_p.rows() + b.U_f.rows(), b.cols);
    stacked << b.U_p, b.U_f;
    CHECK((stacked - hankel(u, t_ini + N)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("insufficient data throws") {
    const auto u = random_series(rng, 1, 4);
    const auto e = random_series(rng, 1, 4);
    const auto y = random_series(rng, 2, 4);
    CHECK_THROWS_AS(partition(MatrixKind::Hankel, u, e, y, 3, 3), Error);
  }
}

TEST_CASE("excitation certificates") {
  Rng rng(44);
  SUBCASE("constant series is never exciting") {
    const auto s = Series::from_vector(Eigen::VectorXd::Constant(30, 3.0));
    const auto cert = is_hankel_exciting(s, 2);
    CHECK_FALSE(cert.exciting);
    CHECK(cert.rank == 1);
    CHECK(cert.required == 2);
  }
  SUBCASE("random series is generically exciting") {
    const auto s = random_series(rng, 1, 50);
    const auto cert = is_hankel_exciting(s, 5);
    CHECK(cert.exciting);
    CHECK(cert.rank == 5);
  }
  SUBCASE("periodic series saturates at its period") {
    Eigen::VectorXd v(32);
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = (i % 4 == 0) ? 1.0 : 0.0;
    // a period-4 signal has Hankel rank 4 at every depth: full row rank holds
    // up to order 4 and fails beyond one period
    CHECK(is_hankel_exciting(Series::from_vector(v), 4).exciting);
    const auto cert5 = is_hankel_exciting(Series::from_vector(v), 5);
    CHECK_FALSE(cert5.exciting);
    CHECK(cert5.rank == 4);
    const auto cert6 = is_hankel_exciting(Series::from_vector(v), 6);
    CHECK_FALSE(cert6.exciting);
    CHECK(cert6.rank == 4);
  }
  SUBCASE("too-short series reports not exciting") {
    const auto s = scalar_series({1, 2});
    const auto cert = is_hankel_exciting(s, 5);
    CHECK_FALSE(cert.exciting);
  }
  SUBCASE("hankel excitation is monotone in the order") {
    for (int rep = 0; rep < 20; ++rep) {
      // mix generic and degenerate series
      Series s = (rep % 3 == 0)
                     ? Series::from_vector(Eigen::VectorXd::LinSpaced(40, 0.0, 1.0))
                     : random_series(rng, 1, 40);
      int highest = 0;
      for (int L = 1; L <= 8; ++L) {
        if (is_hankel_exciting(s, L).exciting) highest = L;
      }
      for (int L = 1; L <= highest; ++L) CHECK(is_hankel_exciting(s, L).exciting);
    }
  }
  SUBCASE("page excitation of order one is the page-rank condition") {
    const auto s = random_series(rng, 1, 60);
    const auto cert = is_page_exciting(s, 4, 1);
    CHECK(cert.required == 4);
    CHECK(cert.exciting);
    CHECK_FALSE(is_page_exciting(Series::from_vector(Eigen::VectorXd::Ones(60)), 4, 1).exciting);
  }
  SUBCASE("page excitation at higher order on long random data") {
    const auto s = random_series(rng, 1, 3 * 2 * (2 * 3 * 1 + 4));
    const auto cert = is_page_exciting(s, 2, 3);
    CHECK(cert.required == 6);
    CHECK(cert.exciting);
  }
  SUBCASE("page blocks with zero columns throw") {
    const auto s = random_series(rng, 1, 7);
    CHECK_THROWS_AS(is_page_exciting(s, 4, 2), Error);
  }
}

TEST_CASE("minimum sample counts") {
  CHECK(min_samples(MatrixKind::Hankel, 2, 6, 15, 30) == 227);
  CHECK(min_samples(MatrixKind::Page, 1, 2, 2, 3) == 270);
  CHECK(min_samples(MatrixKind::Hankel, 2, 6, 15, 30, true) == 231);
  CHECK(min_samples(MatrixKind::Page, 1, 2, 2, 3, true) == 5 * ((2 * 5 + 1) * 6 - 1));
}

TEST_CASE("stacked data matrices span the system trajectories") {
  // random controllable platoon models; trajectories generated by the
  // lifted response must lie in the span of the stacked blocks
  Rng rng(45);
  const OvmParams base{};
  int checked = 0;
  for (int rep = 0; rep < 12 && checked < 8; ++rep) {
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 2));
    std::vector<int> cavs{1 + static_cast<int>(rng.uniform_int(0, n - 1))};
    const auto fleet = FleetTopology::make(n, cavs);
    OvmParams p = base;
    p.alpha = rng.uniform(0.4, 1.0);
    p.beta = rng.uniform(0.3, 1.2);
    const auto eq = solve_equilibrium(p, rng.uniform(10.0, 20.0));
    const auto d = discretize(build_continuous(fleet, linearize(p, eq)), 0.05);
    const int m = fleet.m();

    const int t_ini = 4, N = 6, depth = t_ini + N;
    for (const MatrixKind kind : {MatrixKind::Hankel, MatrixKind::Page}) {
      const Eigen::Index T =
          kind == MatrixKind::Hankel
              ? static_cast<Eigen::Index>(min_samples(kind, m, n, t_ini, N)) + 40
              : static_cast<Eigen::Index>(depth) * (((m + 1) * depth + 1) * (2 * n + 1) + 10);

      // roll the discrete model under random excitation
      Series u_s, e_s, y_s;
      u_s.values.resize(m, T);
      e_s.values.resize(1, T);
      y_s.values.resize(n + m, T);
      Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * n);
      for (Eigen::Index k = 0; k < T; ++k) {
        for (int i = 0; i < m; ++i) u_s.values(i, k) = rng.uniform(-1.0, 1.0);
        e_s.values(0, k) = rng.uniform(-1.0, 1.0);
        y_s.values.col(k) = d.C_d * x;
        x = d.A_d * x + d.B_d * u_s.values.col(k) + d.H_d * e_s.values(0, k);
      }
      const auto blocks = partition(kind, u_s, e_s, y_s, t_ini, N);

      Eigen::MatrixXd stack(blocks.U_p.rows() + blocks.E_p.rows() + blocks.Y_p.rows() +
                                blocks.U_f.rows() + blocks.E_f.rows() + blocks.Y_f.rows(),
                            blocks.cols);
      stack << blocks.U_p, blocks.E_p, blocks.Y_p, blocks.U_f, blocks.E_f, blocks.Y_f;

      // a fresh trajectory from a random initial state and inputs
      const auto lr = lifted_response(d, identity_maps(d), t_ini, N);
      Eigen::VectorXd x0(2 * n), u_stack(m * depth), e_stack(depth);
      for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = rng.uniform(-1.0, 1.0);
      for (Eigen::Index i = 0; i < u_stack.size(); ++i) u_stack[i] = rng.uniform(-1.0, 1.0);
      for (Eigen::Index i = 0; i < e_stack.size(); ++i) e_stack[i] = rng.uniform(-1.0, 1.0);
      const Eigen::VectorXd y_stack =
          lr.T_u * u_stack + lr.T_eps * e_stack + lr.T_x * x0 + lr.T_l;

      Eigen::VectorXd target(stack.rows());
      target << u_stack.head(m * t_ini), e_stack.head(t_ini), y_stack.head((n + m) * t_ini),
          u_stack.tail(m * N), e_stack.tail(N), y_stack.tail((n + m) * N);

      const Eigen::VectorXd g = stack.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV)
                                    .solve(target);
      const double residual = (stack * g - target).cwiseAbs().maxCoeff();
      CHECK(residual < 1e-8);
      ++checked;
    }
  }
  CHECK(checked >= 8);
}
