#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "deeplcc/errors.hpp"
#include "deeplcc/model.hpp"
#include "deeplcc/rng.hpp"

using namespace deeplcc;

namespace {

const OvmParams kDefaults{};  // alpha 0.6, beta 0.9, s_st 5, s_go 35, v_max 30

// independent oracle: central finite differences of the car-following law
HdvLinearization finite_difference_linearization(const OvmParams& p, const Equilibrium& eq) {
  const double h = 1e-6;
  const auto F = [&](double s, double sd, double v) { return ovm_acceleration(p, s, sd, v); };
  HdvLinearization lin;
  const double dFds = (F(eq.s_star + h, 0, eq.v_star) - F(eq.s_star - h, 0, eq.v_star)) / (2 * h);
  const double dFdsd = (F(eq.s_star, h, eq.v_star) - F(eq.s_star, -h, eq.v_star)) / (2 * h);
  const double dFdv = (F(eq.s_star, 0, eq.v_star + h) - F(eq.s_star, 0, eq.v_star - h)) / (2 * h);
  lin.alpha1 = dFds;
  lin.alpha2 = dFdsd - dFdv;
  lin.alpha3 = dFdsd;
  return lin;
}

Eigen::VectorXd random_vec(Rng& rng, Eigen::Index n, double scale) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

}  // namespace

TEST_CASE("car-following acceleration at the reference points") {
  const Equilibrium eq = solve_equilibrium(kDefaults, ovm_desired_velocity(kDefaults, 20.0));
  CHECK(ovm_acceleration(kDefaults, eq.s_star, 0.0, ovm_desired_velocity(kDefaults, eq.s_star)) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ovm_acceleration(kDefaults, 5.0, 0.0, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
  // V(20) = 15 by the piecewise formula, so F = alpha * 15 = 9
  CHECK(ovm_acceleration(kDefaults, 20.0, 0.0, 0.0) == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("desired velocity is continuous at the corners") {
  const double eps = 1e-9;
  CHECK(std::abs(ovm_desired_velocity(kDefaults, 5.0 + eps) -
                 ovm_desired_velocity(kDefaults, 5.0 - eps)) < 1e-6);
  CHECK(std::abs(ovm_desired_velocity(kDefaults, 35.0 + eps) -
                 ovm_desired_velocity(kDefaults, 35.0 - eps)) < 1e-6);
}

TEST_CASE("equilibrium spacing solves V(s) = v*") {
  const Equilibrium eq = solve_equilibrium(kDefaults, 15.0);
  CHECK(eq.s_star == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(ovm_desired_velocity(kDefaults, eq.s_star) == doctest::Approx(15.0).epsilon(1e-9));
  CHECK(ovm_acceleration(kDefaults, eq.s_star, 0.0, eq.v_star) ==
        doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("linearization coefficients") {
  SUBCASE("beta = 0 gives alpha3 = 0 and alpha2 = alpha") {
    OvmParams p = kDefaults;
    p.beta = 0.0;
    const auto lin = linearize(p, solve_equilibrium(p, 15.0));
    CHECK(lin.alpha3 == 0.0);
    CHECK(lin.alpha2 == doctest::Approx(p.alpha).epsilon(1e-14));
  }
  SUBCASE("analytic alpha1 at the mid-range equilibrium") {
    const auto lin = linearize(kDefaults, solve_equilibrium(kDefaults, 15.0));
    const double expect = kDefaults.alpha * M_PI * kDefaults.v_max /
                          (2.0 * (kDefaults.s_go - kDefaults.s_st));
    CHECK(lin.alpha1 == doctest::Approx(expect).epsilon(1e-9));
    CHECK(lin.alpha2 == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(lin.alpha3 == doctest::Approx(0.9).epsilon(1e-14));
  }
  SUBCASE("matches the finite-difference oracle on random parameters") {
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
      OvmParams p;
      p.alpha = rng.uniform(0.2, 1.5);
      p.beta = rng.uniform(0.0, 1.5);
      p.s_st = rng.uniform(2.0, 8.0);
      p.s_go = p.s_st + rng.uniform(10.0, 40.0);
      p.v_max = rng.uniform(15.0, 35.0);
      const Equilibrium eq = solve_equilibrium(p, rng.uniform(0.2, 0.8) * p.v_max);
      HdvLinearization lin;
      try {
        lin = linearize(p, eq);
      } catch (const Error& e) {
        CHECK(e.code() == Errc::WellPosednessViolation);
        continue;
      }
      const auto fd = finite_difference_linearization(p, eq);
      CHECK(lin.alpha1 == doctest::Approx(fd.alpha1).epsilon(1e-6));
      CHECK(lin.alpha2 == doctest::Approx(fd.alpha2).epsilon(1e-6));
      CHECK(lin.alpha3 == doctest::Approx(fd.alpha3).epsilon(1e-6));
    }
  }
  SUBCASE("degenerate tuning is rejected") {
    // choose beta so alpha1 - alpha2 alpha3 + alpha3^2 = alpha (V' - beta) = 0
    OvmParams p = kDefaults;
    const Equilibrium eq = solve_equilibrium(p, 15.0);
    const auto lin0 = linearize(p, eq);
    p.beta = lin0.alpha1 / p.alpha;  // V'(s*)
    CHECK_THROWS_AS(linearize(p, eq), Error);
  }
}

TEST_CASE("continuous-time fleet matrices") {
  const auto lin = linearize(kDefaults, solve_equilibrium(kDefaults, 15.0));

  SUBCASE("single CAV") {
    const auto mdl = build_continuous(FleetTopology::make(1, {1}), lin);
    Eigen::MatrixXd a_expect(2, 2);
    a_expect << 0, -1, 0, 0;
    CHECK((mdl.A - a_expect).cwiseAbs().maxCoeff() == 0.0);
    CHECK(mdl.B(0, 0) == 0.0);
    CHECK(mdl.B(1, 0) == 1.0);
    CHECK(mdl.H[0] == 1.0);
    CHECK(mdl.H[1] == lin.alpha3);
    CHECK(mdl.C.isIdentity(0.0));
  }
  SUBCASE("single HDV") {
    const auto mdl = build_continuous(FleetTopology::make(1, {}), lin);
    Eigen::MatrixXd a_expect(2, 2);
    a_expect << 0, -1, lin.alpha1, -lin.alpha2;
    CHECK((mdl.A - a_expect).cwiseAbs().maxCoeff() == 0.0);
    CHECK(mdl.B.cols() == 0);
    CHECK(mdl.C.rows() == 1);
    CHECK(mdl.C(0, 0) == 0.0);
    CHECK(mdl.C(0, 1) == 1.0);
  }
  SUBCASE("two vehicles, CAV second") {
    const auto mdl = build_continuous(FleetTopology::make(2, {2}), lin);
    CHECK(mdl.B.rows() == 4);
    CHECK(mdl.B(3, 0) == 1.0);
    CHECK(mdl.B.cwiseAbs().sum() == 1.0);
    // outputs: CAV state rows e3, e4 then HDV velocity row e2
    Eigen::MatrixXd c_expect = Eigen::MatrixXd::Zero(3, 4);
    c_expect(0, 2) = 1.0;
    c_expect(1, 3) = 1.0;
    c_expect(2, 1) = 1.0;
    CHECK((mdl.C - c_expect).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("spacing rows are pure velocity differences for every vehicle") {
    const auto fleet = FleetTopology::make(5, {2, 4});
    const auto mdl = build_continuous(fleet, lin);
    for (int i = 1; i <= 5; ++i) {
      const int r = 2 * (i - 1);
      CHECK(mdl.A(r, r + 1) == -1.0);
      if (i > 1) CHECK(mdl.A(r, r - 1) == 1.0);
      for (int c = 0; c < 10; ++c) {
        if (c != r + 1 && c != r - 1) CHECK(mdl.A(r, c) == 0.0);
      }
    }
  }
}

TEST_CASE("discretization") {
  const auto lin = linearize(kDefaults, solve_equilibrium(kDefaults, 15.0));

  SUBCASE("dt = 0 is the identity") {
    const auto mdl = build_continuous(FleetTopology::make(2, {2}), lin);
    const auto d = discretize(mdl, 0.0);
    CHECK(d.A_d.isIdentity(1e-14));
    CHECK(d.B_d.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(d.H_d.cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("single CAV closed form at dt = 0.05") {
    const auto mdl = build_continuous(FleetTopology::make(1, {1}), lin);
    const auto d = discretize(mdl, 0.05);
    CHECK(d.A_d(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.A_d(0, 1) == doctest::Approx(-0.05).epsilon(1e-12));
    CHECK(d.A_d(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d.A_d(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.B_d(0, 0) == doctest::Approx(-0.00125).epsilon(1e-12));
    CHECK(d.B_d(1, 0) == doctest::Approx(0.05).epsilon(1e-12));
  }
  SUBCASE("matches the library exponential to 1e-10") {
    const auto fleet = FleetTopology::make(4, {2, 4});
    const auto mdl = build_continuous(fleet, lin);
    const auto d = discretize(mdl, 0.05);
    const Eigen::MatrixXd a_ref = (mdl.A * 0.05).exp();
    CHECK((d.A_d - a_ref).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("semigroup property") {
    const auto fleet = FleetTopology::make(3, {1, 3});
    const auto mdl = build_continuous(fleet, lin);
    for (const double dt : {0.05, 0.2, 1.0}) {
      const auto full = discretize(mdl, dt);
      const auto half = discretize(mdl, dt / 2.0);
      const Eigen::MatrixXd a2 = half.A_d * half.A_d;
      const Eigen::MatrixXd b2 = half.A_d * half.B_hat_d + half.B_hat_d;
      CHECK((a2 - full.A_d).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((b2 - full.B_hat_d).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  SUBCASE("reduces to forward Euler at second order") {
    const auto fleet = FleetTopology::make(3, {2});
    const auto mdl = build_continuous(fleet, lin);
    double err[2];
    const double dts[2] = {1e-3, 1e-4};
    for (int i = 0; i < 2; ++i) {
      const auto d = discretize(mdl, dts[i]);
      const Eigen::MatrixXd euler =
          Eigen::MatrixXd::Identity(mdl.A.rows(), mdl.A.cols()) + mdl.A * dts[i];
      err[i] = (d.A_d - euler).cwiseAbs().maxCoeff();
    }
    const double order = std::log10(err[0] / err[1]);
    CHECK(order >= 1.9);
  }
}

TEST_CASE("lifted response against recursive simulation") {
  const auto lin = linearize(kDefaults, solve_equilibrium(kDefaults, 15.0));

  SUBCASE("zero everything stays zero") {
    const auto d = discretize(build_continuous(FleetTopology::make(2, {1}), lin), 0.05);
    const auto lr = lifted_response(d, identity_maps(d), 3, 4);
    CHECK(lr.T_l.cwiseAbs().maxCoeff() == 0.0);
    CHECK(lr.T_u.topRows(d.C_d.rows()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(lr.T_eps.topRows(d.C_d.rows()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("impulse response gives the Markov parameters") {
    const auto d = discretize(build_continuous(FleetTopology::make(2, {2}), lin), 0.05);
    const int depth = 6;
    const auto lr = lifted_response_depth(d, identity_maps(d), depth);
    const int p = static_cast<int>(d.C_d.rows());
    Eigen::MatrixXd apow = Eigen::MatrixXd::Identity(4, 4);
    for (int k = 1; k < depth; ++k) {
      const Eigen::MatrixXd markov = d.C_d * apow * d.B_d;
      CHECK((lr.T_u.block(k * p, 0, p, 1) - markov).cwiseAbs().maxCoeff() < 1e-12);
      apow = apow * d.A_d;
    }
  }
  SUBCASE("random systems with offsets match step-by-step rollout") {
    Rng rng(31);
    for (int rep = 0; rep < 50; ++rep) {
      const int n = 1 + static_cast<int>(rng.uniform_int(0, 2));
      std::vector<int> cavs{1 + static_cast<int>(rng.uniform_int(0, n - 1))};
      const auto fleet = FleetTopology::make(n, cavs);
      const auto d = discretize(build_continuous(fleet, lin), 0.05);
      const int m = fleet.m(), p = n + m;
      const int depth = 2 + static_cast<int>(rng.uniform_int(0, 18));

      ResponseMaps maps = identity_maps(d);
      if (rep % 2 == 0) {
        // exercise the affine-offset path too
        maps.input_offset = random_vec(rng, 2 * n, 0.5);
        maps.output_offset = random_vec(rng, p, 0.5);
        maps.input_matrix = d.B_d * rng.uniform(0.5, 2.0);
        maps.output_map = d.C_d * rng.uniform(0.5, 2.0);
      }
      const auto lr = lifted_response_depth(d, maps, depth);

      const Eigen::VectorXd x0 = random_vec(rng, 2 * n, 1.0);
      Eigen::VectorXd u_stack(m * depth), e_stack(depth);
      for (Eigen::Index i = 0; i < u_stack.size(); ++i) u_stack[i] = rng.uniform(-1.0, 1.0);
      for (Eigen::Index i = 0; i < depth; ++i) e_stack[i] = rng.uniform(-1.0, 1.0);

      const Eigen::VectorXd lifted =
          lr.T_u * u_stack + lr.T_eps * e_stack + lr.T_x * x0 + lr.T_l;

      Eigen::VectorXd x = x0;
      double max_err = 0.0;
      for (int k = 0; k < depth; ++k) {
        const Eigen::VectorXd y = maps.output_map * x + maps.output_offset;
        max_err = std::max(max_err,
                           (lifted.segment(k * p, p) - y).cwiseAbs().maxCoeff());
        x = d.A_d * x + maps.input_matrix * u_stack.segment(k * m, m) + d.H_d * e_stack[k] +
            maps.input_offset;
      }
      CHECK(max_err < 1e-9);
    }
  }
}
