#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "modepool/estimators.hpp"
#include "modepool/pooling.hpp"
#include "oracles.hpp"

using namespace modepool;
using oracle::cluster_sample;
using oracle::grid_argmin;

TEST_CASE("rho functions have the documented shapes") {
  RhoFunction tq{RhoKind::truncated_quadratic, 0.5};
  CHECK(tq.rho(0.3) == doctest::Approx(0.09));
  CHECK(tq.rho(2.0) == doctest::Approx(0.25));
  CHECK(tq.weight(0.0) == 1.0);
  CHECK(tq.weight(0.5) == 1.0);
  CHECK(tq.weight(0.500001) == 0.0);

  RhoFunction w{RhoKind::welsch, 0.5};
  CHECK(w.rho(0.0) == 0.0);
  CHECK(w.weight(0.0) == 1.0);
  CHECK(w.rho(10.0) == doctest::Approx(0.25).epsilon(1e-6));  // saturates at tau^2
  // nonincreasing weight in |r|
  double prev = 1.0;
  for (double r = 0.0; r < 3.0; r += 0.05) {
    CHECK(w.weight(r) <= prev + 1e-15);
    prev = w.weight(r);
  }
}

TEST_CASE("identical values converge in one iteration") {
  Eigen::VectorXd col = Eigen::VectorXd::Constant(7, 1.625);
  for (auto kind : {RhoKind::truncated_quadratic, RhoKind::welsch}) {
    IrlsTrace t = m_estimate_1d(col, {kind, 0.3});
    CHECK(t.converged);
    CHECK(t.iterations == 1);
    CHECK(t.estimate == 1.625);
  }
}

TEST_CASE("TQ trims the far outlier and averages the cluster") {
  Eigen::VectorXd col(4);
  col << 0.0, 0.05, 0.1, 10.0;
  RhoFunction tq{RhoKind::truncated_quadratic, 0.2};
  IrlsTrace t = m_estimate_1d(col, tq);
  CHECK(t.converged);
  CHECK(t.estimate == doctest::Approx(0.05).epsilon(1e-9));
  const double oracle = grid_argmin(col, tq, -10.0, 10.0);
  CHECK(std::abs(t.estimate - oracle) <= 2e-4);
}

TEST_CASE("m-estimates match the grid-search oracle on clustered instances") {
  Rng rng(2024);
  for (auto kind : {RhoKind::truncated_quadratic, RhoKind::welsch}) {
    for (int trial = 0; trial < 60; ++trial) {
      const double center = rng.uniform(-1.0, 1.0);
      const int n_in = 12 + static_cast<int>(rng.index(10));
      const int n_out = static_cast<int>(rng.index(6));
      Eigen::VectorXd col =
          oracle::isolated_cluster_sample(rng, n_in, center, 0.05, n_out, -2.0, 2.0, 0.6);
      RhoFunction rho{kind, 0.2};
      std::vector<double> objective;
      IrlsTrace t = m_estimate_1d(col, rho, 50, 1e-8, &objective);
      REQUIRE(t.converged);

      for (std::size_t i = 1; i < objective.size(); ++i) {
        CHECK(objective[i] <= objective[i - 1] + 1e-10);
      }

      const double oracle =
          grid_argmin(col, rho, col.minCoeff() - 0.1, col.maxCoeff() + 0.1);
      INFO("kind=", to_string(kind), " trial=", trial);
      CHECK(std::abs(t.estimate - oracle) <= 2e-4);
    }
  }
}

TEST_CASE("location follows the contaminated mixture's mode") {
  Rng rng(77);
  Eigen::VectorXd col = cluster_sample(rng, 200, 0.0, 1.0, 800, -5.0, 5.0);
  RhoFunction tq{RhoKind::truncated_quadratic, 0.5};
  IrlsTrace t = m_estimate_1d(col, tq);
  REQUIRE(t.converged);
  const double oracle = grid_argmin(col, tq, -5.0, 5.0, 1e-3);
  CHECK(std::abs(t.estimate - oracle) <= 0.35);  // same basin as the global grid minimum
  CHECK(std::abs(t.estimate) <= 0.35);
}

TEST_CASE("shift equivariance") {
  Rng rng(91);
  Eigen::VectorXd col(24);
  for (int i = 0; i < 24; ++i) col[i] = rng.uniform(-1.0, 1.0);
  const double shift = 2.0;
  for (auto kind : {RhoKind::truncated_quadratic, RhoKind::welsch}) {
    RhoFunction rho{kind, 0.3};
    IrlsTrace a = m_estimate_1d(col, rho, column_median(col).value, 50, 1e-10);
    IrlsTrace b = m_estimate_1d(col.array() + shift, rho, column_median(col).value + shift, 50,
                                1e-10);
    CHECK(b.estimate == doctest::Approx(a.estimate + shift).epsilon(1e-12));
  }
}

TEST_CASE("breakdown: majority cluster pins the estimate") {
  Rng rng(123);
  const double tau = 0.4;
  for (int trial = 0; trial < 20; ++trial) {
    const double center = rng.uniform(-1.0, 1.0);
    const int n_in = 11, n_out = 9;  // > 50% inside a tau/2 cluster
    Eigen::VectorXd col(n_in + n_out);
    double lo_hull = center, hi_hull = center;
    for (int i = 0; i < n_in; ++i) {
      col[i] = center + rng.uniform(-tau / 4.0, tau / 4.0);
      lo_hull = std::min(lo_hull, col[i]);
      hi_hull = std::max(hi_hull, col[i]);
    }
    for (int i = 0; i < n_out; ++i) {
      const double side = rng.index(2) == 0 ? -1.0 : 1.0;
      col[n_in + i] = center + side * (3.0 * tau + rng.uniform(0.0, 2.0));
    }
    for (auto kind : {RhoKind::truncated_quadratic, RhoKind::welsch}) {
      IrlsTrace t = m_estimate_1d(col, {kind, tau});
      REQUIRE(t.converged);
      CHECK(t.estimate >= lo_hull - 1e-9);
      CHECK(t.estimate <= hi_hull + 1e-9);
    }
  }
}

TEST_CASE("agreement with histogram pooling on contaminated unimodal samples") {
  Rng rng(321);
  const int bins = 20;
  const double lo = -2.0, hi = 2.0;
  const double width = (hi - lo) / bins;
  const double tau = width / 2.0;
  int agree = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const double center = rng.uniform(-1.2, 1.2);
    Eigen::VectorXd col = cluster_sample(rng, 40 + static_cast<int>(rng.index(20)), center,
                                         width / 4.0, static_cast<int>(rng.index(25)), lo, hi);
    const double hist = histogram_pool_1d(col, bins, lo, hi).value;
    IrlsTrace m = m_estimate_1d(col, {RhoKind::truncated_quadratic, tau});
    agree += std::abs(m.estimate - hist) <= 2.0 * std::max(tau, width);
  }
  CHECK(agree >= trials * 90 / 100);
}

TEST_CASE("all-outlier start falls back to the median and flags non-convergence") {
  Eigen::VectorXd col(4);
  col << 0.0, 10.0, 20.0, 30.0;
  RhoFunction tq{RhoKind::truncated_quadratic, 0.5};
  IrlsTrace t = m_estimate_1d(col, tq);
  CHECK_FALSE(t.converged);
  CHECK(t.estimate == doctest::Approx(15.0));
  CHECK_THROWS_AS(m_pool_backward(col, tq, t, 1.0), std::logic_error);
}

TEST_CASE("trace invariants on random instances") {
  Rng rng(55);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(30));
    Eigen::VectorXd col(n);
    for (int i = 0; i < n; ++i) col[i] = rng.uniform(-2.0, 2.0);
    const int max_iters = 1 + static_cast<int>(rng.index(40));
    const auto kind = rng.index(2) == 0 ? RhoKind::truncated_quadratic : RhoKind::welsch;
    IrlsTrace t = m_estimate_1d(col, {kind, 0.25}, max_iters, 1e-7);
    CHECK(t.iterations <= max_iters);
    CHECK(t.weights.size() == n);
    if (t.converged) CHECK(t.weights.sum() > 0.0);
  }
}

TEST_CASE("frozen-weight backward matches the trimmed-mean structure") {
  SUBCASE("all inliers reduce to the mean") {
    Eigen::VectorXd col(5);
    col << 0.1, 0.2, 0.15, 0.12, 0.18;
    RhoFunction tq{RhoKind::truncated_quadratic, 1.0};
    IrlsTrace t = m_estimate_1d(col, tq);
    REQUIRE(t.converged);
    Eigen::VectorXd g = m_pool_backward(col, tq, t, 1.0);
    for (int i = 0; i < 5; ++i) CHECK(g[i] == doctest::Approx(0.2));
  }

  SUBCASE("k inliers get 1/k, outliers zero") {
    Eigen::VectorXd col(4);
    col << 0.0, 0.05, 0.1, 10.0;
    RhoFunction tq{RhoKind::truncated_quadratic, 0.2};
    IrlsTrace t = m_estimate_1d(col, tq);
    REQUIRE(t.converged);
    Eigen::VectorXd g = m_pool_backward(col, tq, t, 1.0);
    CHECK(g[0] == doctest::Approx(1.0 / 3.0));
    CHECK(g[1] == doctest::Approx(1.0 / 3.0));
    CHECK(g[2] == doctest::Approx(1.0 / 3.0));
    CHECK(g[3] == 0.0);
  }

  SUBCASE("Welsch gradient vs finite differences of the full solve") {
    // tight cluster relative to tau, where freezing the weights is accurate
    Rng rng(4242);
    Eigen::VectorXd col(10);
    for (int i = 0; i < 10; ++i) col[i] = 0.005 * rng.gaussian();
    RhoFunction w{RhoKind::welsch, 1.0};
    IrlsTrace t = m_estimate_1d(col, w, 200, 1e-12);
    REQUIRE(t.converged);
    Eigen::VectorXd g = m_pool_backward(col, w, t, 1.0);

    const double h = 1e-6;
    Eigen::VectorXd fd(10);
    for (int i = 0; i < 10; ++i) {
      Eigen::VectorXd plus = col, minus = col;
      plus[i] += h;
      minus[i] -= h;
      const double yp = m_estimate_1d(plus, w, 200, 1e-12).estimate;
      const double ym = m_estimate_1d(minus, w, 200, 1e-12).estimate;
      fd[i] = (yp - ym) / (2.0 * h);
    }
    CHECK((g - fd).norm() <= 1e-3 * std::max(fd.norm(), 1e-9));
  }
}
