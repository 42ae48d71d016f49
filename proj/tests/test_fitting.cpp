#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "mlvms/fitting.hpp"

using namespace mlvms;

TEST_CASE("optimal ratio formula") {
  // ratio (C_f/C_c) = 81, p_c = p_f = 4 -> 81^(1/4) = 3 for any h_c
  CHECK(estimate_optimal_ratio(1.0, 81.0, 4, 4, 0.5) == 3);
  CHECK(estimate_optimal_ratio(1.0, 81.0, 4, 4, 0.03125) == 3);
  CHECK(estimate_optimal_ratio(2.0, 162.0, 4, 4, 1.0) == 3);

  // p_c = p_f: independent of h_c
  for (double h : {1.0, 0.5, 0.1, 0.01})
    CHECK(estimate_optimal_ratio(2.0, 50.0, 3, 3, h) ==
          estimate_optimal_ratio(2.0, 50.0, 3, 3, 1.0));

  // p_f > p_c: halving h_c never increases n_opt
  int prev = 1 << 20;
  for (double h : {1.0, 0.5, 0.25, 0.125, 0.0625}) {
    int n = estimate_optimal_ratio(2.0, 50.0, 2, 4, h);
    CHECK(n <= prev);
    prev = n;
  }

  // floored at 1
  CHECK(estimate_optimal_ratio(100.0, 1.0, 3, 3, 1.0) == 1);

  CHECK_THROWS_AS(estimate_optimal_ratio(-1.0, 1.0, 3, 3, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(estimate_optimal_ratio(1.0, 1.0, 0, 3, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(estimate_optimal_ratio(1.0, 1.0, 3, 3, 0.0), std::invalid_argument);
}

TEST_CASE("error coefficients recovered from synthetic two-term data") {
  const double c_c = 2.0, c_f = 50.0;
  const int p_c = 2, p_f = 3;
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> noise(-0.01, 0.01);
  std::vector<ErrorRow> rows;
  for (double hc : {0.25, 0.125, 0.0625, 0.03125}) {
    for (int ratio : {2, 4}) {
      ErrorRow r;
      r.h_c = hc;
      r.h_f = hc / ratio;
      r.err = (c_c * std::pow(hc, p_c) + c_f * std::pow(r.h_f, p_f)) * (1.0 + noise(rng));
      rows.push_back(r);
    }
  }
  auto fit = fit_error_coefficients(rows, p_c, p_f);
  CHECK(fit.c_c == Catch::Approx(c_c).epsilon(0.10));
  CHECK(fit.c_f == Catch::Approx(c_f).epsilon(0.10));
  CHECK(fit.residual < 0.01 * rows.front().err);
}

TEST_CASE("single-ratio rows are rank deficient") {
  std::vector<ErrorRow> rows;
  for (double hc : {0.25, 0.125, 0.0625, 0.03125})
    rows.push_back({hc, hc / 2, std::pow(hc, 2.0)});  // p_c == p_f, fixed ratio
  CHECK_THROWS_AS(fit_error_coefficients(rows, 2, 2), std::invalid_argument);
}

TEST_CASE("nonnegativity clamp when one term is absent") {
  // data generated from the coarse term only, tiny anticorrelated noise
  std::vector<ErrorRow> rows;
  int i = 0;
  for (double hc : {0.25, 0.125, 0.0625, 0.03125}) {
    for (int ratio : {2, 8}) {
      const double wiggle = ((i++ % 2) ? 1.0 : -1.0) * 1e-6;
      rows.push_back({hc, hc / ratio, 3.0 * hc * hc + wiggle});
    }
  }
  auto fit = fit_error_coefficients(rows, 2, 3);
  CHECK(fit.c_c == Catch::Approx(3.0).epsilon(0.02));
  CHECK(fit.c_f >= 0.0);

  CHECK_THROWS_AS(fit_error_coefficients({rows[0], rows[1]}, 2, 3), std::invalid_argument);
}

TEST_CASE("log-log slope fit") {
  std::vector<double> h{0.5, 0.25, 0.125, 0.0625, 0.03125};
  std::vector<double> err;
  for (double x : h) err.push_back(7.0 * std::pow(x, 3.0));
  CHECK(fit_slope(h, err) == Catch::Approx(3.0).margin(1e-12));
  // uses only the trailing window: corrupt an early point, slope unchanged
  err[0] *= 100;
  CHECK(fit_slope(h, err, 3) == Catch::Approx(3.0).margin(1e-12));

  CHECK_THROWS_AS(fit_slope({0.5}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(fit_slope({0.5, 0.5}, {1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(fit_slope({0.5, -0.25}, {1.0, 1.0}), std::invalid_argument);
}
