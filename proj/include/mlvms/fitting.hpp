#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mlvms {

/// Estimated optimal coarse/fine element size ratio
///   n_opt = ceil( (C_f/C_c)^{1/p_f} * h_c^{(p_f - p_c)/p_f} ),
/// floored at 1.
inline int estimate_optimal_ratio(double c_c, double c_f, int p_c, int p_f, double h_c) {
  if (c_c <= 0 || c_f <= 0 || p_c <= 0 || p_f <= 0 || h_c <= 0)
    throw std::invalid_argument("estimate_optimal_ratio: inputs must be positive");
  const double n = std::pow(c_f / c_c, 1.0 / p_f) *
                   std::pow(h_c, static_cast<double>(p_f - p_c) / p_f);
  return std::max(1, static_cast<int>(std::ceil(n - 1e-12)));
}

/// One observation of a two-level run for the error model
/// err ~ C_c h_c^{p_c} + C_f h_f^{p_f}.
struct ErrorRow {
  double h_c = 0.0;
  double h_f = 0.0;
  double err = 0.0;
};

struct ErrorFit {
  double c_c = 0.0;
  double c_f = 0.0;
  double residual = 0.0;  // RMS of err - model
};

/// Nonnegative least squares of the two-term error model (2-variable active
/// set: unconstrained solve, clamp a negative coefficient and refit the
/// other). Errors on rank deficiency (all rows share one h_f/h_c ratio).
inline ErrorFit fit_error_coefficients(const std::vector<ErrorRow>& rows, int p_c, int p_f) {
  if (rows.size() < 4)
    throw std::invalid_argument("fit_error_coefficients: need at least 4 rows");
  if (p_c <= 0 || p_f <= 0)
    throw std::invalid_argument("fit_error_coefficients: orders must be positive");
  const int n = static_cast<int>(rows.size());
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    if (rows[i].h_c <= 0 || rows[i].h_f <= 0 || rows[i].err < 0)
      throw std::invalid_argument("fit_error_coefficients: invalid row");
    X(i, 0) = std::pow(rows[i].h_c, p_c);
    X(i, 1) = std::pow(rows[i].h_f, p_f);
    y(i) = rows[i].err;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues()(1) < 1e-10 * svd.singularValues()(0))
    throw std::invalid_argument(
        "fit_error_coefficients: rank-deficient design (rows share a single h_f/h_c ratio)");
  Eigen::Vector2d c = svd.solve(y);
  auto fit_single = [&](int keep) {
    Eigen::VectorXd col = X.col(keep);
    return std::max(0.0, col.dot(y) / col.squaredNorm());
  };
  if (c(0) < 0) {
    c(0) = 0;
    c(1) = fit_single(1);
  } else if (c(1) < 0) {
    c(1) = 0;
    c(0) = fit_single(0);
  }
  ErrorFit out;
  out.c_c = c(0);
  out.c_f = c(1);
  out.residual = std::sqrt((X * c - y).squaredNorm() / n);
  return out;
}

/// Least-squares slope of log(err) against log(h) over the last `points`
/// ladder entries (default 3: asymptotic regime).
inline double fit_slope(const std::vector<double>& h, const std::vector<double>& err,
                        int points = 3) {
  if (h.size() != err.size() || h.size() < 2)
    throw std::invalid_argument("fit_slope: need matching h/err with >= 2 entries");
  const int n = static_cast<int>(h.size());
  const int m = std::min(points, n);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = n - m; i < n; ++i) {
    if (h[i] <= 0 || err[i] <= 0)
      throw std::invalid_argument("fit_slope: h and err must be positive");
    const double x = std::log(h[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = m * sxx - sx * sx;
  if (std::abs(denom) < 1e-14) throw std::invalid_argument("fit_slope: degenerate h values");
  return (m * sxy - sx * sy) / denom;
}

}  // namespace mlvms
