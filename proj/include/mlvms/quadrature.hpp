#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace mlvms {

/// Gauss-Legendre rule on [-1, 1]; exact for polynomials up to degree 2n-1.
struct QuadRule {
  std::vector<double> points;
  std::vector<double> weights;
  int order = 0;  // number of points per axis

  explicit QuadRule(int n) : order(n) {
    if (n < 1 || n > 64) throw std::invalid_argument("QuadRule: order out of range");
    points.resize(n);
    weights.resize(n);
    for (int i = 0; i < n; ++i) {
      // Newton iteration from the Chebyshev estimate.
      double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      points[n - 1 - i] = x;
      weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }

  /// Points/weights mapped to [a, b].
  void mapped(double a, double b, std::vector<double>& x, std::vector<double>& w) const {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    x.resize(order);
    w.resize(order);
    for (int i = 0; i < order; ++i) {
      x[i] = mid + half * points[i];
      w[i] = half * weights[i];
    }
  }
};

}  // namespace mlvms
