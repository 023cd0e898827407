#pragma once

// Test-only quadrature oracles, kept independent of the library's own
// integration paths.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

// 15-point Gauss-Kronrod pair on [a, b].
struct GkResult {
  double value = 0.0;
  double error = 0.0;
};

inline GkResult gk15(const std::function<double(double)>& f, double a,
                     double b) {
  static const double xk[8] = {0.0,
                               0.2077849550078985,
                               0.4058451513773972,
                               0.5860872354676911,
                               0.7415311855993945,
                               0.8648644233597691,
                               0.9491079123427585,
                               0.9914553711208126};
  static const double wk[8] = {0.2094821410847278, 0.2044329400752989,
                               0.1903505780647854, 0.1690047266392679,
                               0.1406532597155259, 0.1047900103222502,
                               0.0630920926299786, 0.0229353220105292};
  static const double wg[4] = {0.4179591836734694, 0.3818300505051189,
                               0.2797053914892767, 0.1294849661688697};
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double acc_k = wk[0] * f(mid);
  double acc_g = wg[0] * f(mid);
  for (int i = 1; i < 8; ++i) {
    const double lo = f(mid - half * xk[i]);
    const double hi = f(mid + half * xk[i]);
    acc_k += wk[i] * (lo + hi);
    if (i % 2 == 0) acc_g += wg[i / 2] * (lo + hi);
  }
  GkResult out;
  out.value = acc_k * half;
  out.error = std::abs((acc_k - acc_g) * half);
  return out;
}

// Adaptive bisection on gk15 panels.
inline double integrate(const std::function<double(double)>& f, double a,
                        double b, double tol = 1e-10, int max_depth = 48) {
  struct Panel {
    double a, b;
    int depth;
  };
  std::vector<Panel> stack{{a, b, 0}};
  double total = 0.0;
  while (!stack.empty()) {
    const Panel panel = stack.back();
    stack.pop_back();
    const GkResult r = gk15(f, panel.a, panel.b);
    if (r.error < tol * std::max(1.0, std::abs(r.value)) ||
        panel.depth >= max_depth) {
      total += r.value;
      continue;
    }
    const double mid = 0.5 * (panel.a + panel.b);
    stack.push_back({panel.a, mid, panel.depth + 1});
    stack.push_back({mid, panel.b, panel.depth + 1});
  }
  return total;
}

// Tensor-product Gauss-Legendre on [ax,bx] x [ay,by].
double integrate2d(const std::function<double(double, double)>& f, double ax,
                   double bx, double ay, double by, int n_nodes = 120);

inline std::vector<std::pair<double, double>> gauss_legendre(int n) {
  // Newton iteration on Legendre polynomials.
  std::vector<std::pair<double, double>> nodes(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (x * p1 - p0) / (x * x - 1.0);
    nodes[i] = {x, 2.0 / ((1.0 - x * x) * dp * dp)};
  }
  return nodes;
}

inline double integrate2d(const std::function<double(double, double)>& f,
                          double ax, double bx, double ay, double by,
                          int n_nodes) {
  const auto nodes = gauss_legendre(n_nodes);
  const double cx = 0.5 * (ax + bx), hx = 0.5 * (bx - ax);
  const double cy = 0.5 * (ay + by), hy = 0.5 * (by - ay);
  double acc = 0.0;
  for (const auto& [xi, wi] : nodes) {
    const double x = cx + hx * xi;
    double inner = 0.0;
    for (const auto& [yj, wj] : nodes) inner += wj * f(x, cy + hy * yj);
    acc += wi * inner;
  }
  return acc * hx * hy;
}

}  // namespace oracle
