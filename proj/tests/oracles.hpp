#pragma once

// Independent reference computations used only by the tests. None of these
// call into the library's superquantile or quantile code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

// h(eta) = eta + (1/theta) sum alpha_k (x_k - eta)_+
inline double dual(const Vec& x, const Vec& alpha, double theta, double eta) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += alpha[k] * std::max(x[k] - eta, 0.0);
  return eta + s / theta;
}

struct GridMin {
  double argmin;  // leftmost grid point attaining the minimum
  double value;
};

inline GridMin grid_minimize(const std::function<double(double)>& f, double lo, double hi,
                             double step) {
  GridMin best{lo, f(lo)};
  const auto n = static_cast<long>(std::llround((hi - lo) / step));
  for (long i = 1; i <= n; ++i) {
    const double t = lo + step * static_cast<double>(i);
    const double v = f(t);
    if (v < best.value - 1e-15) best = {t, v};
  }
  return best;
}

// Max of sum pi_k x_k over P_theta = {pi in simplex, pi_k <= alpha_k / theta}
// by enumerating vertices: every coordinate sits at 0 or at its cap except at
// most one free coordinate fixed by the simplex constraint.
inline double vertex_max(const Vec& x, const Vec& alpha, double theta) {
  const std::size_t n = x.size();
  double best = -std::numeric_limits<double>::infinity();
  Vec cap(n);
  for (std::size_t k = 0; k < n; ++k) cap[k] = alpha[k] / theta;
  const std::size_t patterns = std::size_t{1} << n;
  for (std::size_t free = 0; free <= n; ++free) {  // free == n: no free coordinate
    for (std::size_t mask = 0; mask < patterns; ++mask) {
      if (free < n && (mask >> free) & 1U) continue;
      Vec pi(n, 0.0);
      double used = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k != free && ((mask >> k) & 1U)) {
          pi[k] = cap[k];
          used += cap[k];
        }
      }
      if (free < n) {
        pi[free] = 1.0 - used;
        if (pi[free] < -1e-12 || pi[free] > cap[free] + 1e-12) continue;
      } else if (std::abs(used - 1.0) > 1e-12) {
        continue;
      }
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v += pi[k] * x[k];
      best = std::max(best, v);
    }
  }
  return best;
}

// Lower-value weighted quantile by brute force: smallest candidate value whose
// "mass at or below" reaches 1 - theta.
inline double quantile(const Vec& x, const Vec& alpha, double theta) {
  double best = std::numeric_limits<double>::infinity();
  for (double c : x) {
    double below = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) below += x[k] <= c ? alpha[k] : 0.0;
    if (below >= 1.0 - theta - 1e-12) best = std::min(best, c);
  }
  return best;
}

inline Vec central_difference(const std::function<double(const Vec&)>& f, Vec w,
                              double h = 1e-6) {
  Vec g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = w[i];
    w[i] = orig + h;
    const double fp = f(w);
    w[i] = orig - h;
    const double fm = f(w);
    w[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const Vec& a, const Vec& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
}

inline double norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline Vec random_simplex(std::mt19937_64& g, std::size_t n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Vec a(n);
  double s = 0.0;
  for (auto& v : a) s += (v = u(g));
  for (auto& v : a) v /= s;
  return a;
}

inline Vec random_vec(std::mt19937_64& g, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec a(n);
  for (auto& v : a) v = u(g);
  return a;
}

}  // namespace oracle
