#include "superfed/superquantile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace superfed {

namespace {

double sum_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void check_normalized(std::span<const double> w, const char* what) {
  if (std::abs(sum_of(w) - 1.0) > kRenormalizeTolerance) {
    throw std::invalid_argument(std::string(what) + " must sum to 1");
  }
}

// Indices sorted by (value, original index).
std::vector<std::size_t> sorted_order(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  return order;
}

}  // namespace

WeightedValues::WeightedValues(Vector values, Vector weights)
    : values_(std::move(values)), weights_(std::move(weights)) {
  if (values_.empty()) throw std::invalid_argument("WeightedValues: empty collection");
  if (values_.size() != weights_.size()) {
    throw std::invalid_argument("WeightedValues: values and weights differ in length");
  }
  for (double x : values_) {
    if (!std::isfinite(x)) throw std::invalid_argument("WeightedValues: non-finite value");
  }
  for (double a : weights_) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw std::invalid_argument("WeightedValues: weights must be strictly positive");
    }
  }
  const double total = sum_of(weights_);
  if (std::abs(total - 1.0) > kRenormalizeTolerance) {
    throw std::invalid_argument("WeightedValues: weights must sum to 1");
  }
  if (std::abs(total - 1.0) > kWeightTolerance) {
    for (double& a : weights_) a /= total;
  }
}

WeightedValues WeightedValues::uniform(Vector values) {
  const auto n = values.size();
  if (n == 0) throw std::invalid_argument("WeightedValues: empty collection");
  return WeightedValues(std::move(values), Vector(n, 1.0 / static_cast<double>(n)));
}

WeightedValues WeightedValues::normalized(Vector values, Vector weights) {
  double total = 0.0;
  for (double a : weights) {
    if (!(a > 0.0)) throw std::invalid_argument("WeightedValues: weights must be strictly positive");
    total += a;
  }
  for (double& a : weights) a /= total;
  return WeightedValues(std::move(values), std::move(weights));
}

ConformityLevel::ConformityLevel(double theta) : theta_(theta) {
  if (!(theta > 0.0 && theta <= 1.0)) {
    throw std::invalid_argument("conformity level theta must lie in (0, 1], got " +
                                std::to_string(theta));
  }
}

SmoothingParam::SmoothingParam(double nu) : nu_(nu) {
  if (!(nu > 0.0) || !std::isfinite(nu)) {
    throw std::invalid_argument("smoothing parameter nu must be positive");
  }
}

MixtureWeights::MixtureWeights(Vector pi) : pi_(std::move(pi)) {
  if (pi_.empty()) throw std::invalid_argument("MixtureWeights: empty");
  for (double p : pi_) {
    if (!(p >= 0.0)) throw std::invalid_argument("MixtureWeights: negative entry");
  }
  const double total = sum_of(pi_);
  if (std::abs(total - 1.0) > kRenormalizeTolerance) {
    throw std::invalid_argument("MixtureWeights: entries must sum to 1");
  }
  if (std::abs(total - 1.0) > kWeightTolerance) {
    for (double& p : pi_) p /= total;
  }
}

double conformity(const MixtureWeights& pi, std::span<const double> alpha) {
  if (pi.size() != alpha.size()) throw std::invalid_argument("conformity: dimension mismatch");
  for (double a : alpha) {
    if (!(a > 0.0)) throw std::invalid_argument("conformity: alpha must be strictly positive");
  }
  check_normalized(alpha, "conformity: alpha");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const double p = pi.values()[k];
    if (p > 0.0) best = std::min(best, alpha[k] / p);
  }
  return best;
}

bool in_feasible_set(const MixtureWeights& pi, std::span<const double> alpha,
                     ConformityLevel theta) {
  if (pi.size() != alpha.size()) {
    throw std::invalid_argument("in_feasible_set: dimension mismatch");
  }
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    if (pi.values()[k] > alpha[k] / theta.value() + kWeightTolerance) return false;
  }
  return true;
}

double weighted_quantile(const WeightedValues& wv, ConformityLevel theta) {
  const auto x = wv.values();
  const auto a = wv.weights();
  const double level = 1.0 - theta.value();
  const auto order = sorted_order(x);
  // Cumulative sums of weights that are exactly 1 - theta in real arithmetic
  // may round just below it; ties at the threshold go to the lower value.
  double cumulative = 0.0;
  for (std::size_t i : order) {
    cumulative += a[i];
    if (cumulative >= level - kWeightTolerance) return x[i];
  }
  return x[order.back()];
}

double weighted_mean(const WeightedValues& wv) {
  double s = 0.0;
  for (std::size_t k = 0; k < wv.size(); ++k) s += wv.weights()[k] * wv.values()[k];
  return s;
}

double dual_objective(const WeightedValues& wv, ConformityLevel theta, double eta) {
  double s = 0.0;
  for (std::size_t k = 0; k < wv.size(); ++k) {
    s += wv.weights()[k] * std::max(wv.values()[k] - eta, 0.0);
  }
  return eta + s / theta.value();
}

double superquantile(const WeightedValues& wv, ConformityLevel theta) {
  if (theta.is_vanilla()) return weighted_mean(wv);
  return dual_objective(wv, theta, weighted_quantile(wv, theta));
}

double smoothed_plus(double rho, SmoothingParam nu) {
  const double v = nu.value();
  if (rho <= 0.0) return v / 2.0;
  if (rho <= v) return rho * rho / (2.0 * v) + v / 2.0;
  return rho;
}

double smoothed_plus_derivative(double rho, SmoothingParam nu) {
  const double v = nu.value();
  if (rho <= 0.0) return 0.0;
  if (rho <= v) return rho / v;
  return 1.0;
}

double smoothed_objective(const WeightedValues& wv, ConformityLevel theta,
                          SmoothingParam nu, double eta) {
  double s = 0.0;
  for (std::size_t k = 0; k < wv.size(); ++k) {
    s += wv.weights()[k] * smoothed_plus(wv.values()[k] - eta, nu);
  }
  return eta + s / theta.value();
}

double smoothed_eta_derivative(const WeightedValues& wv, ConformityLevel theta,
                               SmoothingParam nu, double eta) {
  double s = 0.0;
  for (std::size_t k = 0; k < wv.size(); ++k) {
    s += wv.weights()[k] * smoothed_plus_derivative(wv.values()[k] - eta, nu);
  }
  return 1.0 - s / theta.value();
}

double EtaInterval::canonical() const {
  if (!std::isfinite(lower)) return upper;
  return 0.5 * (lower + upper);
}

EtaInterval smoothed_eta_minimizers(const WeightedValues& wv, ConformityLevel theta,
                                    SmoothingParam nu) {
  const auto x = wv.values();
  const double v = nu.value();
  if (theta.is_vanilla()) {
    // Every g_nu term is in its linear branch iff eta <= min_k x_k - nu.
    const double lo = *std::min_element(x.begin(), x.end());
    return {-std::numeric_limits<double>::infinity(), lo - v};
  }

  std::vector<double> points;
  points.reserve(2 * x.size());
  for (double xk : x) {
    points.push_back(xk);
    points.push_back(xk - v);
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  std::vector<double> slope(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    slope[i] = smoothed_eta_derivative(wv, theta, nu, points[i]);
  }

  // The derivative ranges over [1 - 1/theta, 1]; values within tol of zero
  // are treated as exact stationary points.
  const double tol = kWeightTolerance / theta.value();
  std::size_t a = points.size() - 1;  // first point with slope >= -tol
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (slope[i] >= -tol) {
      a = i;
      break;
    }
  }
  std::size_t b = 0;  // last point with slope <= tol
  for (std::size_t i = points.size(); i-- > 0;) {
    if (slope[i] <= tol) {
      b = i;
      break;
    }
  }

  if (slope[a] > tol) {
    // Single root strictly between consecutive breakpoints b < a.
    const double eta =
        points[b] - slope[b] * (points[a] - points[b]) / (slope[a] - slope[b]);
    return {eta, eta};
  }
  return {points[a], points[std::max(a, b)]};
}

Vector smoothed_device_coefficients(const WeightedValues& wv, ConformityLevel theta,
                                    SmoothingParam nu, double eta) {
  Vector c(wv.size());
  for (std::size_t k = 0; k < wv.size(); ++k) {
    c[k] = wv.weights()[k] / theta.value() *
           smoothed_plus_derivative(wv.values()[k] - eta, nu);
  }
  return c;
}

}  // namespace superfed
