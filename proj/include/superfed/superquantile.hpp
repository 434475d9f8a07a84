#pragma once

// Quantile and superquantile (CVaR) math over finite weighted collections.
//
// Given losses x_k with weights alpha_k (sum 1) and a conformity level
// theta in (0, 1], the superquantile is
//
//   F_theta = min_eta  eta + (1/theta) sum_k alpha_k (x_k - eta)_+
//           = max { sum_k pi_k x_k : pi in simplex, pi_k <= alpha_k / theta }
//
// and its smoothed surrogate replaces (.)_+ by g_nu, a C^1 Huber-like
// function that over-approximates (.)_+ by at most nu/2.

#include <span>
#include <stdexcept>
#include <vector>

namespace superfed {

using Vector = std::vector<double>;

inline constexpr double kWeightTolerance = 1e-12;
inline constexpr double kRenormalizeTolerance = 1e-9;

class WeightedValues {
 public:
  // Weights are renormalized if their sum is within 1e-9 of one; otherwise
  // std::invalid_argument is thrown.
  WeightedValues(Vector values, Vector weights);

  static WeightedValues uniform(Vector values);

  // Positive, not necessarily normalized, weights (e.g. device sizes).
  static WeightedValues normalized(Vector values, Vector weights);

  std::span<const double> values() const { return values_; }
  std::span<const double> weights() const { return weights_; }
  std::size_t size() const { return values_.size(); }

 private:
  Vector values_;
  Vector weights_;
};

class ConformityLevel {
 public:
  explicit ConformityLevel(double theta);
  double value() const { return theta_; }
  bool is_vanilla() const { return theta_ == 1.0; }

 private:
  double theta_;
};

class SmoothingParam {
 public:
  explicit SmoothingParam(double nu);
  double value() const { return nu_; }

 private:
  double nu_;
};

class MixtureWeights {
 public:
  explicit MixtureWeights(Vector pi);
  std::span<const double> values() const { return pi_; }
  std::size_t size() const { return pi_.size(); }

 private:
  Vector pi_;
};

// min_k alpha_k / pi_k, with alpha_k / 0 treated as +infinity.
double conformity(const MixtureWeights& pi, std::span<const double> alpha);

// pi_k <= alpha_k / theta (+1e-12) for every k.
bool in_feasible_set(const MixtureWeights& pi, std::span<const double> alpha,
                     ConformityLevel theta);

// Lower weighted (1 - theta)-quantile: x_{sigma(j*)} with
// j* = min{ j : sum_{i<=j} alpha_{sigma(i)} >= 1 - theta }, sigma sorting by
// (value, index). theta = 1 gives the minimum value.
double weighted_quantile(const WeightedValues& wv, ConformityLevel theta);

double weighted_mean(const WeightedValues& wv);

// eta + (1/theta) sum_k alpha_k (x_k - eta)_+
double dual_objective(const WeightedValues& wv, ConformityLevel theta, double eta);

double superquantile(const WeightedValues& wv, ConformityLevel theta);

// g_nu(rho): nu/2 for rho <= 0, rho^2/(2 nu) + nu/2 on (0, nu], rho above.
double smoothed_plus(double rho, SmoothingParam nu);
double smoothed_plus_derivative(double rho, SmoothingParam nu);

// eta + (1/theta) sum_k alpha_k g_nu(x_k - eta)
double smoothed_objective(const WeightedValues& wv, ConformityLevel theta,
                          SmoothingParam nu, double eta);

// d/d eta of smoothed_objective: 1 - (1/theta) sum_k alpha_k g_nu'(x_k - eta).
double smoothed_eta_derivative(const WeightedValues& wv, ConformityLevel theta,
                               SmoothingParam nu, double eta);

struct EtaInterval {
  double lower;
  double upper;

  // Midpoint; for an unbounded-below interval (theta = 1) the upper end.
  double canonical() const;
  bool contains(double eta, double tol = 0.0) const {
    return eta >= lower - tol && eta <= upper + tol;
  }
};

// The closed interval of minimizers of eta -> smoothed_objective. Found by
// evaluating the derivative at the breakpoints {x_k, x_k - nu}: the
// derivative is continuous, non-decreasing and piecewise linear between
// consecutive breakpoints. For theta = 1 the set is (-inf, min_k x_k - nu].
EtaInterval smoothed_eta_minimizers(const WeightedValues& wv, ConformityLevel theta,
                                    SmoothingParam nu);

// c_k = (alpha_k / theta) g_nu'(x_k - eta), so that
// grad_w of the smoothed objective is sum_k c_k grad F_k(w).
Vector smoothed_device_coefficients(const WeightedValues& wv, ConformityLevel theta,
                                    SmoothingParam nu, double eta);

}  // namespace superfed
