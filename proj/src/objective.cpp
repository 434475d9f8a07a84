#include "superfed/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace superfed {

Vector DeviceObjective::losses(std::span<const double> w) const {
  Vector out(num_devices());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = loss(k, w);
  return out;
}

Vector DeviceObjective::weights() const {
  Vector out(num_devices());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = weight(k);
  return out;
}

WeightedValues DeviceObjective::weighted_losses(std::span<const double> w) const {
  return WeightedValues(losses(w), weights());
}

EmpiricalObjective::EmpiricalObjective(const Population& pop, LossSpec spec)
    : pop_(&pop), spec_(spec) {
  if (pop.empty()) throw std::invalid_argument("EmpiricalObjective: empty population");
  spec_.validate();
}

std::size_t EmpiricalObjective::dim() const { return spec_.param_dim(pop_->feature_dim()); }

double EmpiricalObjective::loss(std::size_t k, std::span<const double> w) const {
  return device_loss(spec_, w, pop_->shard(k));
}

Vector EmpiricalObjective::gradient(std::size_t k, std::span<const double> w) const {
  return device_grad(spec_, w, pop_->shard(k));
}

double EmpiricalObjective::strong_convexity() const {
  if (spec_.kind == LossKind::squared_distance) return 2.0 + spec_.l2_reg;
  return spec_.l2_reg;
}

QuadraticObjective::QuadraticObjective(std::vector<QuadraticDevice> devices)
    : devices_(std::move(devices)) {
  if (devices_.empty()) throw std::invalid_argument("QuadraticObjective: no devices");
  const std::size_t d = devices_.front().center.size();
  double total = 0.0;
  min_eigenvalue_ = std::numeric_limits<double>::infinity();
  for (const auto& dev : devices_) {
    if (dev.center.size() != d || dev.hessian.size() != d) {
      throw std::invalid_argument("QuadraticObjective: inconsistent dimensions");
    }
    Eigen::MatrixXd a(d, d);
    for (std::size_t i = 0; i < d; ++i) {
      if (dev.hessian[i].size() != d) {
        throw std::invalid_argument("QuadraticObjective: Hessian is not square");
      }
      for (std::size_t j = 0; j < d; ++j) a(i, j) = dev.hessian[i][j];
    }
    if (!a.isApprox(a.transpose(), 1e-12)) {
      throw std::invalid_argument("QuadraticObjective: Hessian is not symmetric");
    }
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues().minCoeff();
    if (!(lo > 0.0)) throw std::invalid_argument("QuadraticObjective: Hessian is not definite");
    min_eigenvalue_ = std::min(min_eigenvalue_, lo);
    if (!(dev.weight > 0.0)) throw std::invalid_argument("QuadraticObjective: weight <= 0");
    total += dev.weight;
  }
  for (auto& dev : devices_) dev.weight /= total;
}

double QuadraticObjective::loss(std::size_t k, std::span<const double> w) const {
  const auto& dev = devices_[k];
  const std::size_t d = dev.center.size();
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < d; ++j) row += dev.hessian[i][j] * (w[j] - dev.center[j]);
    s += (w[i] - dev.center[i]) * row;
  }
  return 0.5 * s + dev.offset;
}

Vector QuadraticObjective::gradient(std::size_t k, std::span<const double> w) const {
  const auto& dev = devices_[k];
  const std::size_t d = dev.center.size();
  Vector g(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) g[i] += dev.hessian[i][j] * (w[j] - dev.center[j]);
  }
  return g;
}

QuadraticObjective gaussian_population_objective(const std::vector<Vector>& means,
                                                 double variance) {
  std::vector<QuadraticDevice> devices;
  for (const auto& mu : means) {
    const std::size_t d = mu.size();
    QuadraticDevice dev;
    dev.hessian.assign(d, Vector(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) dev.hessian[i][i] = 2.0;
    dev.center = mu;
    dev.offset = variance * static_cast<double>(d);
    dev.weight = 1.0;
    devices.push_back(std::move(dev));
  }
  return QuadraticObjective(std::move(devices));
}

double SmoothedGradient::norm() const {
  double s = grad_eta * grad_eta;
  for (double g : grad_w) s += g * g;
  return std::sqrt(s);
}

SmoothedGradient smoothed_full_gradient(const DeviceObjective& objective,
                                        std::span<const double> w, double eta,
                                        ConformityLevel theta, SmoothingParam nu) {
  const WeightedValues wv = objective.weighted_losses(w);
  const Vector c = smoothed_device_coefficients(wv, theta, nu, eta);
  SmoothedGradient out;
  out.grad_w.assign(w.size(), 0.0);
  double active = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    active += c[k];
    if (c[k] == 0.0) continue;
    const Vector g = objective.gradient(k, w);
    for (std::size_t i = 0; i < g.size(); ++i) out.grad_w[i] += c[k] * g[i];
  }
  out.grad_eta = 1.0 - active;
  return out;
}

double smoothed_value(const DeviceObjective& objective, std::span<const double> w, double eta,
                      ConformityLevel theta, SmoothingParam nu) {
  return smoothed_objective(objective.weighted_losses(w), theta, nu, eta);
}

}  // namespace superfed
