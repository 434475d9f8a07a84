#pragma once

#include <span>
#include <vector>

#include "superfed/data.hpp"
#include "superfed/models.hpp"
#include "superfed/superquantile.hpp"

namespace superfed {

// Full-batch per-device losses F_k(w) with weights alpha_k. Backs the
// alternating-minimization path, which assumes exact device losses.
class DeviceObjective {
 public:
  virtual ~DeviceObjective() = default;

  virtual std::size_t num_devices() const = 0;
  virtual std::size_t dim() const = 0;
  virtual double weight(std::size_t k) const = 0;
  virtual double loss(std::size_t k, std::span<const double> w) const = 0;
  virtual Vector gradient(std::size_t k, std::span<const double> w) const = 0;

  // Lower bound on the strong convexity modulus of every F_k (0 if unknown).
  virtual double strong_convexity() const { return 0.0; }

  Vector losses(std::span<const double> w) const;
  Vector weights() const;
  WeightedValues weighted_losses(std::span<const double> w) const;
};

// F_k = device_loss(spec, w, shard_k).
class EmpiricalObjective final : public DeviceObjective {
 public:
  EmpiricalObjective(const Population& pop, LossSpec spec);

  std::size_t num_devices() const override { return pop_->size(); }
  std::size_t dim() const override;
  double weight(std::size_t k) const override { return pop_->shard(k).weight; }
  double loss(std::size_t k, std::span<const double> w) const override;
  Vector gradient(std::size_t k, std::span<const double> w) const override;
  double strong_convexity() const override;

 private:
  const Population* pop_;
  LossSpec spec_;
};

// F_k(w) = 1/2 (w - c_k)^T A_k (w - c_k) + s_k with A_k symmetric positive
// definite.
struct QuadraticDevice {
  std::vector<Vector> hessian;  // A_k, dense rows
  Vector center;                // c_k
  double offset = 0.0;          // s_k
  double weight = 1.0;
};

class QuadraticObjective final : public DeviceObjective {
 public:
  explicit QuadraticObjective(std::vector<QuadraticDevice> devices);

  std::size_t num_devices() const override { return devices_.size(); }
  std::size_t dim() const override { return devices_.front().center.size(); }
  double weight(std::size_t k) const override { return devices_[k].weight; }
  double loss(std::size_t k, std::span<const double> w) const override;
  Vector gradient(std::size_t k, std::span<const double> w) const override;
  double strong_convexity() const override { return min_eigenvalue_; }

  const QuadraticDevice& device(std::size_t k) const { return devices_[k]; }

 private:
  std::vector<QuadraticDevice> devices_;
  double min_eigenvalue_ = 0.0;
};

// Population losses of the Gaussian mean-estimation problem:
// E ||xi - w||^2 = ||w - mu_k||^2 + trace(Sigma_k) with Sigma_k = variance * I.
QuadraticObjective gaussian_population_objective(const std::vector<Vector>& means,
                                                 double variance = 1.0);

// grad_w and d/d eta of eta + (1/theta) sum_k alpha_k g_nu(F_k(w) - eta).
struct SmoothedGradient {
  Vector grad_w;
  double grad_eta = 0.0;

  double norm() const;
};

SmoothedGradient smoothed_full_gradient(const DeviceObjective& objective,
                                        std::span<const double> w, double eta,
                                        ConformityLevel theta, SmoothingParam nu);

double smoothed_value(const DeviceObjective& objective, std::span<const double> w, double eta,
                      ConformityLevel theta, SmoothingParam nu);

}  // namespace superfed
