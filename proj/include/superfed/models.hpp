#pragma once

#include <span>
#include <string>
#include <vector>

#include "superfed/superquantile.hpp"

namespace superfed {

// Flat parameter vector. For the multinomial model it holds a C x p weight
// matrix in row-major order.
using ModelParams = Vector;

struct Example {
  Vector features;
  int label = 0;  // class id; unused by squared_distance

  bool operator==(const Example&) const = default;
};

enum class LossKind { squared_distance, binary_logistic, multinomial_logistic };

struct LossSpec {
  LossKind kind = LossKind::binary_logistic;
  double l2_reg = 0.0;
  int num_classes = 2;

  // Parameter dimension for a given feature dimension.
  std::size_t param_dim(std::size_t feature_dim) const;
  bool is_classification() const { return kind != LossKind::squared_distance; }
  void validate() const;
};

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct DeviceShard;

// squared_distance: ||x - w||^2. binary_logistic: log(1 + exp(-y <w, x>))
// with y = +1 for label 1 and -1 for label 0. multinomial_logistic:
// -log softmax_y(W x). All add (l2_reg / 2) ||w||^2.
double point_loss(const LossSpec& spec, std::span<const double> w, const Example& ex);
Vector point_grad(const LossSpec& spec, std::span<const double> w, const Example& ex);

// Empirical mean over the shard's examples (F_k(w)).
double device_loss(const LossSpec& spec, std::span<const double> w, const DeviceShard& shard);
Vector device_grad(const LossSpec& spec, std::span<const double> w, const DeviceShard& shard);

// Mean gradient over a subset of the shard's examples.
Vector batch_grad(const LossSpec& spec, std::span<const double> w, const DeviceShard& shard,
                  std::span<const std::size_t> indices);

// Predicted class: sign of <w, x> for binary, argmax of W x otherwise; ties
// go to the lowest class index.
int predict(const LossSpec& spec, std::span<const double> w, const Example& ex);

// Fraction of misclassified examples.
double device_error(const LossSpec& spec, std::span<const double> w, const DeviceShard& shard);

}  // namespace superfed
