#include "superfed/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "superfed/data.hpp"

namespace superfed {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_dims(const LossSpec& spec, std::span<const double> w, const Example& ex) {
  if (w.size() != spec.param_dim(ex.features.size())) {
    throw std::invalid_argument("model dimension " + std::to_string(w.size()) +
                                " does not match feature dimension " +
                                std::to_string(ex.features.size()));
  }
  if (spec.is_classification() && (ex.label < 0 || ex.label >= spec.num_classes)) {
    throw std::invalid_argument("label " + std::to_string(ex.label) + " out of range [0, " +
                                std::to_string(spec.num_classes) + ")");
  }
}

Vector logits(const LossSpec& spec, std::span<const double> w, const Example& ex) {
  const std::size_t p = ex.features.size();
  Vector z(static_cast<std::size_t>(spec.num_classes));
  for (std::size_t c = 0; c < z.size(); ++c) z[c] = dot(w.subspan(c * p, p), ex.features);
  return z;
}

// Softmax probabilities and log-sum-exp of the logits.
double softmax_inplace(Vector& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
  return m + std::log(s);
}

void add_point_grad(const LossSpec& spec, std::span<const double> w, const Example& ex,
                    double scale, Vector& out) {
  const auto& x = ex.features;
  switch (spec.kind) {
    case LossKind::squared_distance:
      for (std::size_t i = 0; i < w.size(); ++i) out[i] += scale * 2.0 * (w[i] - x[i]);
      break;
    case LossKind::binary_logistic: {
      const double y = ex.label == 1 ? 1.0 : -1.0;
      const double g = -y * sigmoid(-y * dot(w, x));
      for (std::size_t i = 0; i < w.size(); ++i) out[i] += scale * g * x[i];
      break;
    }
    case LossKind::multinomial_logistic: {
      const std::size_t p = x.size();
      Vector prob = logits(spec, w, ex);
      softmax_inplace(prob);
      prob[static_cast<std::size_t>(ex.label)] -= 1.0;
      for (std::size_t c = 0; c < prob.size(); ++c) {
        for (std::size_t j = 0; j < p; ++j) out[c * p + j] += scale * prob[c] * x[j];
      }
      break;
    }
  }
}

void add_regularization_grad(const LossSpec& spec, std::span<const double> w, Vector& out) {
  if (spec.l2_reg == 0.0) return;
  for (std::size_t i = 0; i < w.size(); ++i) out[i] += spec.l2_reg * w[i];
}

void check_shard(const DeviceShard& shard) {
  if (shard.examples.empty()) {
    throw std::invalid_argument("device '" + shard.id + "' has no examples");
  }
}

}  // namespace

std::size_t LossSpec::param_dim(std::size_t feature_dim) const {
  if (kind == LossKind::multinomial_logistic) {
    return static_cast<std::size_t>(num_classes) * feature_dim;
  }
  return feature_dim;
}

void LossSpec::validate() const {
  if (!(l2_reg >= 0.0)) throw std::invalid_argument("l2_reg must be non-negative");
  if (kind == LossKind::multinomial_logistic && num_classes < 2) {
    throw std::invalid_argument("multinomial_logistic needs num_classes >= 2");
  }
  if (kind == LossKind::binary_logistic && num_classes != 2) {
    throw std::invalid_argument("binary_logistic needs num_classes == 2");
  }
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::squared_distance: return "squared_distance";
    case LossKind::binary_logistic: return "binary_logistic";
    case LossKind::multinomial_logistic: return "multinomial_logistic";
  }
  return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "squared_distance") return LossKind::squared_distance;
  if (name == "binary_logistic") return LossKind::binary_logistic;
  if (name == "multinomial_logistic") return LossKind::multinomial_logistic;
  throw std::invalid_argument("unknown loss kind '" + name + "'");
}

double point_loss(const LossSpec& spec, std::span<const double> w, const Example& ex) {
  check_dims(spec, w, ex);
  double loss = 0.0;
  switch (spec.kind) {
    case LossKind::squared_distance: {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double r = ex.features[i] - w[i];
        loss += r * r;
      }
      break;
    }
    case LossKind::binary_logistic: {
      const double y = ex.label == 1 ? 1.0 : -1.0;
      loss = softplus(-y * dot(w, ex.features));
      break;
    }
    case LossKind::multinomial_logistic: {
      Vector z = logits(spec, w, ex);
      const double zy = z[static_cast<std::size_t>(ex.label)];
      loss = softmax_inplace(z) - zy;
      break;
    }
  }
  if (spec.l2_reg > 0.0) loss += 0.5 * spec.l2_reg * squared_norm(w);
  return loss;
}

Vector point_grad(const LossSpec& spec, std::span<const double> w, const Example& ex) {
  check_dims(spec, w, ex);
  Vector g(w.size(), 0.0);
  add_point_grad(spec, w, ex, 1.0, g);
  add_regularization_grad(spec, w, g);
  return g;
}

double device_loss(const LossSpec& spec, std::span<const double> w, const DeviceShard& shard) {
  check_shard(shard);
  double s = 0.0;
  for (const auto& ex : shard.examples) s += point_loss(spec, w, ex);
  return s / static_cast<double>(shard.size());
}

Vector batch_grad(const LossSpec& spec, std::span<const double> w, const DeviceShard& shard,
                  std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("batch_grad: empty batch");
  Vector g(w.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(indices.size());
  for (std::size_t i : indices) {
    const auto& ex = shard.examples.at(i);
    check_dims(spec, w, ex);
    add_point_grad(spec, w, ex, scale, g);
  }
  add_regularization_grad(spec, w, g);
  return g;
}

Vector device_grad(const LossSpec& spec, std::span<const double> w, const DeviceShard& shard) {
  check_shard(shard);
  std::vector<std::size_t> all(shard.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return batch_grad(spec, w, shard, all);
}

int predict(const LossSpec& spec, std::span<const double> w, const Example& ex) {
  check_dims(spec, w, ex);
  switch (spec.kind) {
    case LossKind::binary_logistic:
      return dot(w, ex.features) > 0.0 ? 1 : 0;
    case LossKind::multinomial_logistic: {
      const Vector z = logits(spec, w, ex);
      return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    }
    case LossKind::squared_distance:
      break;
  }
  throw std::invalid_argument("predict: squared_distance is not a classifier");
}

double device_error(const LossSpec& spec, std::span<const double> w, const DeviceShard& shard) {
  if (!spec.is_classification()) {
    throw std::invalid_argument("device_error requires a classification loss");
  }
  check_shard(shard);
  std::size_t wrong = 0;
  for (const auto& ex : shard.examples) {
    if (predict(spec, w, ex) != ex.label) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(shard.size());
}

}  // namespace superfed
