#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "superfed/models.hpp"

namespace superfed {

struct DeviceShard {
  std::string id;
  std::vector<Example> examples;
  double weight = 0.0;  // alpha_k

  std::size_t size() const { return examples.size(); }
  bool operator==(const DeviceShard&) const = default;
};

// Devices with weights summing to one and a common feature dimension.
class Population {
 public:
  Population() = default;
  // Validates shards and renormalizes their weights to sum to one.
  Population(std::vector<DeviceShard> shards, int num_classes);

  const std::vector<DeviceShard>& shards() const { return shards_; }
  const DeviceShard& shard(std::size_t k) const { return shards_[k]; }
  std::size_t size() const { return shards_.size(); }
  bool empty() const { return shards_.empty(); }
  std::size_t feature_dim() const { return feature_dim_; }
  int num_classes() const { return num_classes_; }
  std::vector<double> weights() const;
  std::size_t total_examples() const;

  bool operator==(const Population&) const = default;

 private:
  std::vector<DeviceShard> shards_;
  std::size_t feature_dim_ = 0;
  int num_classes_ = 2;
};

// alpha_k = n_k / sum_j n_j. The class count is max(2, max label + 1).
Population weights_by_count(std::vector<DeviceShard> shards);

// One device per mean, samples N(mu_k, I), uniform weights.
Population gen_gaussian_mixture(const std::vector<std::array<double, 2>>& means,
                                std::size_t n_per_device, std::uint64_t seed);

struct HeteroLogisticSpec {
  std::size_t num_devices = 100;
  std::size_t n_min = 20;
  std::size_t n_max = 100;
  std::size_t dim = 10;
  int num_classes = 2;
  double heterogeneity = 1.0;  // in [0, 1]
  // Scale of the shared labelling model relative to the per-device offsets.
  double signal = 3.0;
};

// Device k labels its samples with its own logistic model
// w_k = w_bar + heterogeneity * delta_k (delta_k standard normal), drawing
// labels from the model's class probabilities. Features are standard
// normal with a trailing constant 1 (bias), so feature_dim = dim + 1.
// Weights are proportional to device sizes.
Population gen_hetero_logistic(const HeteroLogisticSpec& spec, std::uint64_t seed);

// One JSON object per line: {"id": str, "x": [[...], ...], "y": [...]}.
Population load_devices_jsonl(const std::filesystem::path& path);
void save_devices_jsonl(const Population& pop, const std::filesystem::path& path);

// Random disjoint (train, test) split; round(fraction * N) devices train.
// Weights are renormalized within each part.
std::pair<Population, Population> split_devices(const Population& pop, double fraction,
                                                std::uint64_t seed);

}  // namespace superfed
