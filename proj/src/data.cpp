#include "superfed/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "superfed/rng.hpp"

namespace superfed {

using json = nlohmann::json;

Population::Population(std::vector<DeviceShard> shards, int num_classes)
    : shards_(std::move(shards)), num_classes_(num_classes) {
  if (shards_.empty()) throw std::invalid_argument("population has no devices");
  if (num_classes_ < 1) throw std::invalid_argument("population needs num_classes >= 1");
  feature_dim_ = shards_.front().examples.empty()
                     ? 0
                     : shards_.front().examples.front().features.size();
  double total = 0.0;
  for (const auto& s : shards_) {
    if (s.examples.empty()) throw std::invalid_argument("device '" + s.id + "' is empty");
    if (!(s.weight > 0.0)) {
      throw std::invalid_argument("device '" + s.id + "' has non-positive weight");
    }
    for (const auto& ex : s.examples) {
      if (ex.features.size() != feature_dim_) {
        throw std::invalid_argument("device '" + s.id + "' has inconsistent feature dimension");
      }
    }
    total += s.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    for (auto& s : shards_) s.weight /= total;
  }
}

std::vector<double> Population::weights() const {
  std::vector<double> w;
  w.reserve(shards_.size());
  for (const auto& s : shards_) w.push_back(s.weight);
  return w;
}

std::size_t Population::total_examples() const {
  std::size_t n = 0;
  for (const auto& s : shards_) n += s.size();
  return n;
}

Population weights_by_count(std::vector<DeviceShard> shards) {
  if (shards.empty()) throw std::invalid_argument("weights_by_count: no devices");
  std::size_t total = 0;
  int max_label = 0;
  for (const auto& s : shards) {
    total += s.size();
    for (const auto& ex : s.examples) max_label = std::max(max_label, ex.label);
  }
  for (auto& s : shards) {
    s.weight = static_cast<double>(s.size()) / static_cast<double>(total);
  }
  return Population(std::move(shards), std::max(2, max_label + 1));
}

Population gen_gaussian_mixture(const std::vector<std::array<double, 2>>& means,
                                std::size_t n_per_device, std::uint64_t seed) {
  if (means.size() < 2) throw std::invalid_argument("gen_gaussian_mixture: need >= 2 means");
  if (n_per_device == 0) throw std::invalid_argument("gen_gaussian_mixture: n_per_device = 0");
  std::vector<DeviceShard> shards;
  for (std::size_t k = 0; k < means.size(); ++k) {
    Rng rng(derive_seed(seed, {stream::kPopulation, k}));
    DeviceShard s{"gauss_" + std::to_string(k), {}, 1.0 / static_cast<double>(means.size())};
    s.examples.reserve(n_per_device);
    for (std::size_t i = 0; i < n_per_device; ++i) {
      const double a = means[k][0] + rng.normal();
      const double b = means[k][1] + rng.normal();
      s.examples.push_back({{a, b}, 0});
    }
    shards.push_back(std::move(s));
  }
  return Population(std::move(shards), 1);
}

Population gen_hetero_logistic(const HeteroLogisticSpec& spec, std::uint64_t seed) {
  if (spec.num_devices == 0) throw std::invalid_argument("gen_hetero_logistic: no devices");
  if (spec.n_min == 0 || spec.n_min > spec.n_max) {
    throw std::invalid_argument("gen_hetero_logistic: invalid size range");
  }
  if (spec.dim == 0) throw std::invalid_argument("gen_hetero_logistic: dim = 0");
  if (spec.num_classes < 2) throw std::invalid_argument("gen_hetero_logistic: num_classes < 2");
  if (!(spec.heterogeneity >= 0.0 && spec.heterogeneity <= 1.0)) {
    throw std::invalid_argument("gen_hetero_logistic: heterogeneity must lie in [0, 1]");
  }

  const std::size_t p = spec.dim + 1;
  const bool binary = spec.num_classes == 2;
  const std::size_t rows = binary ? 1 : static_cast<std::size_t>(spec.num_classes);

  Rng shared(derive_seed(seed, {stream::kPopulation, ~std::uint64_t{0}}));
  Vector w_bar(rows * p);
  const double scale = spec.signal / std::sqrt(static_cast<double>(p));
  for (double& v : w_bar) v = scale * shared.normal();

  std::vector<DeviceShard> shards;
  shards.reserve(spec.num_devices);
  for (std::size_t k = 0; k < spec.num_devices; ++k) {
    Rng rng(derive_seed(seed, {stream::kPopulation, k}));
    Vector w_k = w_bar;
    for (double& v : w_k) v += spec.heterogeneity * rng.normal();
    const std::size_t n = spec.n_min + rng.below(spec.n_max - spec.n_min + 1);

    DeviceShard s{"dev_" + std::to_string(k), {}, 0.0};
    s.examples.reserve(n);
    Vector score(rows);
    for (std::size_t i = 0; i < n; ++i) {
      Vector x(p);
      for (std::size_t j = 0; j < spec.dim; ++j) x[j] = rng.normal();
      x[spec.dim] = 1.0;
      for (std::size_t r = 0; r < rows; ++r) {
        score[r] = std::inner_product(x.begin(), x.end(), w_k.begin() + r * p, 0.0);
      }
      int label = 0;
      const double u = rng.uniform();
      if (binary) {
        label = u < 1.0 / (1.0 + std::exp(-score[0])) ? 1 : 0;
      } else {
        const double m = *std::max_element(score.begin(), score.end());
        double total = 0.0;
        for (double& v : score) total += (v = std::exp(v - m));
        double acc = 0.0;
        label = static_cast<int>(rows) - 1;
        for (std::size_t r = 0; r < rows; ++r) {
          acc += score[r] / total;
          if (u < acc) {
            label = static_cast<int>(r);
            break;
          }
        }
      }
      s.examples.push_back({std::move(x), label});
    }
    shards.push_back(std::move(s));
  }
  auto pop = weights_by_count(std::move(shards));
  return Population(pop.shards(), spec.num_classes);
}

Population load_devices_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open device file " + path.string());
  std::vector<DeviceShard> shards;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(where + ": malformed JSON: " + e.what());
    }
    DeviceShard s;
    try {
      s.id = j.at("id").get<std::string>();
      const auto& xs = j.at("x");
      const auto& ys = j.at("y");
      if (!xs.is_array() || !ys.is_array()) {
        throw std::runtime_error("'x' and 'y' must be arrays");
      }
      if (xs.size() != ys.size()) {
        throw std::runtime_error("device '" + s.id + "' has " + std::to_string(xs.size()) +
                                 " feature rows but " + std::to_string(ys.size()) + " labels");
      }
      if (xs.empty()) throw std::runtime_error("device '" + s.id + "' has no examples");
      for (std::size_t i = 0; i < xs.size(); ++i) {
        Example ex{xs[i].get<Vector>(), ys[i].get<int>()};
        if (dim == 0) dim = ex.features.size();
        if (ex.features.size() != dim || dim == 0) {
          throw std::runtime_error("device '" + s.id + "' has inconsistent feature dimension");
        }
        if (ex.label < 0) throw std::runtime_error("device '" + s.id + "' has a negative label");
        s.examples.push_back(std::move(ex));
      }
    } catch (const json::exception& e) {
      throw std::runtime_error(where + ": invalid device record: " + e.what());
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    shards.push_back(std::move(s));
  }
  if (shards.empty()) throw std::runtime_error("device file " + path.string() + " is empty");
  return weights_by_count(std::move(shards));
}

void save_devices_jsonl(const Population& pop, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write device file " + path.string());
  for (const auto& s : pop.shards()) {
    json x = json::array();
    json y = json::array();
    for (const auto& ex : s.examples) {
      x.push_back(ex.features);
      y.push_back(ex.label);
    }
    out << json{{"id", s.id}, {"x", std::move(x)}, {"y", std::move(y)}}.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::pair<Population, Population> split_devices(const Population& pop, double fraction,
                                                std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split_devices: fraction must lie in (0, 1)");
  }
  const std::size_t n = pop.size();
  const auto first =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (first == 0 || first == n) {
    throw std::invalid_argument("split_devices: split of " + std::to_string(n) +
                                " devices leaves one side empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {stream::kSplit}));
  rng.shuffle(std::span<std::size_t>(order));
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(first), order.end());

  std::vector<DeviceShard> a;
  std::vector<DeviceShard> b;
  for (std::size_t i = 0; i < n; ++i) {
    (i < first ? a : b).push_back(pop.shard(order[i]));
  }
  return {Population(std::move(a), pop.num_classes()),
          Population(std::move(b), pop.num_classes())};
}

}  // namespace superfed
