#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "superfed/data.hpp"
#include "superfed/models.hpp"

namespace superfed {

// train_loss is summarized with weights alpha_k; test metrics unweighted.
enum class MetricKind { train_loss, test_error, test_loss };

std::string to_string(MetricKind kind);

struct MetricRow {
  std::string id;
  std::size_t n = 0;
  double alpha = 0.0;
  double value = 0.0;

  bool operator==(const MetricRow&) const = default;
};

struct DeviceMetricTable {
  MetricKind kind = MetricKind::train_loss;
  std::vector<MetricRow> rows;
};

DeviceMetricTable train_loss_table(const Population& pop, const LossSpec& spec,
                                   std::span<const double> w);

// Misclassification error per device, or mean loss for regression specs.
DeviceMetricTable test_metric_table(const Population& pop, const LossSpec& spec,
                                    std::span<const double> w);

inline const std::vector<double> kDefaultPercentiles = {20, 50, 60, 80, 90, 95};

struct MetricSummary {
  MetricKind kind = MetricKind::train_loss;
  std::size_t count = 0;
  double mean = 0.0;
  std::map<double, double> percentiles;  // tau in [0, 100) -> value

  // Keys: mean, p20, p50, ... (percentile labels formatted with %g).
  nlohmann::json to_json() const;
};

// Percentile tau is the lower weighted quantile at level tau / 100 (no
// interpolation), i.e. weighted_quantile with theta = 1 - tau / 100.
MetricSummary summarize(const DeviceMetricTable& table,
                        const std::vector<double>& percentiles = kDefaultPercentiles);

struct HistogramBin {
  double left_edge = 0.0;
  std::size_t count = 0;
};

// Equal-width bins over [min, max], right-open except the last.
std::vector<HistogramBin> histogram(const DeviceMetricTable& table, std::size_t bins);

// CSV "id,n_k,alpha_k,value", rows sorted by id.
void scatter_export(const DeviceMetricTable& table, const std::filesystem::path& path);
std::vector<MetricRow> read_scatter_csv(const std::filesystem::path& path);

// JSON array of {label, summary} records.
void summary_export(const std::vector<std::pair<std::string, MetricSummary>>& records,
                    const std::filesystem::path& path);

// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_stddev(const std::vector<double>& values);

// Round-trip formatting used by every CSV writer.
std::string format_double(double v);

}  // namespace superfed
