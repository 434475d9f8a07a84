#include "superfed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "superfed/superquantile.hpp"

namespace superfed {

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::train_loss: return "train_loss";
    case MetricKind::test_error: return "test_error";
    case MetricKind::test_loss: return "test_loss";
  }
  return "unknown";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

DeviceMetricTable train_loss_table(const Population& pop, const LossSpec& spec,
                                   std::span<const double> w) {
  DeviceMetricTable t{MetricKind::train_loss, {}};
  for (const auto& s : pop.shards()) {
    t.rows.push_back({s.id, s.size(), s.weight, device_loss(spec, w, s)});
  }
  return t;
}

DeviceMetricTable test_metric_table(const Population& pop, const LossSpec& spec,
                                    std::span<const double> w) {
  const bool classify = spec.is_classification();
  DeviceMetricTable t{classify ? MetricKind::test_error : MetricKind::test_loss, {}};
  for (const auto& s : pop.shards()) {
    const double v = classify ? device_error(spec, w, s) : device_loss(spec, w, s);
    t.rows.push_back({s.id, s.size(), s.weight, v});
  }
  return t;
}

nlohmann::json MetricSummary::to_json() const {
  nlohmann::json j;
  j["kind"] = superfed::to_string(kind);
  j["count"] = count;
  j["mean"] = mean;
  for (const auto& [tau, v] : percentiles) {
    char key[32];
    std::snprintf(key, sizeof(key), "p%g", tau);
    j[key] = v;
  }
  return j;
}

MetricSummary summarize(const DeviceMetricTable& table, const std::vector<double>& percentiles) {
  if (table.rows.empty()) throw std::invalid_argument("summarize: empty table");
  Vector values;
  Vector weights;
  const bool weighted = table.kind == MetricKind::train_loss;
  for (const auto& r : table.rows) {
    values.push_back(r.value);
    weights.push_back(weighted ? r.alpha : 1.0);
  }
  const auto wv = WeightedValues::normalized(values, weights);
  MetricSummary s;
  s.kind = table.kind;
  s.count = table.rows.size();
  s.mean = weighted_mean(wv);
  for (double tau : percentiles) {
    if (!(tau >= 0.0 && tau < 100.0)) {
      throw std::invalid_argument("summarize: percentile must lie in [0, 100)");
    }
    s.percentiles[tau] = weighted_quantile(wv, ConformityLevel(1.0 - tau / 100.0));
  }
  return s;
}

std::vector<HistogramBin> histogram(const DeviceMetricTable& table, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram: bins must be >= 1");
  std::vector<HistogramBin> out(bins);
  if (table.rows.empty()) return out;
  const auto [lo_it, hi_it] =
      std::minmax_element(table.rows.begin(), table.rows.end(),
                          [](const MetricRow& a, const MetricRow& b) { return a.value < b.value; });
  const double lo = lo_it->value;
  const double hi = hi_it->value;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) out[b].left_edge = lo + width * static_cast<double>(b);
  for (const auto& r : table.rows) {
    std::size_t b = 0;
    if (width > 0.0) {
      b = static_cast<std::size_t>(std::floor((r.value - lo) / width));
      b = std::min(b, bins - 1);
    }
    ++out[b].count;
  }
  return out;
}

void scatter_export(const DeviceMetricTable& table, const std::filesystem::path& path) {
  std::vector<MetricRow> rows = table.rows;
  std::sort(rows.begin(), rows.end(),
            [](const MetricRow& a, const MetricRow& b) { return a.id < b.id; });
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "id,n_k,alpha_k,value\n";
  for (const auto& r : rows) {
    out << r.id << ',' << r.n << ',' << format_double(r.alpha) << ',' << format_double(r.value)
        << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<MetricRow> read_scatter_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "id,n_k,alpha_k,value") {
    throw std::runtime_error(path.string() + ": missing scatter header");
  }
  std::vector<MetricRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, n, alpha, value;
    if (!std::getline(ss, id, ',') || !std::getline(ss, n, ',') ||
        !std::getline(ss, alpha, ',') || !std::getline(ss, value)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 4 fields");
    }
    rows.push_back({id, std::stoull(n), std::stod(alpha), std::stod(value)});
  }
  return rows;
}

void summary_export(const std::vector<std::pair<std::string, MetricSummary>>& records,
                    const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [label, s] : records) j.push_back({{"label", label}, {"summary", s.to_json()}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace superfed
