#pragma once

// Config-driven experiment runner behind the `superfed` command line tool.
//
// Output layout of `run`:
//   <output_dir>/summary.json
//   <output_dir>/runs/<theta>/<seed>/rounds.jsonl
//   <output_dir>/runs/<theta>/<seed>/metrics.csv
//   <output_dir>/runs/<theta>/<seed>/train_scatter.csv
//   <output_dir>/runs/<theta>/<seed>/test_scatter.csv   (when test devices exist)

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "superfed/data.hpp"
#include "superfed/fed_algorithms.hpp"

namespace superfed {

inline constexpr int kConfigSchemaVersion = 1;

enum ExitCode : int { kExitOk = 0, kExitConfigError = 1, kExitRuntimeError = 2 };

// Validation failure naming the offending field, e.g. "thetas[1]".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class DataKind { hetero_logistic, gaussian_mixture, file };

struct DataSource {
  DataKind kind = DataKind::hetero_logistic;
  std::uint64_t seed = 0;
  HeteroLogisticSpec hetero;
  std::vector<std::array<double, 2>> means;
  std::size_t n_per_device = 1000;
  std::filesystem::path path;
  std::optional<std::filesystem::path> test_path;
  double test_fraction = 0.0;  // 0 keeps every device for training
};

struct AmMetaSettings {
  double eps0 = 0.1;
  double power = 1.5;
  std::size_t rounds = 100;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  DataSource data;
  FederationConfig federation;  // theta and seed are set per cell
  Algorithm algorithm = Algorithm::deltafl;
  std::vector<double> thetas{0.5};
  std::vector<std::uint64_t> seeds{0};
  AmMetaSettings am;
  std::filesystem::path output_dir = "out";

  nlohmann::json to_json() const;
};

// Parses and validates; throws ConfigError. Relative data paths resolve
// against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct Populations {
  Population train;
  std::optional<Population> test;
};

Populations build_populations(const DataSource& source);

// Directory label for a conformity level ("1", "0.5", ...).
std::string theta_label(double theta);

struct CellResult {
  double theta = 0.0;
  std::uint64_t seed = 0;
  std::string label;
  MetricSummary train;
  std::optional<MetricSummary> test;
};

// Runs every (theta, seed) cell and writes the output tree; returns the
// per-cell final summaries in (theta, seed) order.
std::vector<CellResult> run_experiment(const ExperimentConfig& cfg);

struct RunOverrides {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::size_t> rounds;
  std::optional<std::vector<double>> thetas;
  std::optional<std::vector<std::uint64_t>> seeds;
};

int cmd_run(const std::filesystem::path& config_path, const RunOverrides& overrides = {});
int cmd_validate(const std::filesystem::path& config_path);

struct GaussianDemoOptions {
  std::vector<std::array<double, 2>> means{{0.0, 0.0}, {1.5, 1.0}, {4.0, 0.0}};
  double nu = 1e-3;
  double eps0 = 0.1;
  double power = 1.5;
  std::size_t rounds = 200;
  std::size_t samples_per_device = 0;  // 0: exact population losses
  std::uint64_t seed = 0;
};

struct GaussianDemoRun {
  double theta = 1.0;
  std::array<double, 2> w{};
  std::optional<std::array<double, 2>> target;
  std::optional<double> distance;
  std::string target_name;
};

struct GaussianDemoResult {
  std::vector<GaussianDemoRun> runs;  // theta = 1, then theta = 2/3
  bool longest_side_tie = false;
  // The midpoint of the longest side minimizes the theta = 2/3 objective
  // only when the angle opposite that side is at least 90 degrees.
  bool midpoint_optimal = true;

  nlohmann::json to_json() const;
};

GaussianDemoResult run_gaussian_demo(const GaussianDemoOptions& options);
int cmd_gaussian_demo(const std::filesystem::path& out_dir, const GaussianDemoOptions& options);

}  // namespace superfed
