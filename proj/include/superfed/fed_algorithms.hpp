#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "superfed/data.hpp"
#include "superfed/metrics.hpp"
#include "superfed/models.hpp"
#include "superfed/objective.hpp"
#include "superfed/rng.hpp"
#include "superfed/secure_agg.hpp"

namespace superfed {

// LocalUpdate flavours: n_local single-example SGD steps on examples drawn
// with replacement, or one shuffled epoch of mini-batch SGD.
enum class LocalMode { steps, epoch };
// Where eta_t comes from: the server sorts reported losses, or the MM
// quantile runs over secure aggregation.
enum class EtaProtocol { server_direct, secure_mm };
// server: the server drops devices below eta_t. client: every sampled device
// receives eta_t and returns weight 0 when it fails the filter.
enum class FilterMode { server, client };
enum class Algorithm { fedavg, deltafl, am_meta };

std::string to_string(LocalMode v);
std::string to_string(EtaProtocol v);
std::string to_string(FilterMode v);
std::string to_string(Algorithm v);
LocalMode local_mode_from_string(const std::string& s);
EtaProtocol eta_protocol_from_string(const std::string& s);
FilterMode filter_mode_from_string(const std::string& s);
Algorithm algorithm_from_string(const std::string& s);

struct FederationConfig {
  double theta = 0.5;
  double nu = 1e-3;
  std::size_t devices_per_round = 10;  // m
  LocalMode local_mode = LocalMode::epoch;
  std::size_t local_steps = 10;  // n_local in steps mode
  std::size_t batch_size = 10;
  double lr = 0.1;                    // gamma_0
  double lr_decay = 1.0;              // c in (0, 1]
  std::size_t lr_decay_period = 1;    // t_0
  std::size_t rounds = 100;           // T
  std::size_t eta_period = 1;         // T_eta
  std::size_t eval_period = 0;        // l; 0 evaluates only at the end
  std::uint64_t seed = 0;
  LossSpec loss;
  AggregationMode aggregation = AggregationMode::plain;
  double mask_scale = 1.0;
  EtaProtocol eta_protocol = EtaProtocol::server_direct;
  FilterMode filter = FilterMode::server;
  MmOptions mm;

  void validate() const;
};

// gamma_0 * c^floor(t / t_0).
double lr_schedule(const FederationConfig& cfg, std::size_t t);

ModelParams local_update(const DeviceShard& shard, std::span<const double> w,
                         const FederationConfig& cfg, std::size_t t, Rng& rng);

struct RoundLog {
  std::size_t round = 0;
  std::vector<std::size_t> sampled;        // S_t, sorted, duplicates collapsed
  std::vector<double> sampled_losses;      // F_k(w_t) for k in S_t (Delta-FL only)
  std::optional<double> eta;               // eta_t
  bool eta_refreshed = false;
  std::vector<std::size_t> filtered;       // S'_t
  std::optional<double> objective_before;  // sample superquantile at w_t
  std::optional<double> objective_after;   // ... at w_{t+1}
  double update_norm = 0.0;
  double lr = 0.0;

  nlohmann::json to_json() const;
};

struct RoundResult {
  ModelParams w;
  RoundLog log;
};

// Sampling and local-update randomness are derived from (cfg.seed, t, k), so
// both algorithms see identical streams for the same round.
RoundResult fedavg_round(const Population& pop, std::span<const double> w,
                         const FederationConfig& cfg, std::size_t t, Aggregator& aggregator);

// One Delta-FL round. `frozen_eta` reuses a previous threshold (T_eta > 1).
RoundResult deltafl_round(const Population& pop, std::span<const double> w,
                          const FederationConfig& cfg, std::size_t t, Aggregator& aggregator,
                          std::optional<double> frozen_eta = std::nullopt);

struct MetricSnapshot {
  std::size_t round = 0;  // number of completed rounds
  DeviceMetricTable train;
  std::optional<DeviceMetricTable> test;
};

struct RunResult {
  ModelParams w;
  std::vector<RoundLog> logs;
  std::vector<MetricSnapshot> snapshots;
};

// T rounds of FedAvg or Delta-FL from w = 0. Snapshots are taken every
// eval_period rounds and after the last round.
RunResult run_federated(const Population& pop, const FederationConfig& cfg, Algorithm algorithm,
                        const Population* test_pop = nullptr);

// Summable tolerance sequences for the inexact w-step.
class InexactnessSchedule {
 public:
  // eps_0 (t + 1)^(-power); summable iff power > 1.
  static InexactnessSchedule polynomial(double eps0, double power);
  // eps_0 ratio^t; summable iff ratio < 1.
  static InexactnessSchedule geometric(double eps0, double ratio);

  double at(std::size_t t) const;
  bool summable() const;

 private:
  enum class Family { polynomial, geometric };
  InexactnessSchedule(Family f, double eps0, double rate);
  Family family_;
  double eps0_;
  double rate_;
};

struct WStepOptions {
  std::size_t max_iters = 200000;
  // Optional extra stopping requirement ||grad|| <= gradient_tolerance.
  double gradient_tolerance = std::numeric_limits<double>::infinity();
};

struct AmIterate {
  std::size_t t = 0;
  ModelParams w;
  double eta = 0.0;
  EtaInterval eta_interval{0.0, 0.0};
  double value = 0.0;      // smoothed objective at (w_t, eta_t) = F_{theta,nu}(w_t)
  double grad_w_norm = 0.0;
  double grad_eta = 0.0;
  double grad_norm = 0.0;  // ||grad_{w,eta}||
  double epsilon = 0.0;    // eps_t used for the following w-step
  std::size_t wstep_iters = 0;
  double wstep_bound = 0.0;  // certified suboptimality bound of w_{t+1}
};

struct AmResult {
  ModelParams w;
  std::vector<AmIterate> trace;  // t = 0..T
};

// Alternating minimization of the smoothed objective: eta-step in closed form
// (canonical point of the minimizer interval), then a w-step by gradient
// descent (Barzilai-Borwein steps with Armijo backtracking) until the
// suboptimality bound ||grad||^2 / (2 mu) <= eps_t, where mu is the devices'
// strong-convexity bound scaled by the active weight (1/theta) sum alpha_k
// g_nu'. When no strong convexity is known the proxy ||grad||^2 / (2 L) with L
// the local curvature estimate is used instead. Throws if a w-step exceeds
// its iteration cap.
AmResult am_meta(const DeviceObjective& objective, ConformityLevel theta, SmoothingParam nu,
                 const InexactnessSchedule& schedule, ModelParams w0, std::size_t rounds,
                 const WStepOptions& options = {});

}  // namespace superfed
