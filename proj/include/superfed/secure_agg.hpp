#pragma once

// Simulated secure aggregation.
//
// Clients i < j share a pseudorandom mask m_ij (derived from a pairwise
// seed). Client i uploads weight_i * v_i + sum_{j>i} m_ij - sum_{j<i} m_ji,
// so the server only ever sees masked payloads while the masks cancel in
// the sum. No cryptography, no dropout recovery.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "superfed/superquantile.hpp"

namespace superfed {

struct Contribution {
  std::string sender;
  Vector vector;
  double weight = 1.0;
};

struct TranscriptMessage {
  std::string sender;
  std::string receiver;
  std::string kind;
  std::size_t dimension = 0;
};

// Everything the server observed during one aggregation.
struct AggregationTranscript {
  std::vector<TranscriptMessage> messages;
  std::vector<Vector> server_visible;  // one payload per client, upload order
  bool masked = false;
  bool degenerate_single_client = false;

  nlohmann::json to_json() const;
};

// Sum_k weight_k v_k / Sum_k weight_k.
Vector plain_weighted_sum(std::span<const Contribution> contributions);

// Sum_k weight_k v_k (no normalization).
Vector plain_sum(std::span<const Contribution> contributions);

struct MaskedResult {
  Vector value;
  AggregationTranscript transcript;
};

// Weighted average through pairwise masking. Each client uploads its masked
// (weight * v, weight) pair of dimension d + 1. Mask entries are uniform in
// [-mask_scale, mask_scale]. A single contributor is sent unmasked and the
// transcript is flagged.
MaskedResult masked_weighted_sum(std::span<const Contribution> contributions,
                                 std::uint64_t pairwise_seed, double mask_scale = 1.0);

// Masked Sum_k weight_k v_k.
MaskedResult masked_sum(std::span<const Contribution> contributions,
                        std::uint64_t pairwise_seed, double mask_scale = 1.0);

// True if some server-visible payload equals a raw contribution
// (weight * v, or v itself) to within tol in every coordinate.
bool transcript_leaks(const AggregationTranscript& transcript,
                      std::span<const Contribution> contributions, double tol = 1e-9);

enum class AggregationMode { plain, masked };

std::string to_string(AggregationMode mode);
AggregationMode aggregation_mode_from_string(const std::string& name);

// Stateful aggregation service for one simulation: each call draws a fresh
// pairwise seed from (seed, call counter) and optionally keeps transcripts.
class Aggregator {
 public:
  explicit Aggregator(AggregationMode mode = AggregationMode::plain, std::uint64_t seed = 0,
                      double mask_scale = 1.0, bool keep_transcripts = false);

  Vector weighted_average(std::span<const Contribution> contributions);
  Vector sum(std::span<const Contribution> contributions);

  AggregationMode mode() const { return mode_; }
  std::size_t calls() const { return calls_; }
  const std::vector<AggregationTranscript>& transcripts() const { return transcripts_; }

 private:
  AggregationMode mode_;
  std::uint64_t seed_;
  double mask_scale_;
  bool keep_transcripts_;
  std::size_t calls_ = 0;
  std::vector<AggregationTranscript> transcripts_;
};

struct PinballSpec {
  PinballSpec(double tau, Vector values, Vector weights);

  double tau;
  Vector values;
  Vector weights;  // positive, sum to one
};

// H_tau(mu) = sum_k alpha_k h_tau(x_k - mu), h_tau(r) = tau r for r >= 0 and
// -(1 - tau) r otherwise. Minimized exactly by the tau-quantiles.
double pinball_loss(const PinballSpec& spec, double mu);

struct MmQuantileResult {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trajectory;  // mu_0, mu_1, ...
};

// Majorization-minimization for the tau-quantile using only aggregated
// sums: mu_{t+1} = (sum_k beta_k x_k + (2 tau - 1)) / sum_k beta_k with
// beta_k = alpha_k / |x_k - mu_t|. Each iteration makes two aggregator calls.
// If mu_t coincides with a data point (within 1e-12) that point is returned.
// On non-convergence within max_iters the last iterate is returned with
// converged = false.
// `initial` replaces the default mu_0.
MmQuantileResult mm_quantile(const PinballSpec& spec, std::size_t max_iters, double tol,
                             Aggregator& aggregator, std::optional<double> initial = std::nullopt);

struct MmOptions {
  std::size_t max_iters = 2000;
  double tol = 1e-10;
};

// (1 - theta)-quantile of the sampled devices' losses; weights are
// renormalized over the sample. theta = 1 returns the minimum loss so that
// every device passes the filter.
double secure_quantile_for_round(std::span<const double> losses, std::span<const double> weights,
                                 ConformityLevel theta, Aggregator& aggregator,
                                 const MmOptions& options = {});

}  // namespace superfed
