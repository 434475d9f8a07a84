#include "superfed/secure_agg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "superfed/rng.hpp"

namespace superfed {

namespace {

std::size_t common_dimension(std::span<const Contribution> contributions) {
  if (contributions.empty()) throw std::invalid_argument("aggregation: no contributions");
  const std::size_t d = contributions.front().vector.size();
  double total = 0.0;
  for (const auto& c : contributions) {
    if (c.vector.size() != d) throw std::invalid_argument("aggregation: dimension mismatch");
    if (!(c.weight >= 0.0)) throw std::invalid_argument("aggregation: negative weight");
    total += c.weight;
  }
  if (!(total > 0.0)) throw std::invalid_argument("aggregation: all weights are zero");
  return d;
}

// Pairwise-masked sum of the given payloads (all of equal dimension).
MaskedResult masked_payload_sum(std::span<const Contribution> contributions,
                                const std::vector<Vector>& payloads,
                                std::uint64_t pairwise_seed, double mask_scale) {
  const std::size_t n = payloads.size();
  const std::size_t dim = payloads.front().size();
  MaskedResult out;
  out.transcript.masked = n >= 2;
  out.transcript.degenerate_single_client = n < 2;

  std::vector<Vector> uploads = payloads;
  if (n >= 2) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        Rng rng(derive_seed(pairwise_seed, {stream::kMasks, i, j}));
        for (std::size_t c = 0; c < dim; ++c) {
          const double m = rng.uniform(-mask_scale, mask_scale);
          uploads[i][c] += m;
          uploads[j][c] -= m;
        }
      }
    }
  }

  out.value.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.transcript.messages.push_back(
        {contributions[i].sender, "server", n >= 2 ? "masked_update" : "plain_update", dim});
    for (std::size_t c = 0; c < dim; ++c) out.value[c] += uploads[i][c];
  }
  out.transcript.server_visible = std::move(uploads);
  return out;
}

}  // namespace

nlohmann::json AggregationTranscript::to_json() const {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"sender", m.sender},
                    {"receiver", m.receiver},
                    {"kind", m.kind},
                    {"dimension", m.dimension}});
  }
  return {{"masked", masked},
          {"degenerate_single_client", degenerate_single_client},
          {"messages", std::move(msgs)},
          {"server_visible", server_visible}};
}

Vector plain_sum(std::span<const Contribution> contributions) {
  const std::size_t d = common_dimension(contributions);
  Vector out(d, 0.0);
  for (const auto& c : contributions) {
    for (std::size_t i = 0; i < d; ++i) out[i] += c.weight * c.vector[i];
  }
  return out;
}

Vector plain_weighted_sum(std::span<const Contribution> contributions) {
  const std::size_t d = common_dimension(contributions);
  double total = 0.0;
  for (const auto& c : contributions) total += c.weight;
  Vector out(d, 0.0);
  for (const auto& c : contributions) {
    const double share = c.weight / total;
    for (std::size_t i = 0; i < d; ++i) out[i] += share * c.vector[i];
  }
  return out;
}

MaskedResult masked_sum(std::span<const Contribution> contributions,
                        std::uint64_t pairwise_seed, double mask_scale) {
  const std::size_t d = common_dimension(contributions);
  std::vector<Vector> payloads;
  payloads.reserve(contributions.size());
  for (const auto& c : contributions) {
    Vector p(d);
    for (std::size_t i = 0; i < d; ++i) p[i] = c.weight * c.vector[i];
    payloads.push_back(std::move(p));
  }
  return masked_payload_sum(contributions, payloads, pairwise_seed, mask_scale);
}

MaskedResult masked_weighted_sum(std::span<const Contribution> contributions,
                                 std::uint64_t pairwise_seed, double mask_scale) {
  const std::size_t d = common_dimension(contributions);
  std::vector<Vector> payloads;
  payloads.reserve(contributions.size());
  for (const auto& c : contributions) {
    Vector p(d + 1);
    for (std::size_t i = 0; i < d; ++i) p[i] = c.weight * c.vector[i];
    p[d] = c.weight;
    payloads.push_back(std::move(p));
  }
  MaskedResult out = masked_payload_sum(contributions, payloads, pairwise_seed, mask_scale);
  const double total = out.value[d];
  out.value.resize(d);
  for (double& v : out.value) v /= total;
  return out;
}

bool transcript_leaks(const AggregationTranscript& transcript,
                      std::span<const Contribution> contributions, double tol) {
  auto matches = [tol](const Vector& payload, const Vector& raw, double scale) {
    if (payload.size() < raw.size()) return false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (std::abs(payload[i] - scale * raw[i]) > tol) return false;
    }
    return true;
  };
  for (const auto& payload : transcript.server_visible) {
    for (const auto& c : contributions) {
      if (matches(payload, c.vector, c.weight) || matches(payload, c.vector, 1.0)) return true;
    }
  }
  return false;
}

std::string to_string(AggregationMode mode) {
  return mode == AggregationMode::masked ? "masked" : "plain";
}

AggregationMode aggregation_mode_from_string(const std::string& name) {
  if (name == "plain") return AggregationMode::plain;
  if (name == "masked") return AggregationMode::masked;
  throw std::invalid_argument("unknown aggregation mode '" + name + "'");
}

Aggregator::Aggregator(AggregationMode mode, std::uint64_t seed, double mask_scale,
                       bool keep_transcripts)
    : mode_(mode), seed_(seed), mask_scale_(mask_scale), keep_transcripts_(keep_transcripts) {}

Vector Aggregator::weighted_average(std::span<const Contribution> contributions) {
  const std::uint64_t call_seed = derive_seed(seed_, {calls_++});
  if (mode_ == AggregationMode::plain) return plain_weighted_sum(contributions);
  auto result = masked_weighted_sum(contributions, call_seed, mask_scale_);
  if (keep_transcripts_) transcripts_.push_back(std::move(result.transcript));
  return std::move(result.value);
}

Vector Aggregator::sum(std::span<const Contribution> contributions) {
  const std::uint64_t call_seed = derive_seed(seed_, {calls_++});
  if (mode_ == AggregationMode::plain) return plain_sum(contributions);
  auto result = masked_sum(contributions, call_seed, mask_scale_);
  if (keep_transcripts_) transcripts_.push_back(std::move(result.transcript));
  return std::move(result.value);
}

PinballSpec::PinballSpec(double tau_, Vector values_, Vector weights_)
    : tau(tau_), values(std::move(values_)), weights(std::move(weights_)) {
  if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("pinball: tau must lie in [0, 1)");
  // Reuses the WeightedValues checks (positivity, normalization, finiteness).
  const WeightedValues checked(values, weights);
  weights.assign(checked.weights().begin(), checked.weights().end());
}

double pinball_loss(const PinballSpec& spec, double mu) {
  double s = 0.0;
  for (std::size_t k = 0; k < spec.values.size(); ++k) {
    const double r = spec.values[k] - mu;
    s += spec.weights[k] * (r >= 0.0 ? spec.tau * r : -(1.0 - spec.tau) * r);
  }
  return s;
}

MmQuantileResult mm_quantile(const PinballSpec& spec, std::size_t max_iters, double tol,
                             Aggregator& aggregator, std::optional<double> initial) {
  if (max_iters == 0) throw std::invalid_argument("mm_quantile: max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("mm_quantile: tol must be positive");
  constexpr double kCoincide = 1e-12;

  const auto& x = spec.values;
  const auto& alpha = spec.weights;
  const std::size_t m = x.size();
  MmQuantileResult out;

  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double range = *hi - *lo;
  if (range == 0.0) {
    out.value = x.front();
    out.converged = true;
    out.trajectory.push_back(out.value);
    return out;
  }

  auto contributions = [&](auto&& payload, auto&& weight) {
    std::vector<Contribution> cs(m);
    for (std::size_t k = 0; k < m; ++k) {
      cs[k] = {"client_" + std::to_string(k), {payload(k)}, weight(k)};
    }
    return cs;
  };

  // mu_0: weighted mean nudged off the data points.
  double mu = 0.0;
  if (initial) {
    mu = *initial;
  } else {
    const auto mean_cs = contributions([&](std::size_t k) { return x[k]; },
                                       [&](std::size_t k) { return alpha[k]; });
    mu = aggregator.sum(mean_cs)[0] + 1e-9 * range;
  }
  out.trajectory.push_back(mu);

  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t k = 0; k < m; ++k) {
      if (std::abs(x[k] - mu) <= kCoincide) {
        out.value = x[k];
        out.iterations = it;
        out.converged = true;
        out.trajectory.push_back(out.value);
        return out;
      }
    }
    auto beta = [&](std::size_t k) { return alpha[k] / std::max(std::abs(x[k] - mu), kCoincide); };
    const double numerator =
        aggregator.sum(contributions([&](std::size_t k) { return x[k]; }, beta))[0];
    const double denominator =
        aggregator.sum(contributions([](std::size_t) { return 1.0; }, beta))[0];
    const double next = (numerator + (2.0 * spec.tau - 1.0)) / denominator;
    out.trajectory.push_back(next);
    out.iterations = it + 1;
    const double step = std::abs(next - mu);
    mu = next;
    if (step <= tol) {
      out.converged = true;
      break;
    }
  }
  out.value = mu;
  return out;
}

double secure_quantile_for_round(std::span<const double> losses, std::span<const double> weights,
                                 ConformityLevel theta, Aggregator& aggregator,
                                 const MmOptions& options) {
  if (losses.empty() || losses.size() != weights.size()) {
    throw std::invalid_argument("secure_quantile_for_round: bad inputs");
  }
  if (theta.is_vanilla()) return *std::min_element(losses.begin(), losses.end());
  const auto wv = WeightedValues::normalized(Vector(losses.begin(), losses.end()),
                                             Vector(weights.begin(), weights.end()));
  const PinballSpec spec(1.0 - theta.value(), Vector(wv.values().begin(), wv.values().end()),
                         Vector(wv.weights().begin(), wv.weights().end()));
  return mm_quantile(spec, options.max_iters, options.tol, aggregator).value;
}

}  // namespace superfed
