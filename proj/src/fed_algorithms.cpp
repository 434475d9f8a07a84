#include "superfed/fed_algorithms.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace superfed {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<std::size_t> sample_devices(std::size_t n, const FederationConfig& cfg,
                                        std::size_t t) {
  Rng rng(derive_seed(cfg.seed, {stream::kSampling, t}));
  std::vector<std::size_t> s(cfg.devices_per_round);
  for (auto& k : s) k = static_cast<std::size_t>(rng.below(n));
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

ModelParams update_on_device(const Population& pop, std::span<const double> w,
                             const FederationConfig& cfg, std::size_t t, std::size_t k) {
  Rng rng(derive_seed(cfg.seed, {stream::kLocal, t, k}));
  return local_update(pop.shard(k), w, cfg, t, rng);
}

WeightedValues sample_values(const Population& pop, const std::vector<std::size_t>& ids,
                             const Vector& losses) {
  Vector weights;
  weights.reserve(ids.size());
  for (auto k : ids) weights.push_back(pop.shard(k).weight);
  return WeightedValues::normalized(losses, std::move(weights));
}

void check_population(const Population& pop, std::span<const double> w,
                      const FederationConfig& cfg) {
  if (pop.empty()) throw std::invalid_argument("federated round: empty population");
  if (w.size() != cfg.loss.param_dim(pop.feature_dim())) {
    throw std::invalid_argument("federated round: model dimension mismatch");
  }
}

}  // namespace

std::string to_string(LocalMode v) { return v == LocalMode::steps ? "steps" : "epoch"; }
std::string to_string(EtaProtocol v) {
  return v == EtaProtocol::secure_mm ? "secure_mm" : "server_direct";
}
std::string to_string(FilterMode v) { return v == FilterMode::client ? "client" : "server"; }
std::string to_string(Algorithm v) {
  switch (v) {
    case Algorithm::fedavg: return "fedavg";
    case Algorithm::deltafl: return "deltafl";
    case Algorithm::am_meta: return "am_meta";
  }
  return "unknown";
}

LocalMode local_mode_from_string(const std::string& s) {
  if (s == "steps") return LocalMode::steps;
  if (s == "epoch") return LocalMode::epoch;
  throw std::invalid_argument("unknown local_mode '" + s + "'");
}
EtaProtocol eta_protocol_from_string(const std::string& s) {
  if (s == "server_direct") return EtaProtocol::server_direct;
  if (s == "secure_mm") return EtaProtocol::secure_mm;
  throw std::invalid_argument("unknown eta_protocol '" + s + "'");
}
FilterMode filter_mode_from_string(const std::string& s) {
  if (s == "server") return FilterMode::server;
  if (s == "client") return FilterMode::client;
  throw std::invalid_argument("unknown filter mode '" + s + "'");
}
Algorithm algorithm_from_string(const std::string& s) {
  if (s == "fedavg") return Algorithm::fedavg;
  if (s == "deltafl") return Algorithm::deltafl;
  if (s == "am_meta") return Algorithm::am_meta;
  throw std::invalid_argument("unknown algorithm '" + s + "'");
}

void FederationConfig::validate() const {
  (void)ConformityLevel(theta);
  (void)SmoothingParam(nu);
  loss.validate();
  if (devices_per_round < 1) throw std::invalid_argument("devices_per_round must be >= 1");
  if (local_mode == LocalMode::steps && local_steps < 1) {
    throw std::invalid_argument("local_steps must be >= 1");
  }
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must lie in (0, 1]");
  if (lr_decay_period < 1) throw std::invalid_argument("lr_decay_period must be >= 1");
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (eta_period < 1) throw std::invalid_argument("eta_period must be >= 1");
  if (!(mask_scale > 0.0)) throw std::invalid_argument("mask_scale must be positive");
}

double lr_schedule(const FederationConfig& cfg, std::size_t t) {
  const auto decays = static_cast<double>(t / cfg.lr_decay_period);
  return cfg.lr * std::pow(cfg.lr_decay, decays);
}

ModelParams local_update(const DeviceShard& shard, std::span<const double> w,
                         const FederationConfig& cfg, std::size_t t, Rng& rng) {
  if (shard.examples.empty()) {
    throw std::invalid_argument("local_update: device '" + shard.id + "' is empty");
  }
  const double gamma = lr_schedule(cfg, t);
  ModelParams out(w.begin(), w.end());
  const std::size_t n = shard.size();

  auto step = [&](std::span<const std::size_t> batch) {
    const Vector g = batch_grad(cfg.loss, out, shard, batch);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= gamma * g[i];
  };

  if (cfg.local_mode == LocalMode::steps) {
    for (std::size_t i = 0; i < cfg.local_steps; ++i) {
      const std::size_t idx = static_cast<std::size_t>(rng.below(n));
      step(std::span<const std::size_t>(&idx, 1));
    }
  } else {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      step(std::span<const std::size_t>(order.data() + start, len));
    }
  }
  return out;
}

nlohmann::json RoundLog::to_json() const {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"round", round},
          {"sampled", sampled},
          {"sampled_losses", sampled_losses},
          {"eta", opt(eta)},
          {"eta_refreshed", eta_refreshed},
          {"filtered", filtered},
          {"objective_before", opt(objective_before)},
          {"objective_after", opt(objective_after)},
          {"update_norm", update_norm},
          {"lr", lr}};
}

RoundResult fedavg_round(const Population& pop, std::span<const double> w,
                         const FederationConfig& cfg, std::size_t t, Aggregator& aggregator) {
  check_population(pop, w, cfg);
  RoundResult out;
  out.log.round = t;
  out.log.lr = lr_schedule(cfg, t);
  out.log.sampled = sample_devices(pop.size(), cfg, t);
  out.log.filtered = out.log.sampled;

  std::vector<Contribution> contributions;
  for (auto k : out.log.filtered) {
    contributions.push_back(
        {pop.shard(k).id, update_on_device(pop, w, cfg, t, k), pop.shard(k).weight});
  }
  out.w = aggregator.weighted_average(contributions);
  out.log.update_norm = distance(out.w, w);
  return out;
}

RoundResult deltafl_round(const Population& pop, std::span<const double> w,
                          const FederationConfig& cfg, std::size_t t, Aggregator& aggregator,
                          std::optional<double> frozen_eta) {
  check_population(pop, w, cfg);
  const ConformityLevel theta(cfg.theta);
  RoundResult out;
  auto& log = out.log;
  log.round = t;
  log.lr = lr_schedule(cfg, t);
  log.sampled = sample_devices(pop.size(), cfg, t);

  Vector losses;
  Vector weights;
  for (auto k : log.sampled) {
    losses.push_back(device_loss(cfg.loss, w, pop.shard(k)));
    weights.push_back(pop.shard(k).weight);
  }
  log.sampled_losses = losses;

  double eta;
  if (frozen_eta) {
    eta = *frozen_eta;
  } else if (theta.is_vanilla()) {
    eta = *std::min_element(losses.begin(), losses.end());
    log.eta_refreshed = true;
  } else if (cfg.eta_protocol == EtaProtocol::secure_mm) {
    eta = secure_quantile_for_round(losses, weights, theta, aggregator, cfg.mm);
    log.eta_refreshed = true;
  } else {
    eta = weighted_quantile(sample_values(pop, log.sampled, losses), theta);
    log.eta_refreshed = true;
  }
  log.eta = eta;

  std::vector<bool> passes(log.sampled.size());
  for (std::size_t i = 0; i < log.sampled.size(); ++i) {
    passes[i] = losses[i] >= eta;
    if (passes[i]) log.filtered.push_back(log.sampled[i]);
  }
  if (log.filtered.empty()) {
    const auto worst = static_cast<std::size_t>(
        std::max_element(losses.begin(), losses.end()) - losses.begin());
    passes[worst] = true;
    log.filtered.push_back(log.sampled[worst]);
  }

  const auto sample_wv = sample_values(pop, log.sampled, losses);
  log.objective_before = dual_objective(sample_wv, theta, eta);

  std::vector<Contribution> contributions;
  for (std::size_t i = 0; i < log.sampled.size(); ++i) {
    const auto k = log.sampled[i];
    const auto& shard = pop.shard(k);
    if (passes[i]) {
      contributions.push_back({shard.id, update_on_device(pop, w, cfg, t, k), shard.weight});
    } else if (cfg.filter == FilterMode::client) {
      // Failed devices still upload (w, 0) so the server cannot tell them apart.
      contributions.push_back({shard.id, ModelParams(w.begin(), w.end()), 0.0});
    }
  }
  out.w = aggregator.weighted_average(contributions);
  log.update_norm = distance(out.w, w);

  Vector after;
  for (auto k : log.sampled) after.push_back(device_loss(cfg.loss, out.w, pop.shard(k)));
  log.objective_after = superquantile(sample_values(pop, log.sampled, after), theta);
  return out;
}

RunResult run_federated(const Population& pop, const FederationConfig& cfg, Algorithm algorithm,
                        const Population* test_pop) {
  if (pop.empty()) throw std::invalid_argument("run_federated: empty population");
  if (algorithm == Algorithm::am_meta) {
    throw std::invalid_argument("run_federated: use am_meta() for the meta-algorithm");
  }
  (void)ConformityLevel(cfg.theta);
  RunResult out;
  out.w.assign(cfg.loss.param_dim(pop.feature_dim()), 0.0);
  Aggregator aggregator(cfg.aggregation, derive_seed(cfg.seed, {stream::kMasks}), cfg.mask_scale);

  auto snapshot = [&](std::size_t completed) {
    MetricSnapshot s{completed, train_loss_table(pop, cfg.loss, out.w), std::nullopt};
    if (test_pop) s.test = test_metric_table(*test_pop, cfg.loss, out.w);
    out.snapshots.push_back(std::move(s));
  };

  std::optional<double> eta;
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    RoundResult r;
    if (algorithm == Algorithm::fedavg) {
      r = fedavg_round(pop, out.w, cfg, t, aggregator);
    } else {
      const bool refresh = t % cfg.eta_period == 0;
      r = deltafl_round(pop, out.w, cfg, t, aggregator, refresh ? std::nullopt : eta);
      eta = r.log.eta;
    }
    out.w = std::move(r.w);
    out.logs.push_back(std::move(r.log));
    const std::size_t completed = t + 1;
    if (completed == cfg.rounds || (cfg.eval_period > 0 && completed % cfg.eval_period == 0)) {
      snapshot(completed);
    }
  }
  if (cfg.rounds == 0) snapshot(0);
  return out;
}

InexactnessSchedule::InexactnessSchedule(Family f, double eps0, double rate)
    : family_(f), eps0_(eps0), rate_(rate) {
  if (!(eps0 > 0.0)) throw std::invalid_argument("inexactness: eps0 must be positive");
}

InexactnessSchedule InexactnessSchedule::polynomial(double eps0, double power) {
  if (!(power > 0.0)) throw std::invalid_argument("inexactness: power must be positive");
  return {Family::polynomial, eps0, power};
}

InexactnessSchedule InexactnessSchedule::geometric(double eps0, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("inexactness: ratio must lie in (0, 1]");
  }
  return {Family::geometric, eps0, ratio};
}

double InexactnessSchedule::at(std::size_t t) const {
  const auto x = static_cast<double>(t);
  if (family_ == Family::polynomial) return eps0_ * std::pow(x + 1.0, -rate_);
  return eps0_ * std::pow(rate_, x);
}

bool InexactnessSchedule::summable() const {
  return family_ == Family::polynomial ? rate_ > 1.0 : rate_ < 1.0;
}

namespace {

struct WStepOutcome {
  ModelParams w;
  std::size_t iters = 0;
  double bound = 0.0;
};

WStepOutcome solve_wstep(const DeviceObjective& objective, ModelParams w, double eta,
                         ConformityLevel theta, SmoothingParam nu, double eps,
                         const WStepOptions& options, std::size_t outer) {
  const double mu_f = objective.strong_convexity();
  auto value = [&](std::span<const double> x) {
    return smoothed_value(objective, x, eta, theta, nu);
  };

  double h = value(w);
  SmoothedGradient g = smoothed_full_gradient(objective, w, eta, theta, nu);
  double step = 1.0;
  double curvature = 1.0;  // running estimate of the local Lipschitz constant
  ModelParams prev_w;
  Vector prev_g;

  for (std::size_t it = 0;; ++it) {
    const double gg = norm2(g.grad_w);
    const double active = 1.0 - g.grad_eta;  // (1/theta) sum alpha_k g_nu'
    const double modulus = mu_f > 0.0 ? mu_f * std::min(1.0, active) : curvature;
    const double bound = gg == 0.0 ? 0.0 : gg / (2.0 * modulus);
    if (bound <= eps && std::sqrt(gg) <= options.gradient_tolerance) return {w, it, bound};
    if (it >= options.max_iters) {
      std::ostringstream msg;
      msg << "am_meta: w-step at t=" << outer << " did not certify eps=" << eps << " within "
          << options.max_iters << " iterations (bound " << bound << ", |grad| "
          << std::sqrt(gg) << ")";
      throw std::runtime_error(msg.str());
    }

    // Armijo backtracking; the slack absorbs rounding once h is flat to
    // machine precision.
    const double slack = 4.0 * DBL_EPSILON * std::abs(h);
    ModelParams trial(w.size());
    double h_trial = h;
    for (;;) {
      for (std::size_t i = 0; i < w.size(); ++i) trial[i] = w[i] - step * g.grad_w[i];
      h_trial = value(trial);
      if (h_trial <= h - 1e-4 * step * gg + slack) break;
      step *= 0.5;
      if (step < 1e-300) {
        throw std::runtime_error("am_meta: line search failed in w-step at t=" +
                                 std::to_string(outer));
      }
    }

    prev_w = std::move(w);
    prev_g = std::move(g.grad_w);
    w = std::move(trial);
    h = h_trial;
    g = smoothed_full_gradient(objective, w, eta, theta, nu);

    // Barzilai-Borwein step for the next iteration.
    double ss = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double s = w[i] - prev_w[i];
      const double y = g.grad_w[i] - prev_g[i];
      ss += s * s;
      sy += s * y;
    }
    if (sy > 0.0 && ss > 0.0) {
      curvature = sy / ss;
      step = std::clamp(ss / sy, 1e-12, 1e12);
    } else {
      step = std::min(step * 2.0, 1e12);
    }
  }
}

}  // namespace

AmResult am_meta(const DeviceObjective& objective, ConformityLevel theta, SmoothingParam nu,
                 const InexactnessSchedule& schedule, ModelParams w0, std::size_t rounds,
                 const WStepOptions& options) {
  if (w0.size() != objective.dim()) throw std::invalid_argument("am_meta: w0 dimension mismatch");
  AmResult out;
  ModelParams w = std::move(w0);
  for (std::size_t t = 0;; ++t) {
    const WeightedValues wv = objective.weighted_losses(w);
    AmIterate it;
    it.t = t;
    it.eta_interval = smoothed_eta_minimizers(wv, theta, nu);
    it.eta = it.eta_interval.canonical();
    it.value = smoothed_objective(wv, theta, nu, it.eta);
    const SmoothedGradient g = smoothed_full_gradient(objective, w, it.eta, theta, nu);
    it.grad_w_norm = std::sqrt(norm2(g.grad_w));
    it.grad_eta = g.grad_eta;
    it.grad_norm = g.norm();
    it.w = w;
    if (t == rounds) {
      out.trace.push_back(std::move(it));
      break;
    }
    it.epsilon = schedule.at(t);
    auto step = solve_wstep(objective, w, it.eta, theta, nu, it.epsilon, options, t);
    it.wstep_iters = step.iters;
    it.wstep_bound = step.bound;
    w = std::move(step.w);
    out.trace.push_back(std::move(it));
  }
  out.w = std::move(w);
  return out;
}

}  // namespace superfed
