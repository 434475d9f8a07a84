#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "superfed/fed_algorithms.hpp"

using namespace superfed;
using Catch::Approx;

namespace {

const std::vector<std::array<double, 2>> kMeans{{0.0, 0.0}, {1.5, 1.0}, {4.0, 0.0}};

Population small_logistic(std::size_t devices, std::uint64_t seed) {
  HeteroLogisticSpec spec;
  spec.num_devices = devices;
  spec.n_min = 5;
  spec.n_max = 30;
  spec.dim = 4;
  return gen_hetero_logistic(spec, seed);
}

FederationConfig logistic_cfg() {
  FederationConfig cfg;
  cfg.devices_per_round = 8;
  cfg.batch_size = 4;
  cfg.lr = 0.2;
  cfg.rounds = 10;
  cfg.loss = {LossKind::binary_logistic, 1e-3, 2};
  return cfg;
}

// One-example devices in three dimensions whose squared distance to the
// origin is k + 1.
Population unit_loss_devices() {
  const std::vector<Vector> xs{{1, 0, 0}, {1, 1, 0}, {1, 1, 1}, {2, 0, 0}};
  std::vector<DeviceShard> shards;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    shards.push_back({"d" + std::to_string(k), {{xs[k], 0}}, 0.25});
  }
  return Population(std::move(shards), 1);
}

}  // namespace

TEST_CASE("enum names round trip") {
  for (auto v : {LocalMode::steps, LocalMode::epoch}) CHECK(local_mode_from_string(to_string(v)) == v);
  for (auto v : {EtaProtocol::server_direct, EtaProtocol::secure_mm}) {
    CHECK(eta_protocol_from_string(to_string(v)) == v);
  }
  for (auto v : {FilterMode::server, FilterMode::client}) CHECK(filter_mode_from_string(to_string(v)) == v);
  for (auto v : {Algorithm::fedavg, Algorithm::deltafl, Algorithm::am_meta}) {
    CHECK(algorithm_from_string(to_string(v)) == v);
  }
  CHECK_THROWS_AS(algorithm_from_string("fedprox"), std::invalid_argument);
}

TEST_CASE("config validation") {
  FederationConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.theta = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.lr_decay = 1.5;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.devices_per_round = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("learning rate schedule") {
  FederationConfig cfg;
  cfg.lr = 0.3;
  for (std::size_t t : {0, 1, 17, 500}) CHECK(lr_schedule(cfg, t) == 0.3);
  cfg.lr = 1.0;
  cfg.lr_decay = 0.5;
  cfg.lr_decay_period = 10;
  CHECK(lr_schedule(cfg, 25) == 0.25);
  CHECK(lr_schedule(cfg, 0) == 1.0);
  CHECK(lr_schedule(cfg, 9) == 1.0);
}

TEST_CASE("local update") {
  const auto pop = gen_gaussian_mixture(kMeans, 20, 1);
  const auto& shard = pop.shard(1);
  FederationConfig cfg;
  cfg.loss = {LossKind::squared_distance, 0.05, 2};
  const Vector w{0.3, -0.7};

  SECTION("zero learning rate leaves w unchanged") {
    cfg.lr = 0.0;
    for (auto mode : {LocalMode::steps, LocalMode::epoch}) {
      cfg.local_mode = mode;
      Rng rng(1);
      CHECK(local_update(shard, w, cfg, 0, rng) == w);
    }
  }
  SECTION("one full batch is one gradient step") {
    cfg.lr = 0.1;
    cfg.batch_size = 1000;
    Rng rng(2);
    const auto out = local_update(shard, w, cfg, 0, rng);
    double mx = 0.0, my = 0.0;
    for (const auto& ex : shard.examples) mx += ex.features[0], my += ex.features[1];
    mx /= 20.0, my /= 20.0;
    // grad of mean ||w - x||^2 + (l/2)||w||^2 is 2 (w - mean) + l w
    CHECK(out[0] == Approx(w[0] - 0.1 * (2.0 * (w[0] - mx) + 0.05 * w[0])).margin(1e-12));
    CHECK(out[1] == Approx(w[1] - 0.1 * (2.0 * (w[1] - my) + 0.05 * w[1])).margin(1e-12));
  }
  SECTION("same stream, same result") {
    for (auto mode : {LocalMode::steps, LocalMode::epoch}) {
      cfg.local_mode = mode;
      cfg.batch_size = 3;
      Rng a(9), b(9), c(10);
      const auto x = local_update(shard, w, cfg, 4, a);
      CHECK(x == local_update(shard, w, cfg, 4, b));
      CHECK(x != local_update(shard, w, cfg, 4, c));
    }
  }
}

TEST_CASE("theta = 1 delta-fl round is fedavg") {
  const auto pop = small_logistic(20, 3);
  auto cfg = logistic_cfg();
  cfg.theta = 1.0;
  for (auto mode : {LocalMode::steps, LocalMode::epoch}) {
    cfg.local_mode = mode;
    Aggregator a1, a2;
    ModelParams w1(pop.feature_dim(), 0.0), w2 = w1;
    for (std::size_t t = 0; t < 25; ++t) {
      auto f = fedavg_round(pop, w1, cfg, t, a1);
      auto d = deltafl_round(pop, w2, cfg, t, a2);
      CHECK(f.log.sampled == d.log.sampled);
      CHECK(d.log.filtered == d.log.sampled);
      CHECK(f.w == d.w);
      w1 = f.w;
      w2 = d.w;
    }
  }
}

TEST_CASE("a single sampled device always passes the filter") {
  const auto pop = small_logistic(10, 4);
  auto cfg = logistic_cfg();
  cfg.devices_per_round = 1;
  cfg.theta = 0.1;
  Aggregator agg;
  ModelParams w(pop.feature_dim(), 0.0);
  for (std::size_t t = 0; t < 20; ++t) {
    auto r = deltafl_round(pop, w, cfg, t, agg);
    CHECK(r.log.sampled.size() == 1);
    CHECK(r.log.filtered == r.log.sampled);
    w = r.w;
  }
}

TEST_CASE("delta-fl filters at the sampled quantile") {
  const auto pop = unit_loss_devices();
  FederationConfig cfg;
  cfg.loss = {LossKind::squared_distance, 0.0, 2};
  cfg.theta = 0.5;
  cfg.devices_per_round = 200;  // every device sampled
  for (auto protocol : {EtaProtocol::server_direct, EtaProtocol::secure_mm}) {
    cfg.eta_protocol = protocol;
    Aggregator agg;
    const auto r = deltafl_round(pop, Vector(3, 0.0), cfg, 0, agg);
    REQUIRE(r.log.sampled == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(r.log.sampled_losses == Vector{1, 2, 3, 4});
    if (protocol == EtaProtocol::server_direct) {
      CHECK(*r.log.eta == 2.0);
      CHECK(r.log.filtered == std::vector<std::size_t>{1, 2, 3});
    } else {
      // The MM protocol may settle anywhere in the flat interval [2, 3].
      CHECK(*r.log.eta >= 2.0 - 1e-6);
      CHECK(*r.log.eta <= 3.0 + 1e-6);
    }
  }
}

TEST_CASE("client-side filtering gives the same model") {
  const auto pop = small_logistic(15, 5);
  auto cfg = logistic_cfg();
  cfg.theta = 0.4;
  auto client = cfg;
  client.filter = FilterMode::client;
  Aggregator a1, a2;
  ModelParams w(pop.feature_dim(), 0.0);
  for (std::size_t t = 0; t < 5; ++t) {
    const auto s = deltafl_round(pop, w, cfg, t, a1);
    const auto c = deltafl_round(pop, w, client, t, a2);
    CHECK(s.log.filtered == c.log.filtered);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(c.w[i] == Approx(s.w[i]).margin(1e-14));
    w = s.w;
  }
}

TEST_CASE("filter soundness") {
  const auto pop = small_logistic(30, 6);
  for (double theta : {0.1, 0.5, 0.8}) {
    auto cfg = logistic_cfg();
    cfg.theta = theta;
    cfg.rounds = 15;
    cfg.eta_period = 3;
    const auto run = run_federated(pop, cfg, Algorithm::deltafl);
    for (const auto& log : run.logs) {
      REQUIRE(log.eta.has_value());
      CHECK(log.eta_refreshed == (log.round % 3 == 0));
      double min_kept = INFINITY;
      for (auto k : log.filtered) {
        CHECK(std::binary_search(log.sampled.begin(), log.sampled.end(), k));
        const auto pos = std::lower_bound(log.sampled.begin(), log.sampled.end(), k) - log.sampled.begin();
        min_kept = std::min(min_kept, log.sampled_losses[pos]);
      }
      const bool fallback = log.filtered.size() == 1 &&
                            min_kept == *std::max_element(log.sampled_losses.begin(), log.sampled_losses.end());
      CHECK((min_kept >= *log.eta - 1e-12 || fallback));
    }
  }
}

TEST_CASE("fedavg round examples") {
  SECTION("single device population is local SGD on that device") {
    const auto pop = gen_gaussian_mixture({{1.0, 2.0}, {3.0, 3.0}}, 30, 7);
    const Population one({pop.shard(0)}, 1);
    FederationConfig cfg;
    cfg.loss = {LossKind::squared_distance, 0.0, 2};
    cfg.local_mode = LocalMode::steps;
    cfg.local_steps = 7;
    cfg.seed = 12;
    Aggregator agg;
    const Vector w{0.5, 0.5};
    const auto r = fedavg_round(one, w, cfg, 3, agg);
    Rng rng(derive_seed(cfg.seed, {stream::kLocal, 3, 0}));
    CHECK(r.w == local_update(one.shard(0), w, cfg, 3, rng));
  }
  SECTION("identical shards average to the single-shard step") {
    const auto base = gen_gaussian_mixture({{1.0, 2.0}, {3.0, 3.0}}, 25, 8);
    std::vector<DeviceShard> copies;
    for (int k = 0; k < 6; ++k) copies.push_back({"c" + std::to_string(k), base.shard(0).examples, 1.0});
    const auto pop = weights_by_count(copies);
    FederationConfig cfg;
    cfg.loss = {LossKind::squared_distance, 0.0, 2};
    cfg.batch_size = 100;
    cfg.devices_per_round = 4;
    Aggregator agg;
    const Vector w{-1.0, 0.25};
    const auto r = fedavg_round(pop, w, cfg, 0, agg);
    Rng rng(0);
    const auto single = local_update(pop.shard(0), w, cfg, 0, rng);
    for (std::size_t i = 0; i < 2; ++i) CHECK(r.w[i] == Approx(single[i]).margin(1e-14));
  }
  SECTION("zero learning rate keeps w and still logs the sample") {
    const auto pop = small_logistic(8, 9);
    auto cfg = logistic_cfg();
    cfg.lr = 0.0;
    Aggregator agg;
    const ModelParams w(pop.feature_dim(), 0.5);
    const auto r = fedavg_round(pop, w, cfg, 2, agg);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(r.w[i] == Approx(w[i]).margin(1e-15));
    CHECK_FALSE(r.log.sampled.empty());
  }
}

TEST_CASE("run federated") {
  const auto pop = small_logistic(12, 10);
  auto cfg = logistic_cfg();
  SECTION("zero rounds") {
    cfg.rounds = 0;
    const auto r = run_federated(pop, cfg, Algorithm::deltafl);
    CHECK(r.logs.empty());
    CHECK(r.w == ModelParams(pop.feature_dim(), 0.0));
    CHECK(r.snapshots.size() == 1);
  }
  SECTION("deterministic for both algorithms and aggregation modes") {
    for (auto algo : {Algorithm::fedavg, Algorithm::deltafl}) {
      for (auto mode : {AggregationMode::plain, AggregationMode::masked}) {
        cfg.aggregation = mode;
        const auto a = run_federated(pop, cfg, algo, &pop);
        const auto b = run_federated(pop, cfg, algo, &pop);
        CHECK(a.w == b.w);
        REQUIRE(a.logs.size() == b.logs.size());
        for (std::size_t i = 0; i < a.logs.size(); ++i) {
          CHECK(a.logs[i].to_json().dump() == b.logs[i].to_json().dump());
        }
      }
    }
  }
  SECTION("masked aggregation tracks plain aggregation") {
    auto masked = cfg;
    masked.aggregation = AggregationMode::masked;
    const auto a = run_federated(pop, cfg, Algorithm::deltafl);
    const auto b = run_federated(pop, masked, Algorithm::deltafl);
    for (std::size_t i = 0; i < a.w.size(); ++i) CHECK(b.w[i] == Approx(a.w[i]).margin(1e-9));
  }
  SECTION("snapshot cadence") {
    cfg.rounds = 10;
    cfg.eval_period = 4;
    const auto r = run_federated(pop, cfg, Algorithm::fedavg, &pop);
    REQUIRE(r.snapshots.size() == 3);
    CHECK(r.snapshots[0].round == 4);
    CHECK(r.snapshots[1].round == 8);
    CHECK(r.snapshots[2].round == 10);
    CHECK(r.snapshots[2].test.has_value());
  }
  SECTION("am_meta is not a round-based algorithm") {
    CHECK_THROWS_AS(run_federated(pop, cfg, Algorithm::am_meta), std::invalid_argument);
  }
}

TEST_CASE("vanilla federated averaging reaches the centroid") {
  const auto pop = fixtures::antithetic_gaussians(kMeans, 500, 3);
  FederationConfig cfg;
  cfg.theta = 1.0;
  cfg.loss = {LossKind::squared_distance, 0.0, 2};
  cfg.batch_size = 100000;  // full batch
  cfg.lr = 0.05;
  cfg.devices_per_round = 100;
  cfg.rounds = 200;
  const auto r = run_federated(pop, cfg, Algorithm::deltafl);
  REQUIRE(r.logs.back().sampled.size() == 3);
  const double cx = (kMeans[0][0] + kMeans[1][0] + kMeans[2][0]) / 3.0;
  const double cy = (kMeans[0][1] + kMeans[1][1] + kMeans[2][1]) / 3.0;
  CHECK(std::hypot(r.w[0] - cx, r.w[1] - cy) <= 1e-3);
}

TEST_CASE("inexactness schedules") {
  const auto p = InexactnessSchedule::polynomial(0.1, 1.5);
  CHECK(p.at(0) == Approx(0.1));
  CHECK(p.at(3) == Approx(0.1 / 8.0));
  CHECK(p.summable());
  CHECK_FALSE(InexactnessSchedule::polynomial(0.1, 1.0).summable());
  const auto g = InexactnessSchedule::geometric(1.0, 0.5);
  CHECK(g.at(3) == 0.125);
  CHECK(g.summable());
  CHECK_FALSE(InexactnessSchedule::geometric(1.0, 1.0).summable());
  CHECK_THROWS(InexactnessSchedule::polynomial(0.0, 2.0));
}

TEST_CASE("smoothed full gradient examples") {
  const auto obj = fixtures::random_quadratics(1, 4, 3);
  const Vector w{0.1, -0.2, 0.3};
  const auto losses = obj.losses(w);
  const double lo = *std::min_element(losses.begin(), losses.end());
  const double hi = *std::max_element(losses.begin(), losses.end());
  const ConformityLevel theta(0.25);
  const SmoothingParam nu(0.5);
  const auto above = smoothed_full_gradient(obj, w, hi + 1.0, theta, nu);
  CHECK(oracle::norm(above.grad_w) == 0.0);
  CHECK(above.grad_eta == 1.0);
  const auto below = smoothed_full_gradient(obj, w, lo - 1.0, theta, nu);
  CHECK(below.grad_eta == Approx(1.0 - 1.0 / 0.25));
}

TEST_CASE("smoothed full gradient matches finite differences") {
  std::mt19937_64 g(14);
  const auto pop = small_logistic(6, 11);
  const LossSpec spec{LossKind::binary_logistic, 0.01, 2};
  const EmpiricalObjective emp(pop, spec);
  const auto quad = fixtures::random_quadratics(2, 5, 4);
  for (const DeviceObjective* obj : {static_cast<const DeviceObjective*>(&emp),
                                     static_cast<const DeviceObjective*>(&quad)}) {
    for (int rep = 0; rep < 50; ++rep) {
      const auto w = oracle::random_vec(g, obj->dim(), -1.0, 1.0);
      const auto losses = obj->losses(w);
      const double eta = losses[rep % losses.size()] - 0.05;
      const ConformityLevel theta(rep % 2 ? 0.3 : 0.7);
      const SmoothingParam nu(0.1);
      const auto grad = smoothed_full_gradient(*obj, w, eta, theta, nu);
      Vector full = w;
      full.push_back(eta);
      auto f = [&](const Vector& z) {
        return smoothed_value(*obj, std::span<const double>(z.data(), z.size() - 1), z.back(), theta, nu);
      };
      Vector analytic = grad.grad_w;
      analytic.push_back(grad.grad_eta);
      CHECK(oracle::rel_err(analytic, oracle::central_difference(f, full)) <= 1e-5);
    }
  }
}

TEST_CASE("am_meta with one device stops after one exact w-step") {
  // F(w) = 0.5 (w - c)' A (w - c) + s with F(w0) - F* = 0.04 < theta * nu, so
  // the first w-step lands on argmin F.
  std::vector<QuadraticDevice> dev{{{{2.0, 0.5}, {0.5, 1.0}}, {1.0, -1.0}, 0.3, 1.0}};
  const QuadraticObjective obj(dev);
  const ConformityLevel theta(0.5);
  const SmoothingParam nu(1.0);
  ModelParams w0{1.2, -1.0};
  REQUIRE(obj.loss(0, w0) - 0.3 < theta.value() * nu.value());
  WStepOptions opts;
  opts.gradient_tolerance = 1e-12;
  const auto r = am_meta(obj, theta, nu, InexactnessSchedule::polynomial(1e-3, 1.5), w0, 1, opts);
  REQUIRE(r.trace.size() == 2);
  CHECK(r.trace[1].grad_norm <= 1e-10);
  CHECK(r.w[0] == Approx(1.0).margin(1e-10));
  CHECK(r.w[1] == Approx(-1.0).margin(1e-10));
}

TEST_CASE("am_meta on the three-gaussian population") {
  std::vector<Vector> means;
  for (const auto& m : kMeans) means.push_back({m[0], m[1]});
  const auto obj = gaussian_population_objective(means);
  CHECK(obj.loss(0, Vector{0.0, 0.0}) == Approx(2.0));
  const auto sched = InexactnessSchedule::polynomial(0.1, 1.5);
  const auto vanilla = am_meta(obj, ConformityLevel(1.0), SmoothingParam(1e-3), sched, {0, 0}, 50);
  CHECK(std::hypot(vanilla.w[0] - 5.5 / 3.0, vanilla.w[1] - 1.0 / 3.0) <= 1e-3);
  const auto tail = am_meta(obj, ConformityLevel(2.0 / 3.0), SmoothingParam(1e-3), sched, {0, 0}, 200);
  CHECK(std::hypot(tail.w[0] - 2.0, tail.w[1] - 0.0) <= 1e-2);
}

TEST_CASE("am_meta invariants on random quadratics") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto obj = fixtures::random_quadratics(seed, 5, 6);
    const ConformityLevel theta(seed == 2 ? 0.2 : 0.5);
    const SmoothingParam nu(0.1);
    const auto sched = InexactnessSchedule::polynomial(0.1, 1.5);
    const auto r = am_meta(obj, theta, nu, sched, ModelParams(6, 0.0), 60);
    REQUIRE(r.trace.size() == 61);
    for (std::size_t t = 0; t < r.trace.size(); ++t) {
      const auto& it = r.trace[t];
      CHECK(std::abs(it.grad_eta) <= 1e-10);
      const auto wv = obj.weighted_losses(it.w);
      const double gap = smoothed_objective(wv, theta, nu, it.eta) - dual_objective(wv, theta, it.eta);
      CHECK(gap >= -1e-12);
      CHECK(gap <= nu.value() / (2 * theta.value()) + 1e-12);
      if (t + 1 < r.trace.size()) CHECK(r.trace[t + 1].value <= it.value + it.epsilon);
    }
    CHECK(r.trace.back().grad_norm < r.trace.front().grad_norm);
  }
}
