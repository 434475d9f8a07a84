#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "superfed/data.hpp"
#include "superfed/models.hpp"

using namespace superfed;
using Catch::Approx;

namespace {

const LossSpec kSquared{LossKind::squared_distance, 0.0, 2};
const LossSpec kBinary{LossKind::binary_logistic, 0.0, 2};
const LossSpec kMulti{LossKind::multinomial_logistic, 0.0, 3};

Example random_example(std::mt19937_64& g, std::size_t p, int classes) {
  Example ex{oracle::random_vec(g, p, -2.0, 2.0), 0};
  ex.label = std::uniform_int_distribution<int>(0, classes - 1)(g);
  return ex;
}

DeviceShard random_shard(std::mt19937_64& g, std::size_t n, std::size_t p, int classes) {
  DeviceShard s{"dev", {}, 1.0};
  for (std::size_t i = 0; i < n; ++i) s.examples.push_back(random_example(g, p, classes));
  return s;
}

}  // namespace

TEST_CASE("loss spec parsing and dimensions") {
  CHECK(loss_kind_from_string("binary_logistic") == LossKind::binary_logistic);
  CHECK(to_string(LossKind::multinomial_logistic) == "multinomial_logistic");
  CHECK_THROWS_AS(loss_kind_from_string("hinge"), std::invalid_argument);
  CHECK(kBinary.param_dim(5) == 5);
  CHECK(kMulti.param_dim(5) == 15);
  CHECK(kSquared.param_dim(2) == 2);
  CHECK_THROWS(LossSpec{LossKind::binary_logistic, 0.0, 3}.validate());
  CHECK_THROWS(LossSpec{LossKind::binary_logistic, -1.0, 2}.validate());
}

TEST_CASE("point loss examples") {
  const Example ex{{1.5, -0.5}, 1};
  CHECK(point_loss(kSquared, ex.features, ex) == 0.0);
  const Vector zero2(2, 0.0);
  CHECK(point_loss(kBinary, zero2, ex) == Approx(std::log(2.0)).margin(1e-15));
  CHECK(point_loss(kBinary, zero2, Example{{1.5, -0.5}, 0}) == Approx(std::log(2.0)).margin(1e-15));
  const Vector zero6(6, 0.0);
  for (int y = 0; y < 3; ++y) {
    CHECK(point_loss(kMulti, zero6, Example{{0.3, 7.0}, y}) == Approx(std::log(3.0)).margin(1e-15));
  }
}

TEST_CASE("logistic losses stay finite at extreme margins") {
  const Example ex{{1.0}, 1};
  const Vector big{800.0}, neg{-800.0};
  CHECK(point_loss(kBinary, big, ex) == Approx(0.0).margin(1e-300));
  CHECK(point_loss(kBinary, neg, ex) == Approx(800.0));
  CHECK(std::isfinite(point_grad(kBinary, neg, ex)[0]));
  const Vector w{800.0, -800.0, 0.0};
  const LossSpec m{LossKind::multinomial_logistic, 0.0, 3};
  CHECK(point_loss(m, w, Example{{1.0}, 1}) == Approx(1600.0));
  CHECK(std::isfinite(point_grad(m, w, Example{{1.0}, 1})[0]));
}

TEST_CASE("point gradient examples") {
  const LossSpec reg{LossKind::squared_distance, 0.3, 2};
  const Example ex{{1.5, -0.5}, 0};
  const auto g = point_grad(reg, ex.features, ex);
  CHECK(g[0] == Approx(0.3 * 1.5));
  CHECK(g[1] == Approx(0.3 * -0.5));

  const Example pos{{2.0, -4.0}, 1};
  const auto gb = point_grad(kBinary, Vector(2, 0.0), pos);
  CHECK(gb[0] == Approx(-1.0));
  CHECK(gb[1] == Approx(2.0));
}

TEST_CASE("point gradients match central finite differences") {
  std::mt19937_64 g(7);
  const LossSpec specs[] = {
      kSquared, {LossKind::squared_distance, 0.1, 2}, kBinary, {LossKind::binary_logistic, 0.05, 2},
      kMulti,   {LossKind::multinomial_logistic, 0.2, 4}};
  for (const auto& spec : specs) {
    for (int rep = 0; rep < 100; ++rep) {
      const std::size_t p = 4;
      const auto ex = random_example(g, p, spec.num_classes);
      const auto w = oracle::random_vec(g, spec.param_dim(p), -1.0, 1.0);
      const auto fd = oracle::central_difference(
          [&](const Vector& v) { return point_loss(spec, v, ex); }, w);
      CHECK(oracle::rel_err(point_grad(spec, w, ex), fd) <= 1e-5);
    }
  }
}

TEST_CASE("point losses are convex in the parameters") {
  std::mt19937_64 g(9);
  for (const auto& spec : {kSquared, kBinary, kMulti}) {
    for (int rep = 0; rep < 200; ++rep) {
      const auto ex = random_example(g, 3, spec.num_classes);
      const auto u = oracle::random_vec(g, spec.param_dim(3), -3.0, 3.0);
      const auto v = oracle::random_vec(g, spec.param_dim(3), -3.0, 3.0);
      Vector mid(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) mid[i] = (u[i] + v[i]) / 2;
      CHECK(point_loss(spec, mid, ex) <=
            (point_loss(spec, u, ex) + point_loss(spec, v, ex)) / 2 + 1e-12);
    }
  }
}

TEST_CASE("device loss examples") {
  std::mt19937_64 g(13);
  const auto ex = random_example(g, 3, 2);
  const auto w = oracle::random_vec(g, 3, -1.0, 1.0);
  DeviceShard one{"a", {ex}, 1.0};
  DeviceShard two{"b", {ex, ex}, 1.0};
  CHECK(device_loss(kBinary, w, one) == point_loss(kBinary, w, ex));
  CHECK(device_loss(kBinary, w, two) == Approx(device_loss(kBinary, w, one)).margin(1e-15));
  CHECK_THROWS_AS(device_loss(kBinary, w, DeviceShard{"e", {}, 1.0}), std::invalid_argument);
}

TEST_CASE("device loss and gradient match naive loops") {
  std::mt19937_64 g(19);
  for (const auto& spec : {kSquared, kBinary, kMulti}) {
    for (int rep = 0; rep < 20; ++rep) {
      const auto shard = random_shard(g, 5 + rep, 3, spec.num_classes);
      const auto w = oracle::random_vec(g, spec.param_dim(3), -1.0, 1.0);
      double loss = 0.0;
      Vector grad(w.size(), 0.0);
      for (const auto& ex : shard.examples) {
        loss += point_loss(spec, w, ex);
        const auto pg = point_grad(spec, w, ex);
        for (std::size_t i = 0; i < w.size(); ++i) grad[i] += pg[i];
      }
      const double n = static_cast<double>(shard.size());
      CHECK(device_loss(spec, w, shard) == Approx(loss / n).margin(1e-12));
      const auto dg = device_grad(spec, w, shard);
      for (std::size_t i = 0; i < w.size(); ++i) CHECK(dg[i] == Approx(grad[i] / n).margin(1e-12));

      std::vector<std::size_t> all(shard.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const auto bg = batch_grad(spec, w, shard, all);
      for (std::size_t i = 0; i < w.size(); ++i) CHECK(bg[i] == Approx(dg[i]).margin(1e-12));
    }
  }
}

TEST_CASE("device loss is the size-weighted mean of sub-shards") {
  std::mt19937_64 g(21);
  for (int rep = 0; rep < 20; ++rep) {
    const auto shard = random_shard(g, 12, 3, 3);
    const auto w = oracle::random_vec(g, kMulti.param_dim(3), -1.0, 1.0);
    const std::size_t cut = 1 + rep % 11;
    DeviceShard a{"a", {shard.examples.begin(), shard.examples.begin() + cut}, 1.0};
    DeviceShard b{"b", {shard.examples.begin() + cut, shard.examples.end()}, 1.0};
    const double combined = (cut * device_loss(kMulti, w, a) + (12 - cut) * device_loss(kMulti, w, b)) / 12.0;
    CHECK(device_loss(kMulti, w, shard) == Approx(combined).margin(1e-12));
  }
}

TEST_CASE("device error examples") {
  DeviceShard sep{"s", {{{1.0, 0.0}, 1}, {{-1.0, 0.0}, 0}}, 1.0};
  CHECK(device_error(kBinary, Vector{1.0, 0.0}, sep) == 0.0);
  CHECK(device_error(kBinary, Vector{-1.0, 0.0}, sep) == 1.0);

  DeviceShard labels{"m", {{{1.0}, 0}, {{2.0}, 1}, {{3.0}, 2}, {{4.0}, 2}}, 1.0};
  const LossSpec m{LossKind::multinomial_logistic, 0.0, 3};
  CHECK(device_error(m, Vector(3, 0.0), labels) == 0.75);
  CHECK_THROWS_AS(device_error(kSquared, Vector(1, 0.0), labels), std::invalid_argument);
}

TEST_CASE("device error matches a per-example loop") {
  std::mt19937_64 g(27);
  for (const auto& spec : {kBinary, kMulti}) {
    for (int rep = 0; rep < 20; ++rep) {
      const auto shard = random_shard(g, 9, 4, spec.num_classes);
      const auto w = oracle::random_vec(g, spec.param_dim(4), -1.0, 1.0);
      std::size_t wrong = 0;
      for (const auto& ex : shard.examples) {
        int best = 0;
        if (spec.kind == LossKind::binary_logistic) {
          double m = 0.0;
          for (std::size_t i = 0; i < 4; ++i) m += w[i] * ex.features[i];
          best = m > 0.0 ? 1 : 0;
        } else {
          double top = -INFINITY;
          for (int c = 0; c < spec.num_classes; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < 4; ++i) s += w[c * 4 + i] * ex.features[i];
            if (s > top) top = s, best = c;
          }
        }
        wrong += best != ex.label ? 1 : 0;
      }
      CHECK(device_error(spec, w, shard) == static_cast<double>(wrong) / 9.0);
    }
  }
}

TEST_CASE("prediction ties go to the lowest class index") {
  const LossSpec m{LossKind::multinomial_logistic, 0.0, 3};
  CHECK(predict(m, Vector{0.0, 1.0, 1.0}, Example{{1.0}, 0}) == 1);
  CHECK(predict(m, Vector{2.0, 2.0, 2.0}, Example{{1.0}, 0}) == 0);
}
