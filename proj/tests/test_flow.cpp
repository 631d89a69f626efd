#include <doctest.h>

#include <cmath>

#include "invlab/error.hpp"
#include "invlab/flow.hpp"
#include "support.hpp"

using namespace invlab;
using invlab::test::constant_model;
using invlab::test::vec;

TEST_CASE("conditional flow matching pairs") {
  const Vector x0 = vec({0, 0}), x1 = vec({10, 10});
  const CfmPair start = cfm_pair(x0, x1, 0.0);
  CHECK(start.x_t == x0);
  CHECK(start.velocity == x1 - x0);
  const CfmPair end = cfm_pair(x0, x1, 1.0);
  CHECK(end.x_t == x1);
  const CfmPair mid = cfm_pair(x0, x1, 0.3);
  CHECK((mid.x_t - vec({3, 3})).norm() < 1e-14);
  CHECK(mid.velocity == vec({10, 10}));
  CHECK_THROWS(cfm_pair(x0, x1, 1.5));
  CHECK_THROWS(cfm_pair(x0, vec({1, 2, 3}), 0.5));
}

TEST_CASE("grid") {
  const FlowGrid g(4);
  CHECK(g.step_size() == 0.25);
  CHECK(g.time(0) == 0.0);
  CHECK(g.time(4) == 1.0);
  CHECK_THROWS_AS(FlowGrid(0), ConfigError);
}

TEST_CASE("constant field") {
  const auto model = constant_model(Objective::FlowMatching, vec({0, 1}));
  const FlowGrid grid(10);
  const Vector x = vec({-3.5, 2.25});
  const auto [end, traj] = euler_sample(model, x, grid, Condition::null());
  CHECK((end - x - vec({0, 1})).norm() < 1e-14);
  CHECK(traj.size() == 11);
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.times.back() == 1.0);
  const auto [back, inv] = euler_invert(model, end, grid, Condition::null());
  CHECK((back - x).norm() < 1e-14);
  CHECK(inv.size() == 11);
  CHECK(inv.times.front() == 1.0);
  CHECK(inv.times.back() == 0.0);
}

TEST_CASE("linear field decays geometrically") {
  const test::FnModel model(Objective::FlowMatching, 2,
                            [](const Vector& x, double, const Condition&) { return Vector(-x); });
  for (int n : {1, 7, 50}) {
    const FlowGrid grid(n);
    const Vector x = vec({2.0, -0.5});
    const Vector end = euler_sample(model, x, grid, Condition::null()).first;
    CHECK((end - x * std::pow(1.0 - grid.step_size(), n)).norm() < 1e-13);
  }
}

TEST_CASE("euler is first order on a smooth field") {
  // Time-dependent field, compared against a fine-grid reference like the
  // trained-model check does.
  const test::FnModel model(Objective::FlowMatching, 1, [](const Vector& x, double t, const Condition&) {
    return Vector(-x.array() * (1 + t) + std::cos(2 * t));
  });
  const Vector x = vec({1.3});
  const double ref = euler_sample(model, x, FlowGrid(4096), Condition::null()).first[0];
  double prev_err = 0.0;
  for (int n : {16, 32, 64, 128}) {
    const double err = std::abs(euler_sample(model, x, FlowGrid(n), Condition::null()).first[0] - ref);
    if (prev_err > 0.0) CHECK(prev_err / err == doctest::Approx(2.0).epsilon(0.2));
    prev_err = err;
  }
}

TEST_CASE("flow functions reject epsilon models") {
  const auto eps = constant_model(Objective::EpsilonPrediction, vec({0, 1}));
  CHECK_THROWS_AS(euler_sample(eps, vec({0, 0}), FlowGrid(4), Condition::null()), CheckpointError);
  CHECK_THROWS_AS(euler_invert(eps, vec({0, 0}), FlowGrid(4), Condition::null()), CheckpointError);
}
