#include <doctest.h>

#include <cmath>
#include <set>

#include "invlab/error.hpp"
#include "invlab/inversion.hpp"
#include "support.hpp"

using namespace invlab;
using invlab::test::constant_model;
using invlab::test::vec;

namespace {

// Smooth condition- and time-dependent noise predictor.
test::FnModel wavy_eps() {
  return test::FnModel(Objective::EpsilonPrediction, 2, [](const Vector& x, double t, const Condition& c) {
    Vector out = 0.3 * x * (1.0 + t);
    out[0] += 0.1 * std::sin(x[1]) + 0.05 * c.class_id();
    if (c.tight_branch()) out += c.tight_branch()->scale * 0.2 * (x - c.tight_branch()->anchor);
    return out;
  });
}

PointBatch random_points(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  return 2.0 * sample_standard_normal_batch(rng, 2, n);
}

}  // namespace

TEST_CASE("ddim inversion, single step scalar") {
  const NoiseSchedule s({0.1, 1.0 - 0.8 / 0.9});
  const auto model = constant_model(Objective::EpsilonPrediction, vec({0.5}));
  InversionSettings st;
  st.timesteps = {0, 1, 2};
  const PointBatch z1 = PointBatch::Constant(1, 1, 1.0);
  // Only the last step matters for the oracle: start the jump from abar = 0.9.
  const double expect = s.A(2) * 1.0 - s.B(2) * 0.5;
  CHECK(expect == doctest::Approx(1.0173446).epsilon(1e-7));
  CHECK(ddim_invert_step(vec({1.0}), vec({0.5}), 2, 1, s)[0] == doctest::Approx(expect).epsilon(1e-14));
  const BatchInversion inv = ddim_invert(model, z1, std::vector<Condition>{Condition::null()}, s, st);
  CHECK(inv.trajectory.size() == 3);
  CHECK(inv.trajectory.states[2](0, 0) == doctest::Approx(s.A(2) * inv.trajectory.states[1](0, 0) - s.B(2) * 0.5));
}

TEST_CASE("ddim inversion with zero noise estimate contracts by sqrt(abar_T)") {
  const NoiseSchedule s = linear_beta_schedule(100, 1e-3, 0.2);
  const auto model = constant_model(Objective::EpsilonPrediction, vec({0, 0}));
  const PointBatch x = random_points(1, 20);
  const BatchInversion inv = ddim_invert(model, x, std::vector<Condition>{Condition::null()}, s);
  CHECK((inv.terminal - std::sqrt(s.alpha_bar(100)) * x).norm() < 1e-12);
  CHECK(inv.trajectory.size() == 101);
  CHECK(inv.trajectory.states.front() == x);
}

TEST_CASE("ddim inversion then sampling round-trips a constant predictor exactly") {
  const NoiseSchedule s = linear_beta_schedule(50, 1e-3, 0.2);
  const auto model = constant_model(Objective::EpsilonPrediction, vec({0.4, -0.7}));
  const PointBatch x = random_points(2, 16);
  const std::vector<Condition> c{Condition::of_class(2)};
  const BatchInversion inv = ddim_invert(model, x, c, s);
  CHECK((denoise_from(model, inv, c, &s, {}) - x).norm() < 1e-10);
}

TEST_CASE("renoise with zero iterations is ddim inversion") {
  const NoiseSchedule s = linear_beta_schedule(40, 1e-3, 0.2);
  const auto model = wavy_eps();
  const PointBatch x = random_points(3, 32);
  const std::vector<Condition> c{Condition::of_class(4)};
  InversionSettings st;
  st.renoise_iterations = 0;
  const BatchInversion a = ddim_invert(model, x, c, s, st);
  const BatchInversion b = renoise_invert(model, x, c, s, st);
  CHECK(a.terminal == b.terminal);
  REQUIRE(a.trajectory.size() == b.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) CHECK(a.trajectory.states[i] == b.trajectory.states[i]);
}

TEST_CASE("renoise converges to the affine fixed point") {
  // eps(z) = 0.1 z makes each implicit step linear:
  // z = A z_prev - 0.1 B z  =>  z = A z_prev / (1 + 0.1 B).
  const NoiseSchedule s = linear_beta_schedule(30, 1e-3, 0.2);
  const test::FnModel model(Objective::EpsilonPrediction, 2,
                            [](const Vector& x, double, const Condition&) { return Vector(0.1 * x); });
  const Vector x0 = vec({1.7, -0.4});
  InversionSettings st;
  st.renoise_iterations = 8;
  const BatchInversion inv = renoise_invert(model, x0, std::vector<Condition>{Condition::null()}, s, st);
  Vector z = x0;
  for (int t = 1; t <= 30; ++t) {
    z = s.A(t) * z / (1.0 + 0.1 * s.B(t));
    CHECK((inv.trajectory.states[static_cast<std::size_t>(t)].col(0) - z).norm() < 1e-8);
  }
  CHECK(inv.residuals.size() == 30 * 8);
  CHECK(inv.residuals.back()[0] < inv.residuals[30 * 8 - 8][0]);
}

TEST_CASE("renoise averaging and invalid K") {
  const NoiseSchedule s = linear_beta_schedule(10, 1e-3, 0.2);
  const auto model = wavy_eps();
  const InversionResult r = renoise_invert(model, vec({0.2, 0.3}), s, Condition::null(), 1.0, 3, true);
  CHECK(r.z_terminal.allFinite());
  CHECK(r.residuals.size() == 30);
  CHECK_THROWS_AS(renoise_invert(model, vec({0.2, 0.3}), s, Condition::null(), 1.0, -1, false), ConfigError);
}

TEST_CASE("edit-friendly maps replay exactly") {
  const NoiseSchedule s = linear_beta_schedule(100, 1e-3, 0.2);
  const auto model = wavy_eps();
  const PointBatch x = random_points(4, 1000);
  const std::vector<Condition> c{Condition::of_class(3)};
  Rng rng(77);
  const NoiseMapSet maps = editfriendly_invert(model, x, c, s, rng);
  CHECK(maps.maps.size() == 100);
  const PointBatch back = ddpm_replay(model, maps, c, s, 1.0);
  CHECK((back - x).colwise().norm().maxCoeff() < 1e-6);

  Rng again(77);
  const NoiseMapSet twin = editfriendly_invert(model, x, c, s, again);
  CHECK(twin.x_T == maps.x_T);
  for (std::size_t i = 0; i < maps.maps.size(); ++i) CHECK(twin.maps[i] == maps.maps[i]);

  // Swapping to the source condition is replay itself.
  CHECK(edit_by_condition_swap(model, maps, c, Sampler::Ddpm, s) == back);
  CHECK_THROWS_AS(edit_by_condition_swap(model, maps, c, Sampler::Ddim, s), Error);
}

TEST_CASE("edit-friendly map variance under the oracle noise predictor") {
  // With x0 = 0 the true noise of x_t is x_t / sqrt(1 - abar_t). Since x_t and
  // x_{t-1} are drawn independently, each map coordinate has variance
  // (1 + alpha_t - 2 abar_t) / beta_t rather than 1.
  const NoiseSchedule s = linear_beta_schedule(20, 1e-3, 0.2);
  const int T = s.steps();
  const test::FnModel oracle(Objective::EpsilonPrediction, 2, [&](const Vector& x, double time, const Condition&) {
    const int t = static_cast<int>(std::lround(time * T));
    return Vector(x / std::sqrt(1.0 - s.alpha_bar(t)));
  });
  const PointBatch x0 = PointBatch::Zero(2, 1000);
  Rng rng(5);
  const NoiseMapSet maps = editfriendly_invert(oracle, x0, std::vector<Condition>{Condition::null()}, s, rng);
  for (int t = 2; t <= T; ++t) {
    const PointBatch& z = maps.map_for_step(t);
    const double mean = z.mean();
    const double var = (z.array() - mean).square().sum() / static_cast<double>(z.size() - 1);
    const double expect = (1.0 + s.alpha(t) - 2.0 * s.alpha_bar(t)) / s.beta(t);
    CAPTURE(t);
    CHECK(var / expect > 0.8);
    CHECK(var / expect < 1.2);
  }
}

TEST_CASE("tighten") {
  const Condition c = tighten(Condition::of_class(2), vec({1, 2}), 0.4);
  CHECK(c == Condition::tight(vec({1, 2}), 0.4));
  CHECK_THROWS_AS(tighten(Condition::null(), vec({1, 2}), -0.1), ConfigError);
  const PointBatch x = random_points(6, 512);
  const auto all = tighten_all(x, 0.4);
  CHECK(all.size() == 512);
  std::set<std::pair<double, double>> anchors;
  for (const auto& t : all) anchors.emplace(t.tight_branch()->anchor[0], t.tight_branch()->anchor[1]);
  CHECK(anchors.size() == 512);
}

TEST_CASE("edit condition composition") {
  const Condition inv = Condition::tight(vec({1, 2}), 0.3);
  const Condition keep = compose_edit_condition(inv, Condition::of_class(4), EditPolicy::KeepTight);
  CHECK(keep.kind() == Condition::Kind::ClassTight);
  CHECK(keep.class_id() == 4);
  CHECK(keep.tight_branch()->scale == 0.3);
  CHECK(compose_edit_condition(inv, Condition::of_class(4), EditPolicy::TightOffDuringEdit) ==
        Condition::of_class(4));
  CHECK(compose_edit_condition(Condition::null(), Condition::of_class(4), EditPolicy::KeepTight) ==
        Condition::of_class(4));
}

TEST_CASE("condition swap to the source condition is reconstruction") {
  const NoiseSchedule s = linear_beta_schedule(30, 1e-3, 0.2);
  const auto eps = wavy_eps();
  const PointBatch x = random_points(7, 10);
  const std::vector<Condition> c{Condition::of_class(1)};
  const BatchInversion inv = ddim_invert(eps, x, c, s);
  CHECK(edit_by_condition_swap(eps, inv, c, Sampler::Ddim, &s, {}) == denoise_from(eps, inv, c, &s, {}));
  CHECK_THROWS_AS(edit_by_condition_swap(eps, inv, c, Sampler::Flow, &s, {}), Error);
  CHECK_THROWS_AS(edit_by_condition_swap(eps, inv, c, Sampler::Ddpm, &s, {}), Error);

  const auto flow = constant_model(Objective::FlowMatching, vec({0.5, -1}));
  InversionSettings st;
  st.flow_steps = 20;
  const BatchInversion finv = flow_invert(flow, x, c, st);
  CHECK((edit_by_condition_swap(flow, finv, c, Sampler::Flow, nullptr, st) - x).norm() < 1e-12);
  CHECK_THROWS_AS(edit_by_condition_swap(flow, finv, c, Sampler::Ddim, nullptr, st), Error);
}

TEST_CASE("inverters reject the wrong model family") {
  const NoiseSchedule s = linear_beta_schedule(10, 1e-3, 0.2);
  const auto flow = constant_model(Objective::FlowMatching, vec({0, 0}));
  const auto eps = constant_model(Objective::EpsilonPrediction, vec({0, 0}));
  const PointBatch x = random_points(8, 4);
  const std::vector<Condition> c{Condition::null()};
  Rng rng(1);
  CHECK_THROWS_AS(ddim_invert(flow, x, c, s), CheckpointError);
  CHECK_THROWS_AS(renoise_invert(flow, x, c, s, {}), CheckpointError);
  CHECK_THROWS_AS(editfriendly_invert(flow, x, c, s, rng), CheckpointError);
  CHECK_THROWS_AS(flow_invert(eps, x, c), CheckpointError);
}

TEST_CASE("inverters reject a condition count mismatch") {
  const NoiseSchedule s = linear_beta_schedule(10, 1e-3, 0.2);
  const auto eps = constant_model(Objective::EpsilonPrediction, vec({0, 0}));
  const std::vector<Condition> c(3, Condition::null());
  CHECK_THROWS_AS(ddim_invert(eps, random_points(9, 4), c, s), std::invalid_argument);
}

TEST_CASE("method names") {
  for (auto m : {InversionMethod::Ddim, InversionMethod::ReNoise, InversionMethod::EditFriendly, InversionMethod::Flow})
    CHECK(parse_inversion_method(to_string(m)) == m);
  CHECK_THROWS_AS(parse_inversion_method("dddim"), ConfigError);
}
