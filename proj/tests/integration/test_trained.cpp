// Properties of the trained toy models. Checkpoints come from the ctest
// fixtures through INVLAB_FLOW_CKPT and INVLAB_DIFFUSION_CKPT.

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>

#include "invlab/error.hpp"
#include "invlab/experiments.hpp"

using namespace invlab;
namespace fs = std::filesystem;

namespace {

fs::path env_path(const char* name) {
  const char* v = std::getenv(name);
  REQUIRE_MESSAGE(v != nullptr, name << " is not set");
  return v;
}

fs::path scratch(const std::string& name) { return fs::temp_directory_path() / "invlab_integration" / name; }

ExperimentConfig flow_config() {
  ExperimentConfig c;
  c.checkpoint = env_path("INVLAB_FLOW_CKPT");
  c.train_if_missing = false;
  c.method.name = InversionMethod::Flow;
  return c;
}

ExperimentConfig diffusion_config() {
  ExperimentConfig c;
  c.checkpoint = env_path("INVLAB_DIFFUSION_CKPT");
  c.train_if_missing = false;
  c.method.name = InversionMethod::Ddim;
  return c;
}

PointBatch to_batch(const std::vector<LabeledPoint>& pts) {
  PointBatch b(2, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) b.col(static_cast<Eigen::Index>(i)) = pts[i].x;
  return b;
}

double round_trip_l2(const LoadedModel& lm, const ExperimentConfig& c, const PointBatch& x0,
                     std::vector<Condition> conds) {
  RoundTripRequest req;
  req.inversion = std::move(conds);
  return recon_l2(run_round_trip(lm, c, x0, req).reconstructions, x0).mean();
}

// chi-square critical values at alpha = 0.001
constexpr double kChi2Dof4 = 18.467;

}  // namespace

TEST_CASE("unconditional flow samples cover the classes uniformly") {
  ExperimentConfig c = flow_config();
  c.out = scratch("uniform");
  c.eval.tight_scale = 0.0;
  for (std::uint64_t seed : {0, 1, 2}) {
    c.seed = seed;
    const BaselineResult r = run_random_noise_baseline(c);
    CAPTURE(seed);
    CHECK(r.unconditional_chi2 < kChi2Dof4);
  }
}

TEST_CASE("flow edit from class 5 to class 4") {
  ExperimentConfig c = flow_config();
  c.eval.source_class = 5;
  const LoadedModel lm = load_or_train(c, Objective::FlowMatching);
  const PointBatch x0 = to_batch(evaluation_points(c, c.seed));
  RoundTripRequest req;
  req.inversion = {Condition::of_class(5)};
  req.edit = {Condition::of_class(4)};
  const RoundTripResult rt = run_round_trip(lm, c, x0, req);
  REQUIRE(rt.edited);
  int hits = 0;
  for (Eigen::Index j = 0; j < rt.edited->cols(); ++j) hits += assign_cluster(rt.edited->col(j), c.dataset) == 4;
  CHECK(hits >= 0.8 * static_cast<double>(rt.edited->cols()));
}

TEST_CASE("flow round trip improves as the grid is refined") {
  ExperimentConfig c = flow_config();
  c.eval.source_class = 5;
  const LoadedModel lm = load_or_train(c, Objective::FlowMatching);
  std::vector<double> err;
  for (int n : {32, 64, 128, 256}) {
    c.method.flow_steps = n;
    double sum = 0.0;
    for (std::uint64_t seed : {0, 1, 2})
      sum += round_trip_l2(lm, c, to_batch(evaluation_points(c, seed)), {Condition::of_class(5)});
    err.push_back(sum / 3.0);
  }
  for (std::size_t i = 1; i < err.size(); ++i) CHECK(err[i] < err[i - 1]);
}

TEST_CASE("euler sampling of the trained flow converges at first order") {
  ExperimentConfig c = flow_config();
  const LoadedModel lm = load_or_train(c, Objective::FlowMatching);
  Rng rng = Rng::stream(5, 0);
  const PointBatch z = sample_standard_normal_batch(rng, 2, 64);
  const std::vector<Condition> conds{Condition::null()};
  const PointBatch ref = euler_sample(lm.model, z, FlowGrid(4096), conds).first;
  double prev = 0.0;
  for (int n : {32, 64, 128, 256}) {
    const double e = (euler_sample(lm.model, z, FlowGrid(n), conds).first - ref).colwise().norm().mean();
    if (prev > 0.0) CHECK(prev / e == doctest::Approx(2.0).epsilon(0.2));
    prev = e;
  }
}

TEST_CASE("trajectory offsets shrink under the correct condition") {
  ExperimentConfig c = flow_config();
  c.out = scratch("fig3");
  c.eval.source_class = 5;
  const Fig3Result r = run_fig3(c);
  CHECK(r.null_condition.max_offset() > r.correct_condition.max_offset());
  CHECK(r.correct_condition.mean_l2() < r.null_condition.mean_l2());
  CHECK(r.wrong_condition.mean_nll() > r.correct_condition.mean_nll());
}

TEST_CASE("tight condition beats the null condition for the diffusion model") {
  ExperimentConfig c = diffusion_config();
  const LoadedModel lm = load_or_train(c, Objective::EpsilonPrediction);
  const PointBatch x0 = to_batch(evaluation_points(c, c.seed));
  CHECK(round_trip_l2(lm, c, x0, tighten_all(x0, 0.7)) < round_trip_l2(lm, c, x0, {Condition::null()}));
}

TEST_CASE("renoise residuals shrink across iterations") {
  ExperimentConfig c = diffusion_config();
  c.method.name = InversionMethod::ReNoise;
  c.method.renoise_iterations = 4;
  const LoadedModel lm = load_or_train(c, Objective::EpsilonPrediction);
  const PointBatch x0 = to_batch(evaluation_points(c, c.seed));
  RoundTripRequest req;
  req.inversion = {Condition::null()};
  const RoundTripResult rt = run_round_trip(lm, c, x0, req);
  const std::size_t K = 4;
  REQUIRE(rt.residuals.size() == 100 * K);
  for (std::size_t step = 0; step < 100; ++step) {
    CAPTURE(step);
    double first = rt.residuals[step * K].mean(), last = rt.residuals[step * K + K - 1].mean();
    CHECK(last <= first);
  }
}

TEST_CASE("a single-jump schedule collapses every condition to a large error") {
  ExperimentConfig c = diffusion_config();
  c.out = scratch("single_jump");
  c.eval.num_seeds = 1;
  c.method.diffusion_steps = 1;
  const Table1Result one = run_table1_analog(c);
  const double lo = std::min({one.null_l2, one.class_l2, one.tight_l2});
  const double hi = std::max({one.null_l2, one.class_l2, one.tight_l2});
  // Errors exceed the component width and stay within a factor of 3.
  CHECK(lo > c.dataset.component_std);
  CHECK(hi < 3.0 * lo);
}

TEST_CASE("edit-friendly inversion round trip on the trained model") {
  ExperimentConfig c = diffusion_config();
  c.method.name = InversionMethod::EditFriendly;
  const LoadedModel lm = load_or_train(c, Objective::EpsilonPrediction);
  const PointBatch x0 = to_batch(evaluation_points(c, c.seed));
  RoundTripRequest req;
  req.inversion = {Condition::null()};
  req.edit = {Condition::of_class(4)};
  const RoundTripResult rt = run_round_trip(lm, c, x0, req);
  CHECK(recon_l2(rt.reconstructions, x0).maxCoeff() < 1e-6);
  REQUIRE(rt.noise_maps);
  CHECK(rt.noise_maps->maps.size() == 100);
}

TEST_CASE("objective mismatch is refused") {
  ExperimentConfig c = diffusion_config();
  c.method.name = InversionMethod::Flow;
  CHECK_THROWS_AS(load_or_train(c, Objective::FlowMatching), CheckpointError);
}
