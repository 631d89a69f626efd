#include <doctest.h>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "invlab/analysis.hpp"
#include "support.hpp"

using namespace invlab;
using invlab::test::vec;

TEST_CASE("reconstruction distance") {
  CHECK(recon_l2(vec({1, 2}), vec({1, 2})) == 0.0);
  CHECK(recon_l2(vec({0, 0}), vec({3, 4})) == 5.0);
  CHECK_THROWS_AS(recon_l2(vec({0, 0}), vec({3, 4, 5})), std::invalid_argument);
  PointBatch a(2, 2), b(2, 2);
  a << 0, 1, 0, 1;
  b << 3, 1, 4, 1;
  const Eigen::VectorXd d = recon_l2(a, b);
  CHECK(d[0] == 5.0);
  CHECK(d[1] == 0.0);
}

TEST_CASE("latent cloud of true prior draws") {
  Rng rng(17);
  const PointBatch z = sample_standard_normal_batch(rng, 2, 100000);
  const LatentCloudStats s = latent_cloud_stats(z);
  CHECK(s.cov_trace >= 1.96);
  CHECK(s.cov_trace <= 2.04);
  CHECK(s.cov_deviation < 0.03);
  CHECK(s.mean_nll >= 2.80);
  CHECK(s.mean_nll <= 2.88);
  CHECK(1.0 + std::log(2.0 * std::numbers::pi) == doctest::Approx(2.8379).epsilon(1e-4));

  const LatentCloudStats wide = latent_cloud_stats(PointBatch(2.0 * z));
  CHECK(wide.cov_trace == doctest::Approx(4.0 * s.cov_trace).epsilon(1e-12));
  CHECK(wide.cov_trace == doctest::Approx(8.0).epsilon(0.02));
}

TEST_CASE("latent cloud of identical points") {
  const std::vector<Vector> same(10, vec({3, 4}));
  const LatentCloudStats s = latent_cloud_stats(same);
  CHECK(s.cov_trace == 0.0);
  CHECK(s.mean_norm == doctest::Approx(5.0));
  CHECK(s.mean_nll == doctest::Approx(standard_normal_nll(vec({3, 4}))));
  CHECK_THROWS_AS(latent_cloud_stats(std::vector<Vector>{vec({1, 1})}), std::invalid_argument);
}

TEST_CASE("edit success rate") {
  const GmmSpec spec = GmmSpec::toy_default();
  const std::vector<Vector> at_target(7, spec.center_of(4));
  CHECK(edit_success_rate(at_target, 4, spec) == 1.0);
  const std::vector<Vector> elsewhere(7, spec.center_of(2));
  CHECK(edit_success_rate(elsewhere, 4, spec) == 0.0);
  CHECK_THROWS_AS(edit_success_rate(std::vector<Vector>{}, 4, spec), std::invalid_argument);
  CHECK_THROWS_AS(edit_success_rate(at_target, 4, spec, 0.0), std::invalid_argument);

  // A lone component: only the 3-sigma disc matters, mass 1 - exp(-4.5) = 0.9889.
  GmmSpec lone;
  lone.centers = {vec({5, 10})};
  lone.class_ids = {4};
  Rng rng(3);
  std::vector<Vector> drawn;
  for (const auto& p : sample_component(lone, 4, rng, 1000)) drawn.push_back(p.x);
  CHECK(edit_success_rate(drawn, 4, lone) >= 0.98);

  // Class 4 of the toy mixture has neighbours 2.5 sigma away on both sides, so
  // the disc is clipped to |dx| < 2.5: mass 0.981428 (numerical quadrature).
  const double p = 0.981428;
  const int n = 4000;
  drawn.clear();
  for (const auto& pt : sample_component(spec, 4, rng, n)) drawn.push_back(pt.x);
  CHECK(std::abs(edit_success_rate(drawn, 4, spec) - p) < 4.0 * std::sqrt(p * (1 - p) / n));

  // Far along the target's own axis: right cluster, outside the radius.
  CHECK(edit_success_rate(std::vector<Vector>{spec.center_of(4) + vec({0, 3.5})}, 4, spec) == 0.0);
}

TEST_CASE("edit success ignores how the other components are labelled") {
  const GmmSpec spec = GmmSpec::toy_default();
  GmmSpec relabeled = spec;
  relabeled.class_ids = {9, 7, 8, 4, 6};
  Rng rng(12);
  std::vector<Vector> pts;
  for (const auto& p : sample_posterior(spec, rng, 500)) pts.push_back(p.x);
  CHECK(edit_success_rate(pts, 4, spec) == edit_success_rate(pts, 4, relabeled));
}

TEST_CASE("trajectory offsets") {
  Trajectory inv;
  for (int k = 0; k <= 4; ++k) {
    inv.times.push_back(k / 4.0);
    inv.states.push_back(vec({double(k), 1.0}));
  }
  Trajectory den;
  den.times.assign(inv.times.rbegin(), inv.times.rend());
  den.states.assign(inv.states.rbegin(), inv.states.rend());
  for (double o : trajectory_offsets(inv, den)) CHECK(o == 0.0);

  den.states[0] += vec({0, 2});  // time 1.0
  const auto offsets = trajectory_offsets(inv, den);
  REQUIRE(offsets.size() == 5);
  CHECK(offsets.back() == 2.0);
  CHECK(offsets.front() == 0.0);

  Trajectory shifted = den;
  shifted.times[1] = 0.7;
  CHECK_THROWS_AS(trajectory_offsets(inv, shifted), std::invalid_argument);
  Trajectory shorter = den;
  shorter.times.pop_back();
  shorter.states.pop_back();
  CHECK_THROWS_AS(trajectory_offsets(inv, shorter), std::invalid_argument);
}

TEST_CASE("out of distribution flag") {
  const GmmSpec spec = GmmSpec::toy_default();
  CHECK_FALSE(is_out_of_distribution(vec({0, 10}), spec));
  CHECK_FALSE(is_out_of_distribution(vec({0, 19.5}), spec));
  CHECK(is_out_of_distribution(vec({0, -5}), spec));
}

TEST_CASE("report aggregates match the per-point records") {
  MetricsReport r;
  r.label = "x";
  r.l2 = {0.5, 0.1, 0.3, 0.9};
  r.latent_nll = {2.0, 3.0, 4.0, 5.0};
  r.latents = {vec({0, 0}), vec({1, 0}), vec({0, 1}), vec({1, 1})};
  r.edit_success = {1, 0, 1, 1};
  r.edited_cluster = {4, 3, 4, 4};
  r.offsets = {{0.1, 0.4}, {0.2, 0.3}};
  r.out_of_distribution = {0, 0, 1, 0};
  CHECK(r.mean_l2() == doctest::Approx(0.45));
  CHECK(r.median_l2() == doctest::Approx(0.4));
  CHECK(r.mean_nll() == doctest::Approx(3.5));
  CHECK(*r.edit_success_rate() == 0.75);
  CHECK(r.max_offset() == 0.4);

  const nlohmann::json j = r;
  CHECK(j["points"] == 4);
  CHECK(j["out_of_distribution"] == 1);
  double l2 = 0.0, nll = 0.0;
  int hits = 0;
  for (const auto& p : j["per_point"]) {
    l2 += p["l2"].get<double>();
    nll += p["latent_nll"].get<double>();
    hits += p["edit_success"].get<bool>();
  }
  CHECK(j["mean_l2"].get<double>() == doctest::Approx(l2 / 4));
  CHECK(j["mean_latent_nll"].get<double>() == doctest::Approx(nll / 4));
  CHECK(j["edit_success_rate"].get<double>() == doctest::Approx(hits / 4.0));
  CHECK(j["latent_cov_trace"].get<double>() == doctest::Approx(r.cloud().cov_trace));
}
