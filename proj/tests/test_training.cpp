#include <doctest.h>

#include <nlohmann/json.hpp>

#include "invlab/error.hpp"
#include "invlab/training.hpp"

using namespace invlab;

TEST_CASE("condition dropout frequencies") {
  const TrainConfig tc;
  Rng rng(123);
  const int n = 100000;
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) ++counts[static_cast<int>(sample_dropout(tc, rng))];
  const double p[3] = {tc.p_null, tc.p_class, tc.p_tight};
  double chi2 = 0.0;
  for (int k = 0; k < 3; ++k) chi2 += (counts[k] - n * p[k]) * (counts[k] - n * p[k]) / (n * p[k]);
  // chi-square, 2 dof, alpha = 0.001
  CHECK(chi2 < 13.816);
}

TEST_CASE("training batches follow the objective") {
  const GmmSpec spec = GmmSpec::toy_default();
  Rng rng(1);
  const auto data = sample_posterior(spec, rng, 500);

  TrainConfig flow;
  flow.batch_size = 64;
  const ModelMeta fm = make_meta(flow, spec);
  for (const auto& p : sample_training_batch(flow, fm, data, rng)) {
    CHECK(p.t >= 0.0);
    CHECK(p.t < 1.0);
    if (const auto& tb = p.cond.tight_branch()) {
      CHECK(tb->scale >= flow.tight_scale_min);
      CHECK(tb->scale <= flow.tight_scale_max);
    }
  }

  TrainConfig eps = flow;
  eps.objective = Objective::EpsilonPrediction;
  const ModelMeta em = make_meta(eps, spec);
  for (const auto& p : sample_training_batch(eps, em, data, rng)) {
    const double steps = p.t * eps.diffusion_steps;
    CHECK(steps == doctest::Approx(std::round(steps)));
    CHECK(p.t <= 1.0);
  }
}

TEST_CASE("tight training examples anchor on the clean point") {
  const GmmSpec spec = GmmSpec::toy_default();
  Rng rng(2);
  const auto data = sample_posterior(spec, rng, 1);
  TrainConfig tc;
  tc.p_null = 0.0;
  tc.p_class = 0.0;
  tc.p_tight = 1.0;
  tc.batch_size = 8;
  const ModelMeta meta = make_meta(tc, spec);
  for (const auto& p : sample_training_batch(tc, meta, data, rng)) {
    REQUIRE(p.cond.tight_branch());
    CHECK(p.cond.tight_branch()->anchor == data[0].x);
  }
}

TEST_CASE("config validation") {
  TrainConfig tc;
  tc.p_null = 0.9;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  TrainConfig zero;
  zero.batch_size = 0;
  CHECK_THROWS_AS(zero.validate(), ConfigError);
  nlohmann::json j = TrainConfig{};
  j["learning_rate_typo"] = 1;
  CHECK_THROWS_AS(j.get<TrainConfig>(), ConfigError);
}

TEST_CASE("short training run lowers the loss and is reproducible") {
  TrainConfig tc;
  tc.steps = 400;
  tc.batch_size = 64;
  tc.hidden = {32, 32};
  tc.train_size = 2000;
  tc.lr = 3e-3;
  const TrainResult a = train_model(tc, GmmSpec::toy_default());
  CHECK(a.final_loss < 0.5 * a.initial_loss);
  CHECK(a.model.params().all_finite());
  const TrainResult b = train_model(tc, GmmSpec::toy_default());
  CHECK(a.final_loss == b.final_loss);
  CHECK(a.model.params().weights[0] == b.model.params().weights[0]);
}
