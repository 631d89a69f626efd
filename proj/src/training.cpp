#include "invlab/training.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "invlab/diffusion.hpp"
#include "invlab/error.hpp"
#include "invlab/flow.hpp"

namespace invlab {

void TrainConfig::validate() const {
  const double probs[] = {p_null, p_class, p_tight};
  for (double p : probs)
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("train: dropout probabilities must be >= 0");
  if (std::abs(p_null + p_class + p_tight - 1.0) > 1e-9) throw ConfigError("train: dropout probabilities must sum to 1");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (train_size == 0) throw ConfigError("train: train_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (!(tight_scale_min >= 0.0 && tight_scale_min <= tight_scale_max))
    throw ConfigError("train: need 0 <= tight_scale_min <= tight_scale_max");
  if (hidden.empty() || embed_dim == 0) throw ConfigError("train: bad architecture");
  if (objective == Objective::EpsilonPrediction) linear_beta_schedule(diffusion_steps, beta_min, beta_max);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"objective", to_string(c.objective)},
       {"batch_size", c.batch_size},
       {"steps", c.steps},
       {"lr", c.lr},
       {"p_null", c.p_null},
       {"p_class", c.p_class},
       {"p_tight", c.p_tight},
       {"tight_scale_min", c.tight_scale_min},
       {"tight_scale_max", c.tight_scale_max},
       {"train_size", c.train_size},
       {"seed", c.seed},
       {"embed_dim", c.embed_dim},
       {"hidden", c.hidden},
       {"diffusion_steps", c.diffusion_steps},
       {"beta_min", c.beta_min},
       {"beta_max", c.beta_max}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  for (const auto& [key, value] : j.items()) {
    if (key == "objective") c.objective = parse_objective(value.get<std::string>());
    else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "steps") c.steps = value.get<std::size_t>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "p_null") c.p_null = value.get<double>();
    else if (key == "p_class") c.p_class = value.get<double>();
    else if (key == "p_tight") c.p_tight = value.get<double>();
    else if (key == "tight_scale_min") c.tight_scale_min = value.get<double>();
    else if (key == "tight_scale_max") c.tight_scale_max = value.get<double>();
    else if (key == "train_size") c.train_size = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "embed_dim") c.embed_dim = value.get<std::size_t>();
    else if (key == "hidden") c.hidden = value.get<std::vector<std::size_t>>();
    else if (key == "diffusion_steps") c.diffusion_steps = value.get<int>();
    else if (key == "beta_min") c.beta_min = value.get<double>();
    else if (key == "beta_max") c.beta_max = value.get<double>();
    else throw ConfigError("train: unknown key '" + key + "'");
  }
  c.validate();
}

ModelMeta make_meta(const TrainConfig& config, const GmmSpec& dataset) {
  ModelMeta meta;
  meta.dim = dataset.dim();
  meta.embed_dim = config.embed_dim;
  meta.hidden = config.hidden;
  meta.num_classes = dataset.max_class_id();
  meta.objective = config.objective;
  meta.data_stats = DataStats::of(dataset);
  meta.dataset = dataset;
  meta.diffusion_steps = config.diffusion_steps;
  meta.beta_min = config.beta_min;
  meta.beta_max = config.beta_max;
  meta.init_seed = config.seed;
  meta.train_seed = config.seed;
  return meta;
}

DropoutChoice sample_dropout(const TrainConfig& config, Rng& rng) {
  const double u = rng.uniform();
  if (u < config.p_null) return DropoutChoice::Null;
  if (u < config.p_null + config.p_class) return DropoutChoice::Class;
  return DropoutChoice::Tight;
}

std::vector<TrainingPair> sample_training_batch(const TrainConfig& config, const ModelMeta& meta,
                                                const std::vector<LabeledPoint>& train_set, Rng& rng) {
  std::vector<TrainingPair> batch;
  batch.reserve(config.batch_size);
  const bool flow = config.objective == Objective::FlowMatching;
  std::optional<NoiseSchedule> sched;
  if (!flow) sched = linear_beta_schedule(config.diffusion_steps, config.beta_min, config.beta_max);

  for (std::size_t i = 0; i < config.batch_size; ++i) {
    const LabeledPoint& p = train_set[static_cast<std::size_t>(rng.uniform_index(train_set.size()))];
    const Vector noise = sample_standard_normal(rng, meta.dim);
    TrainingPair pair;
    if (flow) {
      pair.t = rng.uniform();
      auto cfm = cfm_pair(noise, p.x, pair.t);
      pair.x = std::move(cfm.x_t);
      pair.target = std::move(cfm.velocity);
    } else {
      // Step 0 is included: DDIM inversion queries the state's own step.
      const int t = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(config.diffusion_steps) + 1));
      pair.t = sched->model_time(t);
      pair.x = forward_marginal(p.x, t, noise, *sched);
      pair.target = noise;
    }
    switch (sample_dropout(config, rng)) {
      case DropoutChoice::Null: pair.cond = Condition::null(); break;
      case DropoutChoice::Class: pair.cond = Condition::of_class(p.class_id); break;
      case DropoutChoice::Tight: {
        const double s = config.tight_scale_min + (config.tight_scale_max - config.tight_scale_min) * rng.uniform();
        pair.cond = Condition::tight(p.x, s);
        break;
      }
    }
    batch.push_back(std::move(pair));
  }
  return batch;
}

TrainResult train_model(const TrainConfig& config, const GmmSpec& dataset,
                        const std::function<void(const LossRecord&)>& progress) {
  config.validate();
  dataset.validate();
  const ModelMeta meta = make_meta(config, dataset);

  Rng data_rng = Rng::stream(config.seed, 0);
  Rng init_rng = Rng::stream(config.seed, 1);
  Rng batch_rng = Rng::stream(config.seed, 2);

  const auto train_set = sample_posterior(dataset, data_rng, config.train_size);
  ModelParams params = ModelParams::init(meta, init_rng);
  AdamState adam = AdamState::for_params(meta);

  TrainResult result{MlpModel(meta, params), adam, 0.0, 0.0, {}};
  constexpr std::size_t kWindow = 200;
  double window_sum = 0.0;
  std::size_t window_n = 0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch = sample_training_batch(config, meta, train_set, batch_rng);
    auto lg = loss_and_grad(meta, params, batch);
    if (step == 0) result.initial_loss = lg.loss;
    adam_step(params, lg.grad, adam, config.lr);
    window_sum += lg.loss;
    ++window_n;
    if (window_n == kWindow || step + 1 == config.steps) {
      LossRecord rec{step + 1, window_sum / static_cast<double>(window_n)};
      result.history.push_back(rec);
      if (progress) progress(rec);
      window_sum = 0.0;
      window_n = 0;
    }
  }
  result.final_loss = result.history.empty() ? result.initial_loss : result.history.back().loss;
  result.model = MlpModel(meta, std::move(params));
  result.optimizer = std::move(adam);
  return result;
}

}  // namespace invlab
