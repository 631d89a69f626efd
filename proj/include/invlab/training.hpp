#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "invlab/dataset.hpp"
#include "invlab/network.hpp"

namespace invlab {

struct TrainConfig {
  Objective objective = Objective::FlowMatching;
  std::size_t batch_size = 256;
  std::size_t steps = 20000;
  double lr = 1e-3;
  // Condition dropout: null, class label, or the tight branch anchored at the
  // clean training point itself.
  double p_null = 0.5;
  double p_class = 0.25;
  double p_tight = 0.25;
  // Tight scale drawn uniformly from this range per example.
  double tight_scale_min = 0.2;
  double tight_scale_max = 1.0;
  std::size_t train_size = 50000;
  std::uint64_t seed = 0;
  // Architecture.
  std::size_t embed_dim = 16;
  std::vector<std::size_t> hidden = {128, 128};
  // Diffusion schedule (epsilon objective only).
  int diffusion_steps = 100;
  double beta_min = 1e-3;
  double beta_max = 0.2;

  // Throws ConfigError on bad probabilities or sizes.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Starts from the defaults for the objective; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

ModelMeta make_meta(const TrainConfig& config, const GmmSpec& dataset);

// Which kind of condition a training example gets. Draws one uniform.
enum class DropoutChoice { Null, Class, Tight };
DropoutChoice sample_dropout(const TrainConfig& config, Rng& rng);

// Draws one batch of regression pairs from the training set.
std::vector<TrainingPair> sample_training_batch(const TrainConfig& config, const ModelMeta& meta,
                                                const std::vector<LabeledPoint>& train_set, Rng& rng);

struct LossRecord {
  std::size_t step;
  double loss;  // mean over the logging window
};

struct TrainResult {
  MlpModel model;
  AdamState optimizer;
  double initial_loss = 0.0;  // loss on the first batch before any update
  double final_loss = 0.0;    // mean loss over the last logging window
  std::vector<LossRecord> history;
};

// Full training run. `progress` (optional) is called after each logging window.
TrainResult train_model(const TrainConfig& config, const GmmSpec& dataset,
                        const std::function<void(const LossRecord&)>& progress = {});

}  // namespace invlab
