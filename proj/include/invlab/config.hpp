#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "invlab/dataset.hpp"
#include "invlab/inversion.hpp"
#include "invlab/training.hpp"

namespace invlab {

enum class ExperimentKind { Train, Invert, Reconstruct, Edit, Fig3, Table1, SweepScale, BaselineRandom, Report };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

struct MethodConfig {
  InversionMethod name = InversionMethod::Ddim;
  int renoise_iterations = 4;
  bool renoise_averaging = false;
  int diffusion_steps = 0;  // strided DDIM step count; 0 = every step of the schedule
  int flow_steps = 100;
  double guidance = 1.0;
  TimestepConvention convention = TimestepConvention::Current;
  EditPolicy edit_policy = EditPolicy::KeepTight;
};

struct ConditionConfig {
  ConditionMode mode = ConditionMode::Class;
  std::optional<int> label;  // class mode: fixed label instead of each point's own
  double scale = 0.4;        // tight mode
};

struct EvalConfig {
  std::size_t points = 512;
  std::optional<int> source_class;  // sample held-out points from one component
  int target_class = 4;             // edit target
  std::vector<double> scales = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.7};
  double tight_scale = 0.7;         // tight row of table1 and the random-noise baseline
  double radius = 3.0;              // edit-success radius in component std units
  std::size_t num_seeds = 3;
  std::size_t trajectory_points = 16;  // points whose full trajectories are exported
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Reconstruct;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::filesystem::path checkpoint;  // empty: <out>/model.ckpt
  bool train_if_missing = true;
  std::optional<TrainConfig> train;
  GmmSpec dataset = GmmSpec::toy_default();
  MethodConfig method;
  ConditionConfig condition;
  EvalConfig eval;
  std::optional<std::filesystem::path> input;  // points CSV (x0,x1,...,class_id)
  std::vector<std::filesystem::path> inputs;   // report: directories to summarize

  std::filesystem::path checkpoint_path() const { return checkpoint.empty() ? out / "model.ckpt" : checkpoint; }
  // seed, seed + 1, ... (num_seeds values)
  std::vector<std::uint64_t> seeds() const;
  InversionSettings inversion_settings(const NoiseSchedule* sched) const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
// Unknown keys anywhere raise ConfigError.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace invlab
