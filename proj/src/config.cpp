#include "invlab/config.hpp"

#include <fstream>

#include "invlab/error.hpp"

namespace invlab {

namespace {

struct KindName {
  ExperimentKind kind;
  const char* name;
};

constexpr KindName kKinds[] = {{ExperimentKind::Train, "train"},
                               {ExperimentKind::Invert, "invert"},
                               {ExperimentKind::Reconstruct, "reconstruct"},
                               {ExperimentKind::Edit, "edit"},
                               {ExperimentKind::Fig3, "fig3"},
                               {ExperimentKind::Table1, "table1"},
                               {ExperimentKind::SweepScale, "sweep-scale"},
                               {ExperimentKind::BaselineRandom, "baseline-random"},
                               {ExperimentKind::Report, "report"}};

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string convention_name(TimestepConvention c) { return c == TimestepConvention::Current ? "current" : "target"; }

TimestepConvention parse_convention(const std::string& s) {
  if (s == "current") return TimestepConvention::Current;
  if (s == "target") return TimestepConvention::Target;
  throw ConfigError("unknown timestep convention '" + s + "'");
}

std::string policy_name(EditPolicy p) { return p == EditPolicy::KeepTight ? "keep_tight" : "tight_off"; }

EditPolicy parse_policy(const std::string& s) {
  if (s == "keep_tight") return EditPolicy::KeepTight;
  if (s == "tight_off") return EditPolicy::TightOffDuringEdit;
  throw ConfigError("unknown edit policy '" + s + "'");
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k.name;
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (const auto& k : kKinds)
    if (name == k.name) return k.kind;
  throw ConfigError("unknown experiment kind '" + name + "'");
}

std::vector<std::uint64_t> ExperimentConfig::seeds() const {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < eval.num_seeds; ++i) out.push_back(seed + i);
  return out;
}

InversionSettings ExperimentConfig::inversion_settings(const NoiseSchedule* sched) const {
  InversionSettings s;
  s.guidance = method.guidance;
  s.convention = method.convention;
  s.flow_steps = method.flow_steps;
  s.renoise_iterations = method.name == InversionMethod::ReNoise ? method.renoise_iterations : 0;
  s.renoise_averaging = method.renoise_averaging;
  if (sched && method.diffusion_steps > 0) s.timesteps = strided_timesteps(sched->steps(), method.diffusion_steps);
  return s;
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json::object();
  j["kind"] = to_string(c.kind);
  j["seed"] = c.seed;
  j["out"] = c.out.string();
  j["checkpoint"] = c.checkpoint_path().string();
  j["train_if_missing"] = c.train_if_missing;
  if (c.train) j["train"] = *c.train;
  j["dataset"] = c.dataset;
  j["method"] = {{"name", to_string(c.method.name)},
                 {"renoise_iterations", c.method.renoise_iterations},
                 {"renoise_averaging", c.method.renoise_averaging},
                 {"diffusion_steps", c.method.diffusion_steps},
                 {"flow_steps", c.method.flow_steps},
                 {"guidance", c.method.guidance},
                 {"convention", convention_name(c.method.convention)},
                 {"edit_policy", policy_name(c.method.edit_policy)}};
  j["condition"] = {{"mode", to_string(c.condition.mode)}, {"scale", c.condition.scale}};
  if (c.condition.label) j["condition"]["label"] = *c.condition.label;
  j["eval"] = {{"points", c.eval.points},
               {"target_class", c.eval.target_class},
               {"scales", c.eval.scales},
               {"tight_scale", c.eval.tight_scale},
               {"radius", c.eval.radius},
               {"num_seeds", c.eval.num_seeds},
               {"trajectory_points", c.eval.trajectory_points}};
  if (c.eval.source_class) j["eval"]["source_class"] = *c.eval.source_class;
  if (c.input) j["input"] = c.input->string();
  if (!c.inputs.empty()) {
    std::vector<std::string> v;
    for (const auto& p : c.inputs) v.push_back(p.string());
    j["inputs"] = v;
  }
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  reject_unknown(j,
                 {"kind", "seed", "out", "checkpoint", "train_if_missing", "train", "dataset", "method", "condition",
                  "eval", "input", "inputs"},
                 "config");
  c = ExperimentConfig{};
  try {
    if (j.contains("kind")) c.kind = parse_experiment_kind(j.at("kind").get<std::string>());
    read(j, "seed", c.seed);
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    if (j.contains("checkpoint")) c.checkpoint = j.at("checkpoint").get<std::string>();
    read(j, "train_if_missing", c.train_if_missing);
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<GmmSpec>();

    if (j.contains("method")) {
      const auto& m = j.at("method");
      reject_unknown(m,
                     {"name", "renoise_iterations", "renoise_averaging", "diffusion_steps", "flow_steps", "guidance",
                      "convention", "edit_policy"},
                     "method");
      if (m.contains("name")) c.method.name = parse_inversion_method(m.at("name").get<std::string>());
      read(m, "renoise_iterations", c.method.renoise_iterations);
      read(m, "renoise_averaging", c.method.renoise_averaging);
      read(m, "diffusion_steps", c.method.diffusion_steps);
      read(m, "flow_steps", c.method.flow_steps);
      read(m, "guidance", c.method.guidance);
      if (m.contains("convention")) c.method.convention = parse_convention(m.at("convention").get<std::string>());
      if (m.contains("edit_policy")) c.method.edit_policy = parse_policy(m.at("edit_policy").get<std::string>());
    }
    if (j.contains("condition")) {
      const auto& cc = j.at("condition");
      reject_unknown(cc, {"mode", "label", "scale"}, "condition");
      if (cc.contains("mode")) c.condition.mode = parse_condition_mode(cc.at("mode").get<std::string>());
      if (cc.contains("label")) c.condition.label = cc.at("label").get<int>();
      read(cc, "scale", c.condition.scale);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      reject_unknown(e,
                     {"points", "source_class", "target_class", "scales", "tight_scale", "radius", "num_seeds",
                      "trajectory_points"},
                     "eval");
      read(e, "points", c.eval.points);
      if (e.contains("source_class")) c.eval.source_class = e.at("source_class").get<int>();
      read(e, "target_class", c.eval.target_class);
      read(e, "scales", c.eval.scales);
      read(e, "tight_scale", c.eval.tight_scale);
      read(e, "radius", c.eval.radius);
      read(e, "num_seeds", c.eval.num_seeds);
      read(e, "trajectory_points", c.eval.trajectory_points);
    }
    if (j.contains("input")) c.input = j.at("input").get<std::string>();
    if (j.contains("inputs"))
      for (const auto& p : j.at("inputs")) c.inputs.emplace_back(p.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  if (c.eval.points == 0) throw ConfigError("eval.points must be positive");
  if (c.eval.num_seeds == 0) throw ConfigError("eval.num_seeds must be positive");
  if (c.method.flow_steps < 1) throw ConfigError("method.flow_steps must be >= 1");
  if (c.method.renoise_iterations < 0) throw ConfigError("method.renoise_iterations must be >= 0");
  if (!(c.eval.radius > 0.0)) throw ConfigError("eval.radius must be positive");
  for (double s : c.eval.scales)
    if (!(s >= 0.0)) throw ConfigError("eval.scales must be >= 0");
  if (!(c.condition.scale >= 0.0) || !(c.eval.tight_scale >= 0.0)) throw ConfigError("tight scales must be >= 0");
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return j.get<ExperimentConfig>();
}

}  // namespace invlab
