#include "invlab/inversion.hpp"

#include <stdexcept>

#include "invlab/error.hpp"

namespace invlab {

std::string to_string(InversionMethod m) {
  switch (m) {
    case InversionMethod::Ddim: return "ddim";
    case InversionMethod::ReNoise: return "renoise";
    case InversionMethod::EditFriendly: return "editfriendly";
    case InversionMethod::Flow: return "flow";
  }
  return "?";
}

InversionMethod parse_inversion_method(const std::string& name) {
  if (name == "ddim") return InversionMethod::Ddim;
  if (name == "renoise") return InversionMethod::ReNoise;
  if (name == "editfriendly") return InversionMethod::EditFriendly;
  if (name == "flow") return InversionMethod::Flow;
  throw ConfigError("unknown inversion method '" + name + "'");
}

Sampler parse_sampler(const std::string& name) {
  if (name == "ddim") return Sampler::Ddim;
  if (name == "ddpm") return Sampler::Ddpm;
  if (name == "flow") return Sampler::Flow;
  throw ConfigError("unknown sampler '" + name + "'");
}

namespace {

std::vector<Condition> expand(std::span<const Condition> conds, Eigen::Index n) {
  if (conds.size() == 1) return std::vector<Condition>(static_cast<std::size_t>(n), conds[0]);
  if (conds.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("inversion: need one condition or one per point");
  return {conds.begin(), conds.end()};
}

std::vector<int> resolve_timesteps(const NoiseSchedule& sched, const InversionSettings& settings) {
  if (settings.timesteps.empty()) return strided_timesteps(sched.steps(), sched.steps());
  const auto& ts = settings.timesteps;
  if (ts.front() != 0 || ts.back() > sched.steps()) throw ConfigError("timesteps must start at 0 and stay within T");
  for (std::size_t i = 1; i < ts.size(); ++i)
    if (ts[i] <= ts[i - 1]) throw ConfigError("timesteps must be strictly increasing");
  return ts;
}

BatchInversion diffusion_invert(const DenoisingModel& model, const PointBatch& x0, std::span<const Condition> conds,
                                const NoiseSchedule& sched, const InversionSettings& settings, int iterations,
                                InversionMethod method) {
  require_epsilon_model(model, "ddim_invert");
  if (iterations < 0) throw ConfigError("renoise: iteration count must be >= 0");
  const auto ts = resolve_timesteps(sched, settings);
  const double w = settings.guidance;

  BatchInversion inv;
  inv.method = method;
  inv.conditions = expand(conds, x0.cols());
  inv.iterations = iterations;
  PointBatch z = x0;
  inv.trajectory.push(ts.front(), z);
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const int t = ts[i];
    const int prev = ts[i - 1];
    const double a = sched.A(t, prev);
    const double b = sched.B(t, prev);
    const int label = settings.convention == TimestepConvention::Current ? prev : t;
    const PointBatch z_prev = z;
    z = a * z_prev - b * guided_prediction(model, z_prev, sched.model_time(label), conds, w);

    PointBatch last = z;
    for (int k = 0; k < iterations; ++k) {
      last = z;
      z = a * z_prev - b * guided_prediction(model, last, sched.model_time(t), conds, w);
      inv.residuals.push_back((z - last).colwise().norm().transpose());
    }
    if (settings.renoise_averaging && iterations > 0) z = 0.5 * (z + last);
    inv.trajectory.push(t, z);
  }
  inv.terminal = z;
  return inv;
}

}  // namespace

InversionResult extract(const BatchInversion& inv, Eigen::Index j) {
  InversionResult r;
  r.z_terminal = inv.terminal.col(j);
  r.trajectory = inv.trajectory.point(j);
  r.method = inv.method;
  r.condition = inv.conditions.at(static_cast<std::size_t>(j));
  r.residuals.reserve(inv.residuals.size());
  for (const auto& res : inv.residuals) r.residuals.push_back(res[j]);
  return r;
}

BatchInversion ddim_invert(const DenoisingModel& model, const PointBatch& x0, std::span<const Condition> conds,
                           const NoiseSchedule& sched, const InversionSettings& settings) {
  return diffusion_invert(model, x0, conds, sched, settings, 0, InversionMethod::Ddim);
}

InversionResult ddim_invert(const DenoisingModel& model, const Vector& x0, const NoiseSchedule& sched,
                            const Condition& cond, double w) {
  InversionSettings settings;
  settings.guidance = w;
  PointBatch x = x0;
  return extract(ddim_invert(model, x, std::span<const Condition>(&cond, 1), sched, settings), 0);
}

BatchInversion renoise_invert(const DenoisingModel& model, const PointBatch& x0, std::span<const Condition> conds,
                              const NoiseSchedule& sched, const InversionSettings& settings) {
  return diffusion_invert(model, x0, conds, sched, settings, settings.renoise_iterations, InversionMethod::ReNoise);
}

InversionResult renoise_invert(const DenoisingModel& model, const Vector& x0, const NoiseSchedule& sched,
                               const Condition& cond, double w, int iterations, bool averaging) {
  InversionSettings settings;
  settings.guidance = w;
  settings.renoise_iterations = iterations;
  settings.renoise_averaging = averaging;
  PointBatch x = x0;
  return extract(renoise_invert(model, x, std::span<const Condition>(&cond, 1), sched, settings), 0);
}

BatchInversion flow_invert(const DenoisingModel& model, const PointBatch& x1, std::span<const Condition> conds,
                           const InversionSettings& settings) {
  BatchInversion inv;
  inv.method = InversionMethod::Flow;
  inv.conditions = expand(conds, x1.cols());
  auto [start, traj] = euler_invert(model, x1, FlowGrid(settings.flow_steps), conds, settings.guidance);
  inv.terminal = std::move(start);
  inv.trajectory = std::move(traj);
  return inv;
}

PointBatch denoise_from(const DenoisingModel& model, const BatchInversion& inv, std::span<const Condition> conds,
                        const NoiseSchedule* sched, const InversionSettings& settings, BatchTrajectory* trajectory) {
  if (inv.method == InversionMethod::Flow) {
    auto [end, traj] = euler_sample(model, inv.terminal, FlowGrid(settings.flow_steps), conds, settings.guidance);
    if (trajectory) *trajectory = std::move(traj);
    return end;
  }
  if (inv.method == InversionMethod::EditFriendly) throw Error("denoise_from: edit-friendly inversions replay noise maps");
  if (!sched) throw std::invalid_argument("denoise_from: diffusion inversion needs a schedule");
  std::vector<int> ts;
  ts.reserve(inv.trajectory.times.size());
  for (double t : inv.trajectory.times) ts.push_back(static_cast<int>(t));
  BatchTrajectory traj = ddim_sample(model, inv.terminal, conds, *sched, settings.guidance, ts);
  PointBatch end = traj.states.back();
  if (trajectory) *trajectory = std::move(traj);
  return end;
}

std::vector<Vector> NoiseMapSet::point_maps(Eigen::Index j) const {
  std::vector<Vector> out;
  out.reserve(maps.size());
  for (const auto& m : maps) out.emplace_back(m.col(j));
  return out;
}

NoiseMapSet editfriendly_invert(const DenoisingModel& model, const PointBatch& x0, std::span<const Condition> conds,
                                const NoiseSchedule& sched, Rng& rng, double w) {
  require_epsilon_model(model, "editfriendly_invert");
  const int T = sched.steps();
  const auto d = static_cast<std::size_t>(x0.rows());
  const auto n = static_cast<std::size_t>(x0.cols());

  // xs[t] for t = 0..T, each drawn from q(x_t | x0) independently.
  std::vector<PointBatch> xs;
  xs.reserve(static_cast<std::size_t>(T) + 1);
  xs.push_back(x0);
  for (int t = 1; t <= T; ++t) xs.push_back(forward_marginal(x0, t, sample_standard_normal_batch(rng, d, n), sched));

  NoiseMapSet out;
  out.x_T = xs.back();
  out.conditions = expand(conds, x0.cols());
  out.guidance = w;
  out.maps.reserve(static_cast<std::size_t>(T));
  for (int t = T; t >= 1; --t) {
    const auto ti = static_cast<std::size_t>(t);
    const PointBatch eps = guided_prediction(model, xs[ti], sched.model_time(t), conds, w);
    const PointBatch mean = ddpm_posterior_mean(xs[ti], eps, t, sched);
    if (t == 1) {
      out.maps.push_back(xs[0] - mean);
      continue;
    }
    const double sigma = std::sqrt(sched.posterior_variance(t));
    if (!(sigma > 0.0)) throw Error("editfriendly_invert: zero posterior variance at interior step " + std::to_string(t));
    out.maps.push_back((xs[ti - 1] - mean) / sigma);
  }
  return out;
}

PointBatch ddpm_replay(const DenoisingModel& model, const NoiseMapSet& maps, std::span<const Condition> conds,
                       const NoiseSchedule& sched, double w, BatchTrajectory* trajectory) {
  require_epsilon_model(model, "ddpm_replay");
  if (static_cast<int>(maps.maps.size()) != sched.steps()) throw Error("ddpm_replay: map count does not match schedule");
  PointBatch x = maps.x_T;
  if (trajectory) trajectory->push(sched.steps(), x);
  for (int t = sched.steps(); t >= 1; --t) {
    x = ddpm_sample_step(model, x, t, conds, sched, maps.map_for_step(t), w);
    if (trajectory) trajectory->push(t - 1, x);
  }
  return x;
}

Condition tighten(const Condition& /*base_cond*/, const Vector& x0, double scale) {
  if (!(scale >= 0.0)) throw ConfigError("tighten: scale must be >= 0");
  return Condition::tight(x0, scale);
}

std::vector<Condition> tighten_all(const PointBatch& x0, double scale) {
  std::vector<Condition> out;
  out.reserve(static_cast<std::size_t>(x0.cols()));
  for (Eigen::Index j = 0; j < x0.cols(); ++j) out.push_back(tighten(Condition::null(), x0.col(j), scale));
  return out;
}

Condition compose_edit_condition(const Condition& inversion_cond, const Condition& target, EditPolicy policy) {
  if (policy == EditPolicy::TightOffDuringEdit || !inversion_cond.tight_branch() || target.tight_branch())
    return target;
  return inversion_cond.with_class(target.class_id());
}

PointBatch edit_by_condition_swap(const DenoisingModel& model, const BatchInversion& inv,
                                  std::span<const Condition> target_conds, Sampler sampler,
                                  const NoiseSchedule* sched, const InversionSettings& settings) {
  const bool flow = inv.method == InversionMethod::Flow;
  if (inv.method == InversionMethod::EditFriendly || sampler == Sampler::Ddpm)
    throw Error("edit_by_condition_swap: the ddpm sampler pairs with edit-friendly noise maps");
  if (flow != (sampler == Sampler::Flow))
    throw Error("edit_by_condition_swap: sampler does not match the " + to_string(inv.method) + " inversion");
  return denoise_from(model, inv, target_conds, sched, settings);
}

PointBatch edit_by_condition_swap(const DenoisingModel& model, const NoiseMapSet& maps,
                                  std::span<const Condition> target_conds, Sampler sampler,
                                  const NoiseSchedule& sched) {
  if (sampler != Sampler::Ddpm) throw Error("edit_by_condition_swap: noise maps can only be replayed by the ddpm sampler");
  return ddpm_replay(model, maps, target_conds, sched, maps.guidance);
}

}  // namespace invlab
