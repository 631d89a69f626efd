#include "invlab/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "invlab/error.hpp"

namespace invlab {

NoiseSchedule::NoiseSchedule(std::vector<double> betas_1_to_T) {
  if (betas_1_to_T.empty()) throw ConfigError("NoiseSchedule: need at least one step");
  betas_.reserve(betas_1_to_T.size() + 1);
  betas_.push_back(0.0);
  alpha_bars_.push_back(1.0);
  for (double b : betas_1_to_T) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("NoiseSchedule: betas must lie in (0, 1)");
    betas_.push_back(b);
    alpha_bars_.push_back(alpha_bars_.back() * (1.0 - b));
  }
}

int NoiseSchedule::check(int t) const {
  if (t < 0 || t > steps())
    throw std::out_of_range("NoiseSchedule: step " + std::to_string(t) + " outside [0, " +
                            std::to_string(steps()) + "]");
  return t;
}

double NoiseSchedule::A(int t, int prev) const {
  if (prev >= t) throw std::out_of_range("NoiseSchedule::A: prev must precede t");
  return std::sqrt(alpha_bar(t) / alpha_bar(prev));
}

double NoiseSchedule::B(int t, int prev) const {
  return A(t, prev) * std::sqrt(1.0 - alpha_bar(prev)) - std::sqrt(1.0 - alpha_bar(t));
}

double NoiseSchedule::posterior_variance(int t) const {
  if (t < 1) throw std::out_of_range("posterior_variance: t must be >= 1");
  return (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)) * beta(t);
}

NoiseSchedule linear_beta_schedule(int T, double beta_min, double beta_max) {
  if (T < 1) throw ConfigError("linear_beta_schedule: T must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw ConfigError("linear_beta_schedule: need 0 < beta_min <= beta_max < 1");
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i)
    betas[static_cast<std::size_t>(i)] =
        T == 1 ? beta_min : beta_min + (beta_max - beta_min) * static_cast<double>(i) / (T - 1);
  return NoiseSchedule(std::move(betas));
}

std::vector<int> strided_timesteps(int T, int count) {
  if (count < 1 || count > T) throw ConfigError("strided_timesteps: count must be in [1, T]");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(count) + 1);
  for (int i = 0; i <= count; ++i)
    out.push_back(static_cast<int>((static_cast<long long>(i) * T) / count));
  return out;
}

Vector forward_marginal(const Vector& x0, int t, const Vector& eps, const NoiseSchedule& sched) {
  if (x0.size() != eps.size()) throw std::invalid_argument("forward_marginal: dimension mismatch");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

PointBatch forward_marginal(const PointBatch& x0, int t, const PointBatch& eps, const NoiseSchedule& sched) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw std::invalid_argument("forward_marginal: shape mismatch");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Vector cfg_combine(const Vector& eps_uncond, const Vector& eps_cond, double w) {
  if (eps_uncond.size() != eps_cond.size()) throw std::invalid_argument("cfg_combine: dimension mismatch");
  return eps_uncond + w * (eps_cond - eps_uncond);
}

PointBatch cfg_combine(const PointBatch& eps_uncond, const PointBatch& eps_cond, double w) {
  if (eps_uncond.rows() != eps_cond.rows() || eps_uncond.cols() != eps_cond.cols())
    throw std::invalid_argument("cfg_combine: shape mismatch");
  return eps_uncond + w * (eps_cond - eps_uncond);
}

PointBatch guided_prediction(const DenoisingModel& model, const PointBatch& xs, double model_time,
                             std::span<const Condition> conds, double w) {
  static const Condition kNull = Condition::null();
  if (w == 1.0) return model.predict(xs, model_time, conds);
  const PointBatch uncond = model.predict(xs, model_time, std::span<const Condition>(&kNull, 1));
  if (w == 0.0) return uncond;
  return cfg_combine(uncond, model.predict(xs, model_time, conds), w);
}

Vector ddim_invert_step(const Vector& z_prev, const Vector& eps, int t, int prev, const NoiseSchedule& sched) {
  return sched.A(t, prev) * z_prev - sched.B(t, prev) * eps;
}

double ddim_invert_step(double z_prev, double eps, double alpha_bar_t, double alpha_bar_prev) {
  const double a = std::sqrt(alpha_bar_t / alpha_bar_prev);
  const double b = a * std::sqrt(1.0 - alpha_bar_prev) - std::sqrt(1.0 - alpha_bar_t);
  return a * z_prev - b * eps;
}

double ddim_step_with_eps(double z_t, double eps, double alpha_bar_t, double alpha_bar_prev) {
  const double x0_hat = (z_t - std::sqrt(1.0 - alpha_bar_t) * eps) / std::sqrt(alpha_bar_t);
  return std::sqrt(alpha_bar_prev) * x0_hat + std::sqrt(1.0 - alpha_bar_prev) * eps;
}

PointBatch ddim_step_with_eps(const PointBatch& z_t, const PointBatch& eps, int t, int prev,
                              const NoiseSchedule& sched) {
  if (prev >= t) throw std::out_of_range("ddim step: prev must precede t");
  const double ab_t = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(prev);
  const PointBatch x0_hat = (z_t - std::sqrt(1.0 - ab_t) * eps) / std::sqrt(ab_t);
  return std::sqrt(ab_prev) * x0_hat + std::sqrt(1.0 - ab_prev) * eps;
}

Vector ddim_step_with_eps(const Vector& z_t, const Vector& eps, int t, int prev, const NoiseSchedule& sched) {
  PointBatch z = z_t;
  PointBatch e = eps;
  return ddim_step_with_eps(z, e, t, prev, sched).col(0);
}

PointBatch ddim_sample_step(const DenoisingModel& model, const PointBatch& z_t, int t,
                            std::span<const Condition> conds, const NoiseSchedule& sched, double w, int prev) {
  require_epsilon_model(model, "ddim_sample_step");
  if (t < 1 || t > sched.steps()) throw std::out_of_range("ddim_sample_step: t outside [1, T]");
  if (prev < 0) prev = t - 1;
  const PointBatch eps = guided_prediction(model, z_t, sched.model_time(t), conds, w);
  return ddim_step_with_eps(z_t, eps, t, prev, sched);
}

Vector ddim_sample_step(const DenoisingModel& model, const Vector& z_t, int t, const Condition& cond,
                        const NoiseSchedule& sched, double w, int prev) {
  PointBatch z = z_t;
  return ddim_sample_step(model, z, t, std::span<const Condition>(&cond, 1), sched, w, prev).col(0);
}

BatchTrajectory ddim_sample(const DenoisingModel& model, const PointBatch& z_T, std::span<const Condition> conds,
                            const NoiseSchedule& sched, double w, std::vector<int> timesteps) {
  require_epsilon_model(model, "ddim_sample");
  if (timesteps.empty()) timesteps = strided_timesteps(sched.steps(), sched.steps());
  BatchTrajectory traj;
  PointBatch z = z_T;
  traj.push(timesteps.back(), z);
  for (std::size_t i = timesteps.size() - 1; i > 0; --i) {
    z = ddim_sample_step(model, z, timesteps[i], conds, sched, w, timesteps[i - 1]);
    traj.push(timesteps[i - 1], z);
  }
  return traj;
}

PointBatch ddpm_posterior_mean(const PointBatch& x_t, const PointBatch& eps, int t, const NoiseSchedule& sched) {
  const double beta = sched.beta(t);
  return (x_t - (beta / std::sqrt(1.0 - sched.alpha_bar(t))) * eps) / std::sqrt(sched.alpha(t));
}

PointBatch ddpm_sample_step(const DenoisingModel& model, const PointBatch& x_t, int t,
                            std::span<const Condition> conds, const NoiseSchedule& sched, const PointBatch& noise,
                            double w) {
  require_epsilon_model(model, "ddpm_sample_step");
  if (t < 1 || t > sched.steps()) throw std::out_of_range("ddpm_sample_step: t outside [1, T]");
  if (noise.rows() != x_t.rows() || noise.cols() != x_t.cols())
    throw std::invalid_argument("ddpm_sample_step: noise shape mismatch");
  const PointBatch eps = guided_prediction(model, x_t, sched.model_time(t), conds, w);
  PointBatch mean = ddpm_posterior_mean(x_t, eps, t, sched);
  if (t == 1) return mean + noise;
  return mean + std::sqrt(sched.posterior_variance(t)) * noise;
}

PointBatch ddpm_sample_step(const DenoisingModel& model, const PointBatch& x_t, int t,
                            std::span<const Condition> conds, const NoiseSchedule& sched, Rng& rng, double w) {
  require_epsilon_model(model, "ddpm_sample_step");
  if (t < 1 || t > sched.steps()) throw std::out_of_range("ddpm_sample_step: t outside [1, T]");
  const PointBatch eps = guided_prediction(model, x_t, sched.model_time(t), conds, w);
  PointBatch mean = ddpm_posterior_mean(x_t, eps, t, sched);
  if (t == 1) return mean;
  const PointBatch z = sample_standard_normal_batch(rng, static_cast<std::size_t>(x_t.rows()),
                                                    static_cast<std::size_t>(x_t.cols()));
  return mean + std::sqrt(sched.posterior_variance(t)) * z;
}

Vector ddpm_sample_step(const DenoisingModel& model, const Vector& x_t, int t, const Condition& cond,
                        const NoiseSchedule& sched, const Vector& noise, double w) {
  PointBatch x = x_t;
  PointBatch z = noise;
  return ddpm_sample_step(model, x, t, std::span<const Condition>(&cond, 1), sched, z, w).col(0);
}

Vector ddpm_sample_step(const DenoisingModel& model, const Vector& x_t, int t, const Condition& cond,
                        const NoiseSchedule& sched, Rng& rng, double w) {
  PointBatch x = x_t;
  return ddpm_sample_step(model, x, t, std::span<const Condition>(&cond, 1), sched, rng, w).col(0);
}

void require_epsilon_model(const DenoisingModel& model, const char* who) {
  if (model.objective() != Objective::EpsilonPrediction)
    throw CheckpointError(std::string(who) + ": requires an epsilon_prediction model, got " +
                          to_string(model.objective()));
}

}  // namespace invlab
