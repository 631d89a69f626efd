#pragma once

#include <span>
#include <vector>

#include "invlab/dataset.hpp"
#include "invlab/network.hpp"
#include "invlab/trajectory.hpp"

namespace invlab {

// Discrete DDPM/DDIM schedule. Arrays are indexed by the step t = 0..T with
// alpha_bar(0) = 1; beta(0) is stored as 0.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> betas_1_to_T);

  int steps() const { return static_cast<int>(betas_.size()) - 1; }
  double beta(int t) const { return betas_.at(check(t)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bars_.at(check(t)); }

  // DDIM constants for a jump from step `prev` to step `t` (prev < t), written
  // so the inversion step reads z_t = A z_prev - B eps.
  double A(int t, int prev) const;
  double B(int t, int prev) const;
  double A(int t) const { return A(t, t - 1); }
  double B(int t) const { return B(t, t - 1); }

  // DDPM posterior variance (1 - abar_{t-1}) / (1 - abar_t) * beta_t, zero at t = 1.
  double posterior_variance(int t) const;

  // Time value fed to the network for step t.
  double model_time(int t) const { return static_cast<double>(t) / steps(); }

  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

 private:
  int check(int t) const;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

// Betas linearly spaced from beta_min to beta_max over T steps.
NoiseSchedule linear_beta_schedule(int T, double beta_min, double beta_max);

// Ascending step indices 0 = tau_0 < ... < tau_S = T with S = `count` jumps of
// (nearly) equal stride. count == T gives every step.
std::vector<int> strided_timesteps(int T, int count);

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, for 0 <= t <= T.
Vector forward_marginal(const Vector& x0, int t, const Vector& eps, const NoiseSchedule& sched);
PointBatch forward_marginal(const PointBatch& x0, int t, const PointBatch& eps, const NoiseSchedule& sched);

// eps_uncond + w (eps_cond - eps_uncond).
Vector cfg_combine(const Vector& eps_uncond, const Vector& eps_cond, double w);
PointBatch cfg_combine(const PointBatch& eps_uncond, const PointBatch& eps_cond, double w);

// Model output under classifier-free guidance. w == 1 evaluates only the
// conditional branch and w == 0 only the null branch.
PointBatch guided_prediction(const DenoisingModel& model, const PointBatch& xs, double model_time,
                             std::span<const Condition> conds, double w);

// Which step's time label the model sees while inverting from z_{t-1} to z_t.
// Current: the state's own step (t-1). Target: step t.
enum class TimestepConvention { Current, Target };

// One inversion step with a given noise estimate: A z_prev - B eps.
Vector ddim_invert_step(const Vector& z_prev, const Vector& eps, int t, int prev, const NoiseSchedule& sched);
double ddim_invert_step(double z_prev, double eps, double alpha_bar_t, double alpha_bar_prev);

// Deterministic DDIM update from z_t to z_prev with a given noise estimate.
Vector ddim_step_with_eps(const Vector& z_t, const Vector& eps, int t, int prev, const NoiseSchedule& sched);
PointBatch ddim_step_with_eps(const PointBatch& z_t, const PointBatch& eps, int t, int prev,
                              const NoiseSchedule& sched);
double ddim_step_with_eps(double z_t, double eps, double alpha_bar_t, double alpha_bar_prev);

// eta = 0 DDIM step z_t -> z_{prev}; prev defaults to t - 1.
Vector ddim_sample_step(const DenoisingModel& model, const Vector& z_t, int t, const Condition& cond,
                        const NoiseSchedule& sched, double w, int prev = -1);
PointBatch ddim_sample_step(const DenoisingModel& model, const PointBatch& z_t, int t,
                            std::span<const Condition> conds, const NoiseSchedule& sched, double w, int prev = -1);

// Runs DDIM from step `timesteps.back()` down to `timesteps.front()`.
// An empty `timesteps` means every step 0..T. Trajectory times are step indices.
BatchTrajectory ddim_sample(const DenoisingModel& model, const PointBatch& z_T, std::span<const Condition> conds,
                            const NoiseSchedule& sched, double w, std::vector<int> timesteps = {});

// DDPM posterior mean mu(x_t, eps) = (x_t - beta_t / sqrt(1 - abar_t) eps) / sqrt(alpha_t).
PointBatch ddpm_posterior_mean(const PointBatch& x_t, const PointBatch& eps, int t, const NoiseSchedule& sched);

// x_{t-1} = mu + sigma_t z. At t = 1 sigma is 0: an rng adds nothing, while an
// explicit noise map is added unscaled as a residual correction (this is how
// edit-friendly noise maps carry the last step).
PointBatch ddpm_sample_step(const DenoisingModel& model, const PointBatch& x_t, int t,
                            std::span<const Condition> conds, const NoiseSchedule& sched,
                            const PointBatch& noise, double w = 1.0);
PointBatch ddpm_sample_step(const DenoisingModel& model, const PointBatch& x_t, int t,
                            std::span<const Condition> conds, const NoiseSchedule& sched, Rng& rng,
                            double w = 1.0);
Vector ddpm_sample_step(const DenoisingModel& model, const Vector& x_t, int t, const Condition& cond,
                        const NoiseSchedule& sched, const Vector& noise, double w = 1.0);
Vector ddpm_sample_step(const DenoisingModel& model, const Vector& x_t, int t, const Condition& cond,
                        const NoiseSchedule& sched, Rng& rng, double w = 1.0);

// Throws CheckpointError unless the model predicts noise.
void require_epsilon_model(const DenoisingModel& model, const char* who);

}  // namespace invlab
