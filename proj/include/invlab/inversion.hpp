#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invlab/dataset.hpp"
#include "invlab/diffusion.hpp"
#include "invlab/flow.hpp"
#include "invlab/network.hpp"
#include "invlab/trajectory.hpp"

namespace invlab {

enum class InversionMethod { Ddim, ReNoise, EditFriendly, Flow };

std::string to_string(InversionMethod m);
InversionMethod parse_inversion_method(const std::string& name);

// Knobs shared by the inverters. Unused fields are ignored by methods that do
// not need them.
struct InversionSettings {
  double guidance = 1.0;  // w = 1: no classifier-free guidance
  TimestepConvention convention = TimestepConvention::Current;
  std::vector<int> timesteps;  // ascending diffusion steps; empty = 0..T
  int flow_steps = 100;
  int renoise_iterations = 4;
  bool renoise_averaging = false;
};

// Inversion of a batch of points. Trajectories start at the inputs and end at
// the terminal latents. For ReNoise, residuals[i * K + k] holds
// |z^(k+1) - z^(k)| per point at the i-th inversion step.
struct BatchInversion {
  PointBatch terminal;
  BatchTrajectory trajectory;
  InversionMethod method = InversionMethod::Ddim;
  std::vector<Condition> conditions;
  std::vector<Eigen::VectorXd> residuals;
  int iterations = 0;
};

// Single-point view of a BatchInversion.
struct InversionResult {
  Vector z_terminal;
  Trajectory trajectory;
  InversionMethod method = InversionMethod::Ddim;
  Condition condition;
  std::vector<double> residuals;
};

InversionResult extract(const BatchInversion& inv, Eigen::Index j);

// Recurrence z_t = A_t z_{t-1} - B_t eps(z_{t-1}, ., c) for t = 1..T.
BatchInversion ddim_invert(const DenoisingModel& model, const PointBatch& x0, std::span<const Condition> conds,
                           const NoiseSchedule& sched, const InversionSettings& settings = {});
InversionResult ddim_invert(const DenoisingModel& model, const Vector& x0, const NoiseSchedule& sched,
                            const Condition& cond, double w = 1.0);

// DDIM inversion where each step's implicit equation is refined by K
// fixed-point iterations z^(k+1) = A z_{t-1} - B eps(z^(k), t, c). K = 0 is
// plain DDIM inversion.
BatchInversion renoise_invert(const DenoisingModel& model, const PointBatch& x0, std::span<const Condition> conds,
                              const NoiseSchedule& sched, const InversionSettings& settings);
InversionResult renoise_invert(const DenoisingModel& model, const Vector& x0, const NoiseSchedule& sched,
                               const Condition& cond, double w, int iterations, bool averaging);

// Reverse-Euler inversion of a flow model, wrapped as a BatchInversion.
BatchInversion flow_invert(const DenoisingModel& model, const PointBatch& x1, std::span<const Condition> conds,
                           const InversionSettings& settings = {});

// Deterministic reconstruction from an inversion: DDIM sampling for the DDIM
// family, forward Euler for flows, under `conds`.
PointBatch denoise_from(const DenoisingModel& model, const BatchInversion& inv, std::span<const Condition> conds,
                        const NoiseSchedule* sched, const InversionSettings& settings,
                        BatchTrajectory* trajectory = nullptr);

// Edit-friendly DDPM noise maps. maps[i] is the map for step T - i, so the
// replay order is maps[0], maps[1], ... down to step 1.
struct NoiseMapSet {
  PointBatch x_T;
  std::vector<PointBatch> maps;
  std::vector<Condition> conditions;
  double guidance = 1.0;

  const PointBatch& map_for_step(int t) const { return maps.at(maps.size() - static_cast<std::size_t>(t)); }
  // One point's maps in replay order (step T first).
  std::vector<Vector> point_maps(Eigen::Index j) const;
};

// Samples an independent forward marginal x_t per step and solves for the
// noise map that carries the DDPM sampler from x_t to x_{t-1}.
NoiseMapSet editfriendly_invert(const DenoisingModel& model, const PointBatch& x0, std::span<const Condition> conds,
                                const NoiseSchedule& sched, Rng& rng, double w = 1.0);

// DDPM sampling driven by stored noise maps, optionally under other conditions.
PointBatch ddpm_replay(const DenoisingModel& model, const NoiseMapSet& maps, std::span<const Condition> conds,
                       const NoiseSchedule& sched, double w, BatchTrajectory* trajectory = nullptr);

// Tight conditioning on the input itself. The base condition is dropped.
Condition tighten(const Condition& base_cond, const Vector& x0, double scale);
std::vector<Condition> tighten_all(const PointBatch& x0, double scale);

// How the tight branch behaves while denoising toward an edit target.
enum class EditPolicy { KeepTight, TightOffDuringEdit };

// Condition used to denoise an edit: the target's class row plus, under
// KeepTight, the inversion condition's tight branch.
Condition compose_edit_condition(const Condition& inversion_cond, const Condition& target, EditPolicy policy);

enum class Sampler { Ddim, Ddpm, Flow };
Sampler parse_sampler(const std::string& name);

// Re-runs the sampler matching the inversion family under new conditions.
// Throws Error when the sampler does not fit the inversion.
PointBatch edit_by_condition_swap(const DenoisingModel& model, const BatchInversion& inv,
                                  std::span<const Condition> target_conds, Sampler sampler,
                                  const NoiseSchedule* sched, const InversionSettings& settings);
PointBatch edit_by_condition_swap(const DenoisingModel& model, const NoiseMapSet& maps,
                                  std::span<const Condition> target_conds, Sampler sampler,
                                  const NoiseSchedule& sched);

}  // namespace invlab
