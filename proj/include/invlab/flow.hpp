#pragma once

#include <span>
#include <utility>

#include "invlab/dataset.hpp"
#include "invlab/network.hpp"
#include "invlab/trajectory.hpp"

namespace invlab {

// Uniform time grid 0 = t_0 < ... < t_N = 1. Prior lives at t = 0, data at t = 1.
class FlowGrid {
 public:
  explicit FlowGrid(int steps);

  int steps() const { return steps_; }
  double step_size() const { return 1.0 / steps_; }
  double time(int k) const { return static_cast<double>(k) / steps_; }

 private:
  int steps_;
};

struct CfmPair {
  Vector x_t;
  Vector velocity;
};

// Linear interpolation path: x_t = (1 - t) x0 + t x1 with target velocity x1 - x0.
CfmPair cfm_pair(const Vector& x0, const Vector& x1, double t);

// Forward Euler from t = 0 to t = 1 with the CFG-combined velocity. Returns the
// end state and all N + 1 visited states.
std::pair<PointBatch, BatchTrajectory> euler_sample(const DenoisingModel& model, const PointBatch& x_start,
                                                    const FlowGrid& grid, std::span<const Condition> conds,
                                                    double w = 1.0);
std::pair<Vector, Trajectory> euler_sample(const DenoisingModel& model, const Vector& x_start, const FlowGrid& grid,
                                           const Condition& cond, double w = 1.0);

// Reverse Euler from t = 1 to t = 0: x_{k-1} = x_k - h v(x_k, t_k).
std::pair<PointBatch, BatchTrajectory> euler_invert(const DenoisingModel& model, const PointBatch& x_end,
                                                    const FlowGrid& grid, std::span<const Condition> conds,
                                                    double w = 1.0);
std::pair<Vector, Trajectory> euler_invert(const DenoisingModel& model, const Vector& x_end, const FlowGrid& grid,
                                           const Condition& cond, double w = 1.0);

void require_flow_model(const DenoisingModel& model, const char* who);

}  // namespace invlab
