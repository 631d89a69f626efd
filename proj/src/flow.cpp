#include "invlab/flow.hpp"

#include <stdexcept>
#include <string>

#include "invlab/diffusion.hpp"
#include "invlab/error.hpp"

namespace invlab {

FlowGrid::FlowGrid(int steps) : steps_(steps) {
  if (steps < 1) throw ConfigError("FlowGrid: need at least one step");
}

CfmPair cfm_pair(const Vector& x0, const Vector& x1, double t) {
  if (x0.size() != x1.size()) throw std::invalid_argument("cfm_pair: dimension mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("cfm_pair: t outside [0, 1]");
  return {(1.0 - t) * x0 + t * x1, x1 - x0};
}

void require_flow_model(const DenoisingModel& model, const char* who) {
  if (model.objective() != Objective::FlowMatching)
    throw CheckpointError(std::string(who) + ": requires a flow_matching model, got " +
                          to_string(model.objective()));
}

std::pair<PointBatch, BatchTrajectory> euler_sample(const DenoisingModel& model, const PointBatch& x_start,
                                                    const FlowGrid& grid, std::span<const Condition> conds,
                                                    double w) {
  require_flow_model(model, "euler_sample");
  const double h = grid.step_size();
  BatchTrajectory traj;
  PointBatch x = x_start;
  traj.push(grid.time(0), x);
  for (int k = 0; k < grid.steps(); ++k) {
    x += h * guided_prediction(model, x, grid.time(k), conds, w);
    traj.push(grid.time(k + 1), x);
  }
  return {std::move(x), std::move(traj)};
}

std::pair<PointBatch, BatchTrajectory> euler_invert(const DenoisingModel& model, const PointBatch& x_end,
                                                    const FlowGrid& grid, std::span<const Condition> conds,
                                                    double w) {
  require_flow_model(model, "euler_invert");
  const double h = grid.step_size();
  BatchTrajectory traj;
  PointBatch x = x_end;
  traj.push(grid.time(grid.steps()), x);
  for (int k = grid.steps(); k > 0; --k) {
    x -= h * guided_prediction(model, x, grid.time(k), conds, w);
    traj.push(grid.time(k - 1), x);
  }
  return {std::move(x), std::move(traj)};
}

std::pair<Vector, Trajectory> euler_sample(const DenoisingModel& model, const Vector& x_start, const FlowGrid& grid,
                                           const Condition& cond, double w) {
  PointBatch x = x_start;
  auto [end, traj] = euler_sample(model, x, grid, std::span<const Condition>(&cond, 1), w);
  return {end.col(0), traj.point(0)};
}

std::pair<Vector, Trajectory> euler_invert(const DenoisingModel& model, const Vector& x_end, const FlowGrid& grid,
                                           const Condition& cond, double w) {
  PointBatch x = x_end;
  auto [start, traj] = euler_invert(model, x, grid, std::span<const Condition>(&cond, 1), w);
  return {start.col(0), traj.point(0)};
}

}  // namespace invlab
