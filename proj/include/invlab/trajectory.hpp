#pragma once

#include <stdexcept>
#include <vector>

#include "invlab/numerics.hpp"

namespace invlab {

// States of one point in the order they were visited, with the time stamp of
// each state (flow time, or the diffusion step index).
struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;

  std::size_t size() const { return states.size(); }
  const Vector& front() const { return states.front(); }
  const Vector& back() const { return states.back(); }
};

// Same as Trajectory for a batch of points moving in lockstep.
struct BatchTrajectory {
  std::vector<double> times;
  std::vector<PointBatch> states;

  void push(double t, const PointBatch& s) {
    times.push_back(t);
    states.push_back(s);
  }

  std::size_t size() const { return states.size(); }
  Eigen::Index points() const { return states.empty() ? 0 : states.front().cols(); }

  Trajectory point(Eigen::Index j) const {
    if (j < 0 || j >= points()) throw std::out_of_range("BatchTrajectory::point");
    Trajectory t;
    t.times = times;
    t.states.reserve(states.size());
    for (const auto& s : states) t.states.emplace_back(s.col(j));
    return t;
  }
};

}  // namespace invlab
