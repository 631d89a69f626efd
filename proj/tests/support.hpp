#pragma once

#include <functional>
#include <span>
#include <utility>

#include "invlab/network.hpp"

namespace invlab::test {

// Analytic stand-in for a trained network: out = f(x, t, cond) per column.
class FnModel : public DenoisingModel {
 public:
  using Fn = std::function<Vector(const Vector&, double, const Condition&)>;

  FnModel(Objective objective, std::size_t dim, Fn fn) : objective_(objective), dim_(dim), fn_(std::move(fn)) {}

  using DenoisingModel::predict;

  Objective objective() const override { return objective_; }
  std::size_t dim() const override { return dim_; }

  PointBatch predict(const PointBatch& xs, double t, std::span<const Condition> conds) const override {
    PointBatch out(xs.rows(), xs.cols());
    for (Eigen::Index j = 0; j < xs.cols(); ++j)
      out.col(j) = fn_(xs.col(j), t, conds.size() == 1 ? conds[0] : conds[static_cast<std::size_t>(j)]);
    return out;
  }

 private:
  Objective objective_;
  std::size_t dim_;
  Fn fn_;
};

inline FnModel constant_model(Objective objective, Vector value) {
  return FnModel(objective, static_cast<std::size_t>(value.size()),
                 [value](const Vector&, double, const Condition&) { return value; });
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace invlab::test
