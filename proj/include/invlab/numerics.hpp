#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace invlab {

// A point in R^d. All state handled by models and inverters is one of these.
using Vector = Eigen::VectorXd;

// A batch of points stored column-wise (d rows, one column per point).
using PointBatch = Eigen::MatrixXd;

// xoshiro256** seeded through splitmix64. Identical seeds give identical
// sequences on every platform; normals use Box-Muller with the sine branch
// cached for the following draw.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent stream `index` derived from `seed`: the base state advanced by
  // (index + 1) jumps of 2^128 draws each.
  static Rng stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  double standard_normal();

  std::uint64_t seed() const { return seed_; }

  // Advances the state by 2^128 draws.
  void jump();

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  std::optional<double> cached_normal_;
};

// Draw from N(0, I_d). Throws std::invalid_argument for d == 0.
Vector sample_standard_normal(Rng& rng, std::size_t d);

// d columns of N(0, I_d) draws, filled point by point.
PointBatch sample_standard_normal_batch(Rng& rng, std::size_t d, std::size_t n);

// Negative log density of N(0, I_d): (d/2) log(2 pi) + |x|^2 / 2.
double standard_normal_nll(const Vector& x);

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m);

// Throws invlab::Error naming `what` if `m` has a NaN or infinity.
void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what);

std::vector<Vector> columns(const PointBatch& batch);
PointBatch stack_columns(std::span<const Vector> points);

}  // namespace invlab
