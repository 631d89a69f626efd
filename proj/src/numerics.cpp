#include "invlab/numerics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "invlab/error.hpp"

namespace invlab {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& s : state_) s = splitmix64(sm);
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t index) {
  Rng rng(seed);
  for (std::uint64_t i = 0; i <= index; ++i) rng.jump();
  return rng;
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

void Rng::jump() {
  static constexpr std::uint64_t kJump[] = {0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL,
                                            0xa9582618e03fc9aaULL, 0x39abdc4529b1661cULL};
  std::array<std::uint64_t, 4> acc{};
  for (std::uint64_t word : kJump) {
    for (int b = 0; b < 64; ++b) {
      if (word & (std::uint64_t{1} << b)) {
        for (int i = 0; i < 4; ++i) acc[i] ^= state_[i];
      }
      next_u64();
    }
  }
  state_ = acc;
  cached_normal_.reset();
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

double Rng::standard_normal() {
  if (cached_normal_) {
    const double v = *cached_normal_;
    cached_normal_.reset();
    return v;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  return r * std::cos(theta);
}

Vector sample_standard_normal(Rng& rng, std::size_t d) {
  if (d == 0) throw std::invalid_argument("sample_standard_normal: dimension must be >= 1");
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.standard_normal();
  return v;
}

PointBatch sample_standard_normal_batch(Rng& rng, std::size_t d, std::size_t n) {
  if (d == 0) throw std::invalid_argument("sample_standard_normal_batch: dimension must be >= 1");
  PointBatch b(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    for (Eigen::Index i = 0; i < b.rows(); ++i) b(i, j) = rng.standard_normal();
  return b;
}

double standard_normal_nll(const Vector& x) {
  require_finite(x, "standard_normal_nll input");
  const double d = static_cast<double>(x.size());
  return 0.5 * d * std::log(2.0 * std::numbers::pi) + 0.5 * x.squaredNorm();
}

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  if (!m.allFinite()) throw Error(std::string(what) + ": non-finite value");
}

std::vector<Vector> columns(const PointBatch& batch) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(batch.cols()));
  for (Eigen::Index j = 0; j < batch.cols(); ++j) out.emplace_back(batch.col(j));
  return out;
}

PointBatch stack_columns(std::span<const Vector> points) {
  if (points.empty()) return PointBatch();
  PointBatch b(points.front().size(), static_cast<Eigen::Index>(points.size()));
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (points[j].size() != b.rows()) throw std::invalid_argument("stack_columns: dimension mismatch");
    b.col(static_cast<Eigen::Index>(j)) = points[j];
  }
  return b;
}

}  // namespace invlab
