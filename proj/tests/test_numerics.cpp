#include <doctest.h>

#include <cmath>
#include <limits>

#include "invlab/error.hpp"
#include "invlab/numerics.hpp"
#include "support.hpp"

using namespace invlab;
using invlab::test::vec;

TEST_CASE("xoshiro256** matches an independent reference") {
  // Reference words from a separate splitmix64 + xoshiro256** implementation.
  Rng a(0);
  CHECK(a.next_u64() == 0x99ec5f36cb75f2b4ULL);
  CHECK(a.next_u64() == 0xbf6e1f784956452aULL);
  CHECK(a.next_u64() == 0x1a5f849d4933e6e0ULL);
  Rng b(42);
  CHECK(b.next_u64() == 0x15780b2e0c2ec716ULL);
  CHECK(b.next_u64() == 0x6104d9866d113a7eULL);
}

TEST_CASE("same seed gives the same normal draws") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.standard_normal() == b.standard_normal());
  Rng s1 = Rng::stream(42, 3), s2 = Rng::stream(42, 3);
  for (int i = 0; i < 100; ++i) CHECK(s1.next_u64() == s2.next_u64());
}

TEST_CASE("streams are distinct") {
  Rng s0 = Rng::stream(7, 0), s1 = Rng::stream(7, 1), base(7);
  const auto a = s0.next_u64(), b = s1.next_u64(), c = base.next_u64();
  CHECK(a != b);
  CHECK(a != c);
  CHECK(b != c);
}

TEST_CASE("standard normal moments over 1e5 draws") {
  Rng rng(2024);
  const std::size_t n = 100000;
  const PointBatch x = sample_standard_normal_batch(rng, 2, n);
  const Vector mean = x.rowwise().mean();
  CHECK(std::abs(mean[0]) < 0.02);
  CHECK(std::abs(mean[1]) < 0.02);
  const PointBatch c = x.colwise() - mean;
  const Eigen::MatrixXd cov = c * c.transpose() / static_cast<double>(n - 1);
  CHECK((cov - Eigen::MatrixXd::Identity(2, 2)).norm() < 0.05);
}

TEST_CASE("uniform draws stay in range") {
  Rng rng(5);
  std::vector<int> hist(10, 0);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const auto k = rng.uniform_index(10);
    REQUIRE(k < 10);
    ++hist[k];
  }
  // chi-square with 9 dof, alpha = 0.001 -> 27.88
  double chi2 = 0.0;
  for (int h : hist) chi2 += (h - 10000.0) * (h - 10000.0) / 10000.0;
  CHECK(chi2 < 27.88);
}

TEST_CASE("zero dimension is rejected") {
  Rng rng(1);
  CHECK_THROWS_AS(sample_standard_normal(rng, 0), std::invalid_argument);
}

TEST_CASE("standard normal NLL analytic values") {
  CHECK(standard_normal_nll(vec({0, 0})) == doctest::Approx(1.837877).epsilon(1e-6));
  CHECK(standard_normal_nll(vec({1, 0})) == doctest::Approx(2.337877).epsilon(1e-6));
  CHECK(standard_normal_nll(vec({3, 4})) == doctest::Approx(14.337877).epsilon(1e-6));
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Vector x = 3.0 * sample_standard_normal(rng, 2);
    CHECK(standard_normal_nll(x) - standard_normal_nll(Vector::Zero(2)) ==
          doctest::Approx(0.5 * x.squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("NLL rejects non-finite input") {
  CHECK_THROWS(standard_normal_nll(vec({std::numeric_limits<double>::quiet_NaN(), 0})));
  CHECK_THROWS(standard_normal_nll(vec({std::numeric_limits<double>::infinity(), 0})));
}

TEST_CASE("columns and stack_columns round trip") {
  Rng rng(9);
  const PointBatch b = sample_standard_normal_batch(rng, 3, 5);
  const auto cols = columns(b);
  REQUIRE(cols.size() == 5);
  CHECK(stack_columns(cols) == b);
  CHECK(all_finite(b));
  PointBatch bad = b;
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(all_finite(bad));
  CHECK_THROWS_AS(require_finite(bad, "bad"), Error);
}
