#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ayf/metrics.hpp"
#include "ayf/rng.hpp"
#include "ayf/teachers.hpp"

using namespace ayf;
using namespace ayf::metrics;
using Eigen::MatrixXd;

namespace {

MatrixXd gaussian(int dim, int n, double stddev, std::uint64_t seed) {
  MatrixXd x(dim, n);
  Engine eng = make_stream(seed, 0);
  fill_normal(x, eng, stddev);
  return x;
}

double brute_force_cost(const MatrixXd& c) {
  std::vector<int> perm(static_cast<std::size_t>(c.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) total += c(static_cast<Eigen::Index>(i), perm[i]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST(Assignment, MatchesBruteForce) {
  Engine eng = make_stream(1, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 7;
    MatrixXd c(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c(i, j) = uniform(eng, 0.0, 10.0);
    const auto a = solve_assignment(c);
    double total = 0.0;
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      total += c(i, a[static_cast<std::size_t>(i)]);
      ++seen[static_cast<std::size_t>(a[static_cast<std::size_t>(i)])];
    }
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    EXPECT_NEAR(total, brute_force_cost(c), 1e-9);
  }
}

TEST(ExactW2, IdentityAndPermutation) {
  const MatrixXd a = gaussian(2, 100, 1.0, 2);
  EXPECT_EQ(empirical_w2_exact(a, a), 0.0);
  const MatrixXd b = a.rowwise().reverse();  // columns in reverse order
  EXPECT_NEAR(empirical_w2_exact(a, b), 0.0, 1e-12);
}

TEST(ExactW2, TranslationGivesShiftNorm) {
  const MatrixXd a = gaussian(2, 200, 1.0, 3);
  Eigen::Vector2d delta(0.3, -0.4);
  const MatrixXd b = a.colwise() + Eigen::VectorXd(delta);
  EXPECT_NEAR(empirical_w2_exact(a, b), 0.5, 1e-12);
}

TEST(ExactW2, MetricAxioms) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const MatrixXd a = gaussian(2, 64, 1.0, 10 + s), b = gaussian(2, 64, 0.7, 20 + s), c = gaussian(2, 64, 1.3, 30 + s);
    EXPECT_EQ(empirical_w2_exact(a, b), empirical_w2_exact(b, a));
    EXPECT_LE(empirical_w2_exact(a, c), empirical_w2_exact(a, b) + empirical_w2_exact(b, c) + 1e-12);
  }
}

TEST(ExactW2, GaussianClosedForm) {
  // N(0, c^2 I) vs N(0, I) in 2D: W2 = sqrt(2) |1 - c|.
  const double c = 0.5, closed = std::sqrt(2.0) * 0.5;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const double w = empirical_w2_exact(gaussian(2, 512, c, 40 + s), gaussian(2, 512, 1.0, 50 + s));
    EXPECT_NEAR(w / closed, 1.0, 0.15) << "seed " << s;
  }
}

TEST(ExactW2, Validation) {
  EXPECT_THROW(empirical_w2_exact(gaussian(2, 3, 1, 1), gaussian(2, 4, 1, 1)), std::invalid_argument);
  EXPECT_THROW(empirical_w2_exact(gaussian(2, 1025, 1, 1), gaussian(2, 1025, 1, 2)), std::invalid_argument);
}

TEST(SlicedW2, OneDimensionalIsExact) {
  const MatrixXd a = gaussian(1, 300, 1.0, 5), b = gaussian(1, 300, 2.0, 6);
  EXPECT_NEAR(sliced_w2(a, b, 3, 1), empirical_w2_exact(a, b), 1e-12);
  EXPECT_EQ(sliced_w2(a, a, 10, 1), 0.0);
}

TEST(SlicedW2, AgreesWithExactAndBoundsIt) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const MatrixXd a = gaussian(2, 512, 0.5, 60 + s), b = gaussian(2, 512, 1.0, 70 + s);
    const double exact = empirical_w2_exact(a, b);
    const double sliced = sliced_w2(a, b, 200, s);
    EXPECT_NEAR(sliced / exact, 1.0, 0.2);
    EXPECT_LE(sliced, exact * 1.05);
    EXPECT_EQ(sliced, sliced_w2(a, b, 200, s));
  }
}

TEST(Coverage, CentersAndFarPoints) {
  MatrixXd modes(2, 3);
  modes << 0, 1, 2, 0, 0, 0;
  MatrixXd samples(2, 4);
  samples << 0, 1, 1, 2, 0, 0, 0, 0;
  const auto cov = mode_coverage(samples, modes, 0.1);
  EXPECT_EQ(cov.counts, (std::vector<long>{1, 2, 1}));
  EXPECT_EQ(cov.unassigned, 0);
  const auto far = mode_coverage(MatrixXd::Constant(2, 5, 100.0), modes, 0.5);
  EXPECT_EQ(far.unassigned, 5);
  EXPECT_EQ(far.assigned(), 0);
  EXPECT_THROW(mode_coverage(samples, modes, 0.0), std::invalid_argument);
}

TEST(Coverage, TeacherEulerSamplesCoverEveryMode) {
  const auto ring = teachers::GmmTeacher::ring();
  const MatrixXd x1 = gaussian(2, 4000, 1.0, 80);
  const MatrixXd x0 = teachers::euler_solve_batch(ring, x1, 1.0, 0.0, 128);
  const auto cov = mode_coverage(x0, ring.means(), 1.0);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_GE(cov.fraction(k), 0.08) << "mode " << k;
}

TEST(Summary, MeanAndStd) {
  const auto s = summarize({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.std, 1.0);
}
