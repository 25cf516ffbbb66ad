#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <stdexcept>

#include "ayf/flowmap.hpp"
#include "ayf/gaussian_world.hpp"
#include "ayf/net.hpp"
#include "ayf/rng.hpp"
#include "ayf/teachers.hpp"

using namespace ayf;
using namespace ayf::flowmap;

namespace {

net::MlpFlowMap random_net(int dim, std::uint64_t seed) {
  net::ModelSpec spec;
  spec.dim = dim;
  spec.hidden = {32, 32};
  net::MlpFlowMap m(spec, seed);
  // Give the zero-initialized last layer some weight so F is non-trivial.
  Engine eng = make_stream(seed, 99);
  const auto [lo, hi] = m.last_layer_range();
  for (std::size_t i = lo; i < hi; ++i) m.mutable_params()(static_cast<Eigen::Index>(i)) = 0.1 * standard_normal(eng);
  return m;
}

}  // namespace

TEST(Apply, BoundaryIsExactIdentity) {
  const auto m = random_net(2, 1);
  Eigen::MatrixXd x = draw_initial_noise(2, 50, 3, 1.0);
  for (double t : {0.0, 0.3, 1.0}) {
    EXPECT_EQ(apply(m, x, {t, t}, 1.0), x);
  }
}

TEST(Apply, MatchesParametrization) {
  const auto m = random_net(2, 2);
  Eigen::MatrixXd x = draw_initial_noise(2, 5, 4, 1.0);
  const Eigen::MatrixXd out = apply(m, x, {0.8, 0.3}, 1.5);
  for (int j = 0; j < 5; ++j) {
    const Eigen::VectorXd F = m.forward(Eigen::VectorXd(x.col(j)), 0.8, 0.3, 1.5);
    EXPECT_LT((out.col(j) - (x.col(j) - 0.5 * F)).norm(), 1e-14);
  }
}

TEST(Apply, RejectsBackwardAndOutOfRange) {
  const auto m = random_net(2, 3);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 1);
  EXPECT_THROW(apply(m, x, {0.2, 0.5}, 1.0), std::invalid_argument);
  EXPECT_THROW(apply(m, x, {1.5, 0.5}, 1.0), std::invalid_argument);
}

TEST(Schedule, Validation) {
  EXPECT_NO_THROW(SamplerSchedule({1.0, 0.4, 0.0}, 0.5, 1));
  EXPECT_THROW(SamplerSchedule({0.9, 0.0}, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(SamplerSchedule({1.0, 0.1}, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(SamplerSchedule({1.0, 0.5, 0.5, 0.0}, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(SamplerSchedule({1.0, 0.0}, 1.5, 1), std::invalid_argument);
  EXPECT_EQ(SamplerSchedule::uniform(4, 0.0, 1).steps(), 4);
}

TEST(Renoise, CoefficientsOnGrid) {
  for (int i = 0; i <= 100; ++i) {
    for (int k = 0; k <= 100; ++k) {
      const double s = i / 100.0, g = k / 100.0;
      const auto r = renoise_coefficients(s, g);
      EXPECT_GE(r.beta_sq, -1e-15) << "s=" << s << " gamma=" << g;
      EXPECT_TRUE(std::isfinite(r.alpha));
    }
  }
  const auto r = renoise_coefficients(0.5, 1.0);
  EXPECT_DOUBLE_EQ(r.s_tilde, 0.0);
  EXPECT_DOUBLE_EQ(r.alpha, 0.5);
  EXPECT_DOUBLE_EQ(r.beta, 0.5);
  const auto d = renoise_coefficients(0.5, 0.0);
  EXPECT_DOUBLE_EQ(d.alpha, 1.0);
  EXPECT_DOUBLE_EQ(d.beta, 0.0);
}

TEST(Renoise, PreservesInterpolantVariance) {
  // If x_s~ ~ (1-s~) x0 + s~ z, then alpha x_s~ + beta z' has the noise level of x_s.
  for (double s : {0.2, 0.5, 0.9}) {
    for (double g : {0.1, 0.5, 1.0}) {
      const auto r = renoise_coefficients(s, g);
      EXPECT_NEAR(r.alpha * (1.0 - r.s_tilde), 1.0 - s, 1e-15);
      EXPECT_NEAR(r.alpha * r.alpha * r.s_tilde * r.s_tilde + r.beta * r.beta, s * s, 1e-15);
    }
  }
}

TEST(GammaSample, GammaZeroIsDeterministicFold) {
  const auto m = random_net(2, 5);
  const NetFlowMap fm(m);
  const auto sched = SamplerSchedule::uniform(4, 0.0, 77);
  const Eigen::MatrixXd x1 = draw_initial_noise(2, 1500, 77, 1.0);
  EXPECT_EQ(gamma_sample(fm, sched, 1500), deterministic_sample(fm, sched, x1));
}

TEST(GammaSample, GammaOneIsMultistepConsistency) {
  const auto m = random_net(2, 6);
  const NetFlowMap fm(m);
  const auto sched = SamplerSchedule::uniform(4, 1.0, 78);
  EXPECT_EQ(gamma_sample(fm, sched, 1500), multistep_cm_sample(fm, sched, 1500));
}

TEST(GammaSample, ReproducibleAndSeedSensitive) {
  const auto m = random_net(2, 7);
  const NetFlowMap fm(m);
  const auto a = gamma_sample(fm, SamplerSchedule::uniform(3, 0.4, 1), 200);
  EXPECT_EQ(a, gamma_sample(fm, SamplerSchedule::uniform(3, 0.4, 1), 200));
  EXPECT_NE(a, gamma_sample(fm, SamplerSchedule::uniform(3, 0.4, 2), 200));
}

TEST(GammaSample, OptimalStudentKeepsDataVarianceForAnyGamma) {
  const gaussian::GaussianWorld w(0.5, 2);
  const GaussianOptimalFlowMap fm(w);
  for (double g : {0.0, 0.3, 0.7, 1.0}) {
    const auto x = gamma_sample(fm, SamplerSchedule::uniform(4, g, 9), 200000);
    EXPECT_NEAR(gaussian::isotropic_variance(x) / 0.25, 1.0, 0.015) << "gamma=" << g;
  }
}

TEST(MultistepCm, PerturbedModelMatchesRecursion) {
  const gaussian::GaussianWorld w(0.5, 2);
  const gaussian::PerturbedCM pm(w, 0.05);
  const PerturbedCmFlowMap fm(pm);
  for (int n : {1, 2, 8}) {
    const auto x = multistep_cm_sample(fm, SamplerSchedule::uniform(n, 1.0, 40 + n), 400000);
    EXPECT_NEAR(gaussian::isotropic_variance(x) / gaussian::multistep_cm_variance(n, w, 0.05), 1.0, 0.01)
        << "n=" << n;
  }
}

TEST(Deterministic, VelocityMapIsEulerSolver) {
  auto gmm = std::make_shared<teachers::GmmTeacher>(teachers::GmmTeacher::ring());
  const VelocityFlowMap fm(gmm);
  const Eigen::MatrixXd x1 = draw_initial_noise(2, 64, 5, 1.0);
  // Stop short of t = 0 where the GMM velocity is singular.
  std::vector<double> ts;
  for (int i = 0; i <= 256; ++i) ts.push_back(1.0 - i / 256.0);
  const SamplerSchedule sched(ts, 0.0, 0);
  const Eigen::MatrixXd ours = deterministic_sample(fm, sched, x1);
  const Eigen::MatrixXd ref = teachers::euler_solve_batch(*gmm, x1, 1.0, 0.0, 256);
  EXPECT_LT((ours - ref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sampler, LabelsMustMatchChains) {
  const auto m = random_net(2, 8);
  const NetFlowMap fm(m);
  SamplerOptions opts;
  opts.labels = {1, 2};
  EXPECT_THROW(gamma_sample(fm, SamplerSchedule::uniform(2, 0.5, 1), 3, opts), std::invalid_argument);
  EXPECT_THROW(gamma_sample(fm, SamplerSchedule::uniform(2, 0.5, 1), 0), std::invalid_argument);
}
