#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

// Closed forms for isotropic Gaussian data N(0, c^2 I) under the
// rectified-flow interpolant x_t = (1 - t) x_0 + t x_1 with x_1 ~ N(0, I).
//
// Every map in this world is a scalar multiple of the identity, so the
// operations come in pairs: a `*_coefficient` returning the scalar and a
// vector form applying it.
namespace ayf::gaussian {

struct GaussianWorld {
  double c = 0.5;
  int dim = 2;

  GaussianWorld(double c, int dim = 2);

  // Standard deviation of x_t: sqrt(t^2 + (1 - t)^2 c^2).
  double marginal_std(double t) const;
};

// f_eps(x, t) = (c + t * eps) x / marginal_std(t).
struct PerturbedCM {
  GaussianWorld world;
  double eps = 0.0;

  PerturbedCM(GaussianWorld world, double eps);
};

// Descending grid [1, (n-1)/n, ..., 1/n, 0].
class UniformStepSchedule {
 public:
  explicit UniformStepSchedule(int n);

  int steps() const { return static_cast<int>(timesteps_.size()) - 1; }
  const std::vector<double>& timesteps() const { return timesteps_; }

 private:
  std::vector<double> timesteps_;
};

double optimal_denoiser_coefficient(double sigma, double c);
Eigen::VectorXd optimal_denoiser(const Eigen::VectorXd& x, double sigma, double c);

double optimal_velocity_coefficient(double t, double c);
Eigen::VectorXd optimal_velocity(const Eigen::VectorXd& x, double t, double c);

double optimal_cm_coefficient(double t, double c);
Eigen::VectorXd optimal_cm(const Eigen::VectorXd& x, double t, double c);

// Exact PF-ODE flow map from t to s: marginal_std(s) / marginal_std(t).
double optimal_flow_map_coefficient(double t, double s, double c);

double perturbed_cm_coefficient(double t, const PerturbedCM& model);
Eigen::VectorXd perturbed_cm(const Eigen::VectorXd& x, double t, const PerturbedCM& model);

// Var(x_s) after one denoise-renoise transition t -> s of multistep CM
// sampling with the perturbed model.
double variance_recursion_step(double var_t, double t, double s, const GaussianWorld& world,
                               double eps);

// Variance at t = 0 of n-step multistep CM sampling from Var(x_1) = 1.
double multistep_cm_variance(int n, const GaussianWorld& world, double eps);

// (sqrt(var) - c)^2, the closed-form distance between N(0, var I) and the
// data law used throughout the multistep-CM study.
double w2_isotropic(double var, const GaussianWorld& world);

// Monte-Carlo multistep CM sampling. Returns a dim x num_samples matrix of
// final points. Streams are keyed by (seed, chunk) with kChunkSize samples
// per chunk.
Eigen::MatrixXd simulate_multistep_cm(int n, const PerturbedCM& model, std::size_t num_samples,
                                      std::uint64_t seed);

// Mean over coordinates of the per-coordinate second moment about zero.
double isotropic_variance(const Eigen::MatrixXd& samples);

}  // namespace ayf::gaussian
