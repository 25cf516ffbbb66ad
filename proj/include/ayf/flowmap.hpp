#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ayf/gaussian_world.hpp"
#include "ayf/net.hpp"
#include "ayf/teachers.hpp"

// Flow-map parametrization f(x, t, s) = x + (s - t) F(x, t, s) and the
// samplers built on it.
namespace ayf::flowmap {

struct TimePair {
  double t = 1.0;
  double s = 0.0;
};

// Anything that can jump a batch of points from t to s. Labels follow the
// teachers convention (-1 = unconditional).
class FlowMap {
 public:
  virtual ~FlowMap() = default;
  virtual int dim() const = 0;
  virtual Eigen::MatrixXd apply(const Eigen::MatrixXd& x, TimePair pair, double lambda,
                                std::span<const int> labels = {}) const = 0;
};

// The trained student.
class NetFlowMap final : public FlowMap {
 public:
  explicit NetFlowMap(const net::MlpFlowMap& model) : model_(&model) {}
  int dim() const override { return model_->dim(); }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x, TimePair pair, double lambda,
                        std::span<const int> labels = {}) const override;

 private:
  const net::MlpFlowMap* model_;
};

// F = v: a single Euler step of the teacher ODE.
class VelocityFlowMap final : public FlowMap {
 public:
  explicit VelocityFlowMap(std::shared_ptr<const teachers::VelocityField> field)
      : field_(std::move(field)) {}
  int dim() const override { return field_->dim(); }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x, TimePair pair, double lambda,
                        std::span<const int> labels = {}) const override;

 private:
  std::shared_ptr<const teachers::VelocityField> field_;
};

// Exact PF-ODE flow map of the Gaussian world.
class GaussianOptimalFlowMap final : public FlowMap {
 public:
  explicit GaussianOptimalFlowMap(gaussian::GaussianWorld world) : world_(world) {}
  int dim() const override { return world_.dim; }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x, TimePair pair, double lambda,
                        std::span<const int> labels = {}) const override;

 private:
  gaussian::GaussianWorld world_;
};

// The perturbed analytic consistency model; defined only for s = 0.
class PerturbedCmFlowMap final : public FlowMap {
 public:
  explicit PerturbedCmFlowMap(gaussian::PerturbedCM model) : model_(model) {}
  int dim() const override { return model_.world.dim; }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x, TimePair pair, double lambda,
                        std::span<const int> labels = {}) const override;

 private:
  gaussian::PerturbedCM model_;
};

// x + (s - t) F with the exact boundary f(x, t, t) = x.
Eigen::MatrixXd apply(const net::MlpFlowMap& model, const Eigen::MatrixXd& x, TimePair pair,
                      double lambda, std::span<const int> labels = {});

class SamplerSchedule {
 public:
  // `timesteps` must run strictly downward from exactly 1 to exactly 0.
  SamplerSchedule(std::vector<double> timesteps, double gamma, std::uint64_t seed);
  static SamplerSchedule uniform(int steps, double gamma, std::uint64_t seed);

  const std::vector<double>& timesteps() const { return timesteps_; }
  int steps() const { return static_cast<int>(timesteps_.size()) - 1; }
  double gamma() const { return gamma_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::vector<double> timesteps_;
  double gamma_;
  std::uint64_t seed_;
};

struct SamplerOptions {
  double lambda = 1.0;
  double sigma_d = 1.0;       // noise std for x_1 and renoising
  std::vector<int> labels;    // empty, or one per chain
};

struct RenoiseCoefficients {
  double s_tilde;
  double alpha;
  double beta_sq;  // s^2 - alpha^2 s_tilde^2, before the square root
  double beta;
};

// s~ = (1 - gamma) s, alpha = (1 - s) / (1 - s~), beta = sqrt(s^2 - alpha^2 s~^2).
RenoiseCoefficients renoise_coefficients(double s, double gamma);

// x_1 draws for `chains` chains; chunk c of kChunkSize chains uses stream
// (seed, c) and draws its x_1 first.
Eigen::MatrixXd draw_initial_noise(int dim, std::size_t chains, std::uint64_t seed, double sigma_d);

// Folds apply over consecutive schedule pairs starting from the given x_1.
Eigen::MatrixXd deterministic_sample(const FlowMap& model, const SamplerSchedule& schedule,
                                     const Eigen::MatrixXd& x1, const SamplerOptions& opts = {});

// Stochastic multistep sampling: per transition, jump to s~ then renoise.
Eigen::MatrixXd gamma_sample(const FlowMap& model, const SamplerSchedule& schedule,
                             std::size_t chains, const SamplerOptions& opts = {});

// Denoise to 0 with the model and renoise with (1 - s) x0 + s z.
Eigen::MatrixXd multistep_cm_sample(const FlowMap& model, const SamplerSchedule& schedule,
                                    std::size_t chains, const SamplerOptions& opts = {});

}  // namespace ayf::flowmap
