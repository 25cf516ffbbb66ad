#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ayf/rng.hpp"

namespace ayf::teachers {

// A PF-ODE velocity v(x, t | label). Labels < 0 mean "unconditional".
class VelocityField {
 public:
  virtual ~VelocityField() = default;

  virtual int dim() const = 0;
  virtual Eigen::VectorXd velocity(const Eigen::VectorXd& x, double t,
                                   std::optional<int> label = std::nullopt) const = 0;

  // Column-wise evaluation; `labels` is empty or has one entry per column.
  virtual Eigen::MatrixXd velocity_batch(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                                         std::span<const int> labels = {}) const;
};

struct LabeledPoints {
  Eigen::MatrixXd points;   // dim x n
  std::vector<int> labels;  // n entries, -1 when the source is unlabeled
};

// Something x_0 can be drawn from.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual int dim() const = 0;
  virtual int num_classes() const { return 0; }
  virtual LabeledPoints sample(std::size_t n, Engine& engine) const = 0;
};

// N(0, c^2 I) data with its exact velocity.
class GaussianTeacher final : public VelocityField, public DataSource {
 public:
  GaussianTeacher(double c, int dim);

  int dim() const override { return dim_; }
  double c() const { return c_; }
  Eigen::VectorXd velocity(const Eigen::VectorXd& x, double t,
                           std::optional<int> label = std::nullopt) const override;
  Eigen::MatrixXd velocity_batch(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                                 std::span<const int> labels = {}) const override;
  LabeledPoints sample(std::size_t n, Engine& engine) const override;

 private:
  double c_;
  int dim_;
};

// Isotropic Gaussian mixture. Velocities are exact conditional expectations
// under x_t = (1 - t) x_0 + t x_1, x_1 ~ N(0, I); responsibilities are
// computed in log-space.
class GmmTeacher final : public VelocityField, public DataSource {
 public:
  // `means` is dim x K. `labels` is empty or one class id per component.
  GmmTeacher(std::vector<double> weights, Eigen::MatrixXd means, std::vector<double> comp_std,
             std::vector<int> labels = {});

  // K components evenly spaced on a circle in the first two coordinates,
  // labelled 0..K-1.
  static GmmTeacher ring(int modes = 8, double radius = 4.0, double comp_std = 0.2);

  int dim() const override { return static_cast<int>(means_.rows()); }
  int components() const { return static_cast<int>(means_.cols()); }
  int num_classes() const override;

  const std::vector<double>& weights() const { return weights_; }
  const Eigen::MatrixXd& means() const { return means_; }
  const std::vector<double>& comp_std() const { return comp_std_; }
  const std::vector<int>& labels() const { return labels_; }

  // E[x_0 | x_t = x], restricted to components carrying `label` if given.
  Eigen::VectorXd posterior_mean(const Eigen::VectorXd& x, double t,
                                 std::optional<int> label = std::nullopt) const;

  Eigen::VectorXd velocity(const Eigen::VectorXd& x, double t,
                           std::optional<int> label = std::nullopt) const override;
  LabeledPoints sample(std::size_t n, Engine& engine) const override;

  // Mixture mean sum_k w_k mu_k.
  Eigen::VectorXd mean() const;

 private:
  std::vector<double> weights_;
  Eigen::MatrixXd means_;
  std::vector<double> comp_std_;
  std::vector<int> labels_;
  std::vector<double> log_weights_;
};

enum class GuidanceMode { none, autoguidance, cfg };

GuidanceMode parse_guidance_mode(const std::string& name);
std::string to_string(GuidanceMode mode);

struct GuidanceSpec {
  double lambda = 1.0;
  GuidanceMode mode = GuidanceMode::none;
  std::shared_ptr<const VelocityField> weak;    // autoguidance
  std::shared_ptr<const VelocityField> uncond;  // cfg

  // Throws ConfigError when the mode's required field is missing.
  void validate() const;
};

// autoguidance: lambda v + (1 - lambda) v_weak
// cfg:          lambda v(.|label) + (1 - lambda) v_uncond
// none:         v
Eigen::VectorXd guided_velocity(const GuidanceSpec& spec, const VelocityField& main,
                                const Eigen::VectorXd& x, double t,
                                std::optional<int> label = std::nullopt);

// Teacher with per-sample guidance scale, as consumed by the trainer.
class GuidedTeacher {
 public:
  GuidedTeacher(std::shared_ptr<const VelocityField> main, GuidanceSpec spec);

  int dim() const { return main_->dim(); }
  const GuidanceSpec& spec() const { return spec_; }
  const VelocityField& main() const { return *main_; }

  Eigen::MatrixXd velocity_batch(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                                 const Eigen::VectorXd& lambda,
                                 std::span<const int> labels = {}) const;

 private:
  std::shared_ptr<const VelocityField> main_;
  GuidanceSpec spec_;
};

// Degraded copy for autoguidance: comp_std scaled by `multiplier` and means
// jittered by N(0, (jitter_fraction * spread)^2), where spread is the
// per-coordinate RMS distance of the means from the mixture mean.
GmmTeacher make_weak_teacher(const GmmTeacher& teacher, double multiplier, std::uint64_t seed,
                             double jitter_fraction = 0.1);

// Explicit Euler with n uniform steps from t_from to t_to.
Eigen::VectorXd euler_solve(const VelocityField& field, const Eigen::VectorXd& x, double t_from,
                            double t_to, int n_steps, std::optional<int> label = std::nullopt);
Eigen::MatrixXd euler_solve_batch(const VelocityField& field, const Eigen::MatrixXd& x,
                                  double t_from, double t_to, int n_steps,
                                  std::span<const int> labels = {});

}  // namespace ayf::teachers
