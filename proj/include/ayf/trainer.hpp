#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ayf/flowmap.hpp"
#include "ayf/net.hpp"
#include "ayf/objectives.hpp"
#include "ayf/optimizer.hpp"
#include "ayf/rng.hpp"
#include "ayf/teachers.hpp"

namespace ayf::trainer {

enum class Objective { emd, lmd, cm, shortcut, meanflow };

Objective parse_objective(const std::string& name);
std::string to_string(Objective o);

struct TrainConfig {
  double P_mean = -0.6;
  double P_std = 1.6;
  double lambda_min = 1.0;
  double lambda_max = 3.0;
  double sigma_d = 1.0;
  double lr = 1e-3;
  int batch = 512;
  std::int64_t iters = 20000;
  std::uint64_t seed = 0;
  Objective objective = Objective::emd;
  objectives::EmdConfig emd;
  std::optional<double> ema_decay;  // when set, the EMA weights replace the model at the end
  int log_every = 100;
  int checkpoint_every = 0;         // 0 disables periodic checkpoints

  void validate() const;
};

// d = sigmoid(tau), tau ~ N(P_mean, P_std^2); s ~ U(0, 1 - d); t = s + d.
flowmap::TimePair sample_time_pair(const TrainConfig& cfg, Engine& engine);

struct LogRow {
  std::int64_t iter = 0;
  double loss = 0.0;
  double r = 0.0;
  double grad_norm = 0.0;
  std::optional<double> w_adaptive;
  double wallclock_ms = 0.0;
};

struct TrainHooks {
  std::function<void(const LogRow&)> on_log;
  std::function<void(std::int64_t iter, const net::MlpFlowMap&)> on_checkpoint;
};

struct TrainResult {
  std::vector<LogRow> log;
  std::int64_t skipped = 0;  // iterations dropped for non-finite loss or gradient
};

// One training batch: x0 from `data`, x1 ~ N(0, sigma_d^2), (t, s), lambda,
// x_t on the rectified-flow interpolant and the guided teacher velocity.
objectives::DistillBatch draw_distill_batch(const TrainConfig& cfg, const net::MlpFlowMap& model,
                                            const teachers::GuidedTeacher& teacher,
                                            const teachers::DataSource& data, Engine& engine);

// Runs the distillation loop in place. Throws DivergenceError after 100
// consecutive non-finite iterations.
TrainResult train(net::MlpFlowMap& model, const teachers::GuidedTeacher& teacher,
                  const teachers::DataSource& data, const TrainConfig& cfg, const TrainHooks& hooks = {});

struct AdvConfig {
  double alpha = 0.1;
  double beta = 0.1;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  std::vector<int> disc_hidden{128, 128};
  std::int64_t iters = 3000;
  std::uint64_t seed = 0;

  void validate() const;
};

// ||grad_last L_ADV|| / (||grad_last L_EMD|| + 1e-8), clipped to [1e-4, 1e4].
double adaptive_weight(double grad_adv_norm, double grad_emd_norm);

// Restriction of a full parameter gradient to the model's final layer.
double last_layer_norm(const net::MlpFlowMap& model, const Eigen::VectorXd& grad);

struct GeneratorAdv {
  double loss = 0.0;
  net::ParamGrad grad;
  Eigen::MatrixXd fake;  // one-step samples x1 - F(x1, 1, 0, lambda)
};

// mean Softplus(D(x0') - D(x0)) and its gradient through the one-step samples.
GeneratorAdv generator_adversarial(const net::MlpFlowMap& model, const net::Discriminator& disc,
                                   const Eigen::MatrixXd& x1, const Eigen::VectorXd& lambda,
                                   const Eigen::MatrixXd& real, const std::vector<int>& labels = {});

struct DiscriminatorStep {
  double loss = 0.0;
  net::ParamGrad grad;
};

// mean Softplus(D(x0) - D(x0')) + beta (||grad D(x0)||^2 + ||grad D(x0')||^2) averaged.
DiscriminatorStep discriminator_loss(const net::Discriminator& disc, const Eigen::MatrixXd& real,
                                     const Eigen::MatrixXd& fake, double beta);

struct AdvResult {
  std::vector<LogRow> log;
};

// Alternating 1:1 generator / discriminator updates with r fixed at 0.99.
AdvResult adversarial_finetune(net::MlpFlowMap& model, const teachers::GuidedTeacher& teacher,
                               const teachers::DataSource& data, const TrainConfig& train_cfg,
                               const AdvConfig& cfg, const TrainHooks& hooks = {});

// Adam update on a parameter vector (see ayf::adam_step).
void optimizer_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad, AdamState& state, double lr);

}  // namespace ayf::trainer
