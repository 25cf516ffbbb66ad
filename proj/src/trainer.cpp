#include "ayf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "ayf/errors.hpp"

namespace ayf::trainer {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kMaxNonFinite = 100;
constexpr double kAdvR = 0.99;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

std::vector<int> model_labels(const net::MlpFlowMap& model, const std::vector<int>& labels) {
  return model.spec().classes > 0 ? labels : std::vector<int>{};
}

objectives::ObjectiveGrad objective_grad(const net::MlpFlowMap& model, const teachers::GuidedTeacher& teacher,
                                         const objectives::DistillBatch& b, const TrainConfig& cfg,
                                         std::int64_t iter) {
  switch (cfg.objective) {
    case Objective::emd:
      return objectives::emd_grad(model, nullptr, b, iter, cfg.emd);
    case Objective::cm:
      return objectives::continuous_cm_grad(model, nullptr, b, iter, cfg.emd);
    case Objective::lmd:
      return objectives::lmd_grad(model, nullptr, teacher, b, cfg.emd);
    case Objective::shortcut:
      return objectives::shortcut_grad(model, nullptr, b);
    case Objective::meanflow:
      return objectives::meanflow_grad(model, nullptr, b);
  }
  throw std::logic_error("unhandled objective");
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Objective parse_objective(const std::string& name) {
  if (name == "emd") return Objective::emd;
  if (name == "lmd") return Objective::lmd;
  if (name == "cm") return Objective::cm;
  if (name == "shortcut") return Objective::shortcut;
  if (name == "meanflow") return Objective::meanflow;
  throw ConfigError("unknown objective '" + name + "'");
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::emd: return "emd";
    case Objective::lmd: return "lmd";
    case Objective::cm: return "cm";
    case Objective::shortcut: return "shortcut";
    case Objective::meanflow: return "meanflow";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (!(lambda_min <= lambda_max)) throw ConfigError("lambda_min must be <= lambda_max");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (iters < 0) throw ConfigError("iters must be >= 0");
  if (!(P_std >= 0.0) || !std::isfinite(P_mean)) throw ConfigError("P_std must be >= 0 and P_mean finite");
  if (!(sigma_d > 0.0)) throw ConfigError("sigma_d must be > 0");
  if (ema_decay && !(*ema_decay >= 0.0 && *ema_decay < 1.0)) throw ConfigError("ema_decay must lie in [0, 1)");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  emd.validate();
}

flowmap::TimePair sample_time_pair(const TrainConfig& cfg, Engine& engine) {
  const double tau = cfg.P_mean + cfg.P_std * standard_normal(engine);
  double d = sigmoid(tau);
  // Keep the pair strictly ordered even when the sigmoid saturates.
  d = std::clamp(d, 1e-12, 1.0);
  const double s = uniform(engine, 0.0, 1.0 - d);
  return {std::min(1.0, s + d), s};
}

objectives::DistillBatch draw_distill_batch(const TrainConfig& cfg, const net::MlpFlowMap& model,
                                            const teachers::GuidedTeacher& teacher,
                                            const teachers::DataSource& data, Engine& engine) {
  const int n = cfg.batch;
  const teachers::LabeledPoints x0 = data.sample(static_cast<std::size_t>(n), engine);
  MatrixXd x1(data.dim(), n);
  fill_normal(x1, engine, cfg.sigma_d);
  objectives::DistillBatch b;
  b.in.t.resize(n);
  b.in.s.resize(n);
  b.in.lambda.resize(n);
  for (int j = 0; j < n; ++j) {
    flowmap::TimePair p = sample_time_pair(cfg, engine);
    if (cfg.objective == Objective::cm) {
      p = {p.t - p.s, 0.0};
    }
    b.in.t(j) = p.t;
    b.in.s(j) = p.s;
    b.in.lambda(j) = uniform(engine, cfg.lambda_min, cfg.lambda_max);
  }
  b.in.x = x0.points * (VectorXd::Ones(n) - b.in.t).asDiagonal();
  b.in.x += x1 * b.in.t.asDiagonal();
  b.in.labels = model_labels(model, x0.labels);
  b.v = teacher.velocity_batch(b.in.x, b.in.t, b.in.lambda, b.in.labels);
  return b;
}

TrainResult train(net::MlpFlowMap& model, const teachers::GuidedTeacher& teacher,
                  const teachers::DataSource& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (data.dim() != model.dim() || teacher.dim() != model.dim()) {
    throw std::invalid_argument("model, teacher and data dimensions differ");
  }
  TrainResult result;
  Engine engine = make_stream(cfg.seed, 1);
  AdamState state;
  VectorXd ema;
  if (cfg.ema_decay) ema = model.params();
  int non_finite = 0;
  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t it = 0; it < cfg.iters; ++it) {
    const objectives::DistillBatch b = draw_distill_batch(cfg, model, teacher, data, engine);
    objectives::ObjectiveGrad g;
    bool ok = true;
    try {
      g = objective_grad(model, teacher, b, cfg, it);
      ok = std::isfinite(g.loss) && g.grad.values.allFinite();
    } catch (const DivergenceError&) {
      ok = false;
    }
    if (!ok) {
      ++result.skipped;
      if (++non_finite >= kMaxNonFinite) {
        throw DivergenceError("non-finite loss for " + std::to_string(kMaxNonFinite) +
                              " consecutive iterations (last iteration " + std::to_string(it) + ")");
      }
      continue;
    }
    non_finite = 0;
    optimizer_step(model.mutable_params(), g.grad.values, state, cfg.lr);
    if (cfg.ema_decay) {
      ema = *cfg.ema_decay * ema + (1.0 - *cfg.ema_decay) * model.params();
    }
    const std::int64_t done = it + 1;
    if (done % cfg.log_every == 0 || done == cfg.iters) {
      LogRow row;
      row.iter = done;
      row.loss = g.loss;
      row.r = cfg.objective == Objective::emd || cfg.objective == Objective::cm ? objectives::warmup_r(it, cfg.emd) : 0.0;
      row.grad_norm = g.grad.norm();
      row.wallclock_ms = elapsed_ms(start);
      result.log.push_back(row);
      if (hooks.on_log) hooks.on_log(row);
    }
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(done, model);
    }
  }
  if (cfg.ema_decay && cfg.iters > 0) model.set_params(ema);
  return result;
}

void AdvConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("alpha and beta must be >= 0");
  if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ConfigError("adversarial learning rates must be > 0");
  if (iters < 0) throw ConfigError("adversarial iters must be >= 0");
  if (disc_hidden.empty()) throw ConfigError("discriminator needs at least one hidden layer");
}

double adaptive_weight(double grad_adv_norm, double grad_emd_norm) {
  if (!(grad_adv_norm >= 0.0) || !(grad_emd_norm >= 0.0)) {
    throw std::invalid_argument("gradient norms must be >= 0");
  }
  return std::clamp(grad_adv_norm / (grad_emd_norm + 1e-8), 1e-4, 1e4);
}

double last_layer_norm(const net::MlpFlowMap& model, const VectorXd& grad) {
  const auto [lo, hi] = model.last_layer_range();
  return grad.segment(static_cast<Index>(lo), static_cast<Index>(hi - lo)).norm();
}

GeneratorAdv generator_adversarial(const net::MlpFlowMap& model, const net::Discriminator& disc,
                                   const MatrixXd& x1, const VectorXd& lambda, const MatrixXd& real,
                                   const std::vector<int>& labels) {
  const Index n = x1.cols();
  if (real.cols() != n || lambda.size() != n) {
    throw std::invalid_argument("real and fake batches must have the same size");
  }
  net::Batch in;
  in.x = x1;
  in.t = VectorXd::Ones(n);
  in.s = VectorXd::Zero(n);
  in.lambda = lambda;
  in.labels = labels;
  net::Tape tape;
  const MatrixXd F = model.forward(in, &tape);
  GeneratorAdv out;
  out.fake = x1 - F;
  const VectorXd d_fake = disc.forward(out.fake);
  const VectorXd d_real = disc.forward(real);
  VectorXd weight(n);
  for (Index j = 0; j < n; ++j) {
    const double z = d_fake(j) - d_real(j);
    out.loss += softplus(z);
    weight(j) = 1.0 / (1.0 + std::exp(-z));
  }
  out.loss /= static_cast<double>(n);
  const MatrixXd dx = disc.input_grad(out.fake) * (weight / static_cast<double>(n)).asDiagonal();
  // x0' = x1 - F.
  out.grad = model.backward(tape, -dx);
  return out;
}

DiscriminatorStep discriminator_loss(const net::Discriminator& disc, const MatrixXd& real, const MatrixXd& fake,
                                     double beta) {
  const Index n = real.cols();
  if (fake.cols() != n) throw std::invalid_argument("real and fake batches must have the same size");
  net::DenseTape t_real, t_fake;
  const VectorXd d_real = disc.forward(real, &t_real);
  const VectorXd d_fake = disc.forward(fake, &t_fake);
  VectorXd up_real(n), up_fake(n);
  DiscriminatorStep out;
  for (Index j = 0; j < n; ++j) {
    const double z = d_real(j) - d_fake(j);
    out.loss += softplus(z);
    const double sig = 1.0 / (1.0 + std::exp(-z));
    up_real(j) = sig / static_cast<double>(n);
    up_fake(j) = -sig / static_cast<double>(n);
  }
  out.loss /= static_cast<double>(n);
  out.grad = disc.backward(t_real, up_real);
  out.grad.values += disc.backward(t_fake, up_fake).values;
  if (beta > 0.0) {
    const VectorXd coeff = VectorXd::Constant(n, beta / static_cast<double>(n));
    const auto pr = disc.penalty(real, coeff);
    const auto pf = disc.penalty(fake, coeff);
    out.loss += beta * (pr.sq_norms.mean() + pf.sq_norms.mean());
    out.grad.values += pr.grad.values + pf.grad.values;
  }
  return out;
}

AdvResult adversarial_finetune(net::MlpFlowMap& model, const teachers::GuidedTeacher& teacher,
                               const teachers::DataSource& data, const TrainConfig& train_cfg,
                               const AdvConfig& cfg, const TrainHooks& hooks) {
  train_cfg.validate();
  cfg.validate();
  if (data.dim() != model.dim() || teacher.dim() != model.dim()) {
    throw std::invalid_argument("model, teacher and data dimensions differ");
  }
  net::Discriminator disc(model.dim(), cfg.disc_hidden, cfg.seed);
  Engine engine = make_stream(cfg.seed, 2);
  AdamState g_state, d_state;
  AdvResult result;
  const auto start = std::chrono::steady_clock::now();
  const int n = train_cfg.batch;
  for (std::int64_t it = 0; it < cfg.iters; ++it) {
    // Generator: one-step samples against real data, plus the distillation anchor.
    const teachers::LabeledPoints real = data.sample(static_cast<std::size_t>(n), engine);
    MatrixXd x1(model.dim(), n);
    fill_normal(x1, engine, train_cfg.sigma_d);
    VectorXd lambda(n);
    for (int j = 0; j < n; ++j) lambda(j) = uniform(engine, train_cfg.lambda_min, train_cfg.lambda_max);
    const std::vector<int> labels = model_labels(model, real.labels);
    const GeneratorAdv adv = generator_adversarial(model, disc, x1, lambda, real.points, labels);
    const objectives::DistillBatch b = draw_distill_batch(train_cfg, model, teacher, data, engine);
    const objectives::ObjectiveGrad emd = objectives::emd_grad(model, nullptr, b, 0, train_cfg.emd, kAdvR);
    const double w = adaptive_weight(last_layer_norm(model, adv.grad.values), last_layer_norm(model, emd.grad.values));
    const VectorXd g = adv.grad.values + cfg.alpha * w * emd.grad.values;
    if (!g.allFinite()) throw DivergenceError("non-finite generator gradient at iteration " + std::to_string(it));
    optimizer_step(model.mutable_params(), g, g_state, cfg.lr_g);

    // Discriminator on the same pair of batches.
    const DiscriminatorStep ds = discriminator_loss(disc, real.points, adv.fake, cfg.beta);
    if (!ds.grad.values.allFinite() || !std::isfinite(ds.loss)) {
      throw DivergenceError("non-finite discriminator gradient at iteration " + std::to_string(it));
    }
    optimizer_step(disc.mutable_params(), ds.grad.values, d_state, cfg.lr_d);

    const std::int64_t done = it + 1;
    if (done % train_cfg.log_every == 0 || done == cfg.iters) {
      LogRow row;
      row.iter = done;
      row.loss = adv.loss + cfg.alpha * w * emd.loss;
      row.r = kAdvR;
      row.grad_norm = g.norm();
      row.w_adaptive = w;
      row.wallclock_ms = elapsed_ms(start);
      result.log.push_back(row);
      if (hooks.on_log) hooks.on_log(row);
    }
    if (train_cfg.checkpoint_every > 0 && done % train_cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(done, model);
    }
  }
  return result;
}

void optimizer_step(Eigen::Ref<VectorXd> params, const VectorXd& grad, AdamState& state, double lr) {
  adam_step(params, grad, state, lr);
}

}  // namespace ayf::trainer
