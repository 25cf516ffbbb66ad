#include "ayf/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "ayf/errors.hpp"

namespace ayf::objectives {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_distill(const net::MlpFlowMap& model, const DistillBatch& b) {
  if (b.v.rows() != model.dim() || b.v.cols() != b.in.size()) {
    throw std::invalid_argument("teacher velocity shape does not match the batch");
  }
  if (b.in.size() == 0) {
    throw std::invalid_argument("empty batch");
  }
}

const net::MlpFlowMap& resolve(const net::MlpFlowMap& model, const net::MlpFlowMap* target) {
  if (target != nullptr && target->num_params() != model.num_params()) {
    throw std::invalid_argument("target network does not match the model layout");
  }
  return target != nullptr ? *target : model;
}

bool column_finite(const MatrixXd& m, Index j) { return m.col(j).allFinite(); }

net::DualBatch time_seed(const DistillBatch& b) {
  net::DualBatch d;
  d.primal = b.in;
  d.x_dot = b.v;
  d.t_dot = VectorXd::Ones(b.in.size());
  d.s_dot = VectorXd::Zero(b.in.size());
  return d;
}

// Model value with a tape; reuses the target JVP when the target is the model.
MatrixXd live_forward(const net::MlpFlowMap& model, const net::MlpFlowMap& tgt, const net::Batch& in,
                      const net::JvpResult& jr, net::Tape& tgt_tape, net::Tape& own_tape, const net::Tape*& used) {
  if (&tgt == &model) {
    used = &tgt_tape;
    return jr.value;
  }
  used = &own_tape;
  return model.forward(in, &own_tape);
}

ObjectiveGrad finish(const net::MlpFlowMap& model, const net::Tape& tape, const MatrixXd& upstream, double loss,
                     Diagnostics diag, Index valid) {
  if (valid == 0) {
    throw DivergenceError("every sample in the batch produced a non-finite tangent");
  }
  ObjectiveGrad out;
  out.loss = loss;
  out.grad = model.backward(tape, upstream);
  out.diag = diag;
  return out;
}

}  // namespace

Weighting parse_weighting(const std::string& name) {
  if (name == "inverse_square") return Weighting::inverse_square;
  if (name == "uniform") return Weighting::uniform;
  throw ConfigError("unknown weighting '" + name + "'");
}

std::string to_string(Weighting w) {
  return w == Weighting::inverse_square ? "inverse_square" : "uniform";
}

void EmdConfig::validate() const {
  if (!(c_norm > 0.0) || !std::isfinite(c_norm)) throw ConfigError("c_norm must be > 0");
  if (!(H > 0.0) || !std::isfinite(H)) throw ConfigError("H must be > 0");
  if (!(r_max >= 0.0 && r_max <= 1.0)) throw ConfigError("r_max must lie in [0, 1]");
}

double warmup_r(std::int64_t iter, const EmdConfig& cfg) {
  if (iter < 0) throw std::invalid_argument("iteration must be >= 0");
  return std::min(cfg.r_max, static_cast<double>(iter) / cfg.H);
}

double pair_weight(double t, double s, Weighting w) {
  if (w == Weighting::inverse_square) {
    if (t == s) throw SingularityError("inverse-square weighting is undefined at t == s");
    return 1.0;
  }
  return (t - s) * (t - s);
}

ObjectiveGrad emd_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target, const DistillBatch& batch,
                       std::int64_t iter, const EmdConfig& cfg, std::optional<double> r_override) {
  cfg.validate();
  check_distill(model, batch);
  const net::MlpFlowMap& tgt = resolve(model, target);
  const Index n = batch.in.size();
  const double r = r_override ? *r_override : warmup_r(iter, cfg);

  net::Tape tgt_tape, own_tape;
  const net::JvpResult jr = tgt.jvp(time_seed(batch), &tgt_tape);
  const net::Tape* used = nullptr;
  const MatrixXd F = live_forward(model, tgt, batch.in, jr, tgt_tape, own_tape, used);

  MatrixXd up = MatrixXd::Zero(model.dim(), n);
  Diagnostics diag;
  diag.r = r;
  double loss = 0.0;
  Index valid = 0;
  for (Index j = 0; j < n; ++j) {
    const double t = batch.in.t(j), s = batch.in.s(j);
    VectorXd g = (jr.value.col(j) - batch.v.col(j)) + r * (t - s) * jr.tangent.col(j);
    if (!g.allFinite() || !column_finite(F, j)) {
      ++diag.rejected;
      continue;
    }
    const double raw = g.norm();
    if (cfg.normalize) g /= raw + cfg.c_norm;
    const double w = pair_weight(t, s, cfg.weighting);
    const VectorXd res = F.col(j) - jr.value.col(j) + g;
    loss += w * res.squaredNorm();
    up.col(j) = 2.0 * w * res;
    diag.raw_tangent_norm_mean += raw;
    diag.normalized_tangent_norm_mean += g.norm();
    ++valid;
  }
  if (valid > 0) {
    up /= static_cast<double>(valid);
    loss /= static_cast<double>(valid);
    diag.raw_tangent_norm_mean /= static_cast<double>(valid);
    diag.normalized_tangent_norm_mean /= static_cast<double>(valid);
  }
  return finish(model, *used, up, loss, diag, valid);
}

ObjectiveGrad continuous_cm_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target,
                                 const DistillBatch& batch, std::int64_t iter, const EmdConfig& cfg,
                                 std::optional<double> r_override) {
  cfg.validate();
  check_distill(model, batch);
  if ((batch.in.s.array() != 0.0).any()) {
    throw std::invalid_argument("continuous consistency training requires s = 0");
  }
  if ((batch.in.t.array() <= 0.0).any()) {
    throw std::invalid_argument("continuous consistency training requires t > 0");
  }
  const net::MlpFlowMap& tgt = resolve(model, target);
  const Index n = batch.in.size();
  const double r = r_override ? *r_override : warmup_r(iter, cfg);

  net::Tape tgt_tape, own_tape;
  const net::JvpResult jr = tgt.jvp(time_seed(batch), &tgt_tape);
  const net::Tape* used = nullptr;
  const MatrixXd F = live_forward(model, tgt, batch.in, jr, tgt_tape, own_tape, used);

  MatrixXd up = MatrixXd::Zero(model.dim(), n);
  Diagnostics diag;
  diag.r = r;
  double loss = 0.0;
  Index valid = 0;
  for (Index j = 0; j < n; ++j) {
    const double t = batch.in.t(j);
    const VectorXd x = batch.in.x.col(j);
    // f = x - t F, so df^-/dt = v - F^- - t dF^-/dt (warmup scales the last term).
    VectorXd T = batch.v.col(j) - jr.value.col(j) - r * t * jr.tangent.col(j);
    if (!T.allFinite() || !column_finite(F, j)) {
      ++diag.rejected;
      continue;
    }
    const double raw = T.norm();
    if (cfg.normalize) T /= raw + cfg.c_norm;
    const double w = pair_weight(t, 0.0, cfg.weighting) / (t * t);
    const VectorXd f = x - t * F.col(j);
    const VectorXd f_minus = x - t * jr.value.col(j);
    const VectorXd res = f - f_minus + t * T;
    loss += w * res.squaredNorm();
    // Chain through f = x - t F.
    up.col(j) = -2.0 * w * t * res;
    diag.raw_tangent_norm_mean += raw;
    diag.normalized_tangent_norm_mean += T.norm();
    ++valid;
  }
  if (valid > 0) {
    up /= static_cast<double>(valid);
    loss /= static_cast<double>(valid);
    diag.raw_tangent_norm_mean /= static_cast<double>(valid);
    diag.normalized_tangent_norm_mean /= static_cast<double>(valid);
  }
  return finish(model, *used, up, loss, diag, valid);
}

ObjectiveGrad lmd_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target,
                       const teachers::GuidedTeacher& teacher, const DistillBatch& batch, const EmdConfig& cfg,
                       double s_min) {
  cfg.validate();
  check_distill(model, batch);
  const net::MlpFlowMap& tgt = resolve(model, target);
  const Index n = batch.in.size();

  net::DualBatch seed;
  seed.primal = batch.in;
  seed.x_dot = MatrixXd::Zero(model.dim(), n);
  seed.t_dot = VectorXd::Zero(n);
  seed.s_dot = VectorXd::Ones(n);
  net::Tape tgt_tape, own_tape;
  const net::JvpResult jr = tgt.jvp(seed, &tgt_tape);
  const net::Tape* used = nullptr;
  const MatrixXd F = live_forward(model, tgt, batch.in, jr, tgt_tape, own_tape, used);

  const VectorXd ds = (batch.in.s - batch.in.t);
  MatrixXd f_minus = batch.in.x + jr.value * ds.asDiagonal();
  MatrixXd ds_f = jr.value + jr.tangent * ds.asDiagonal();
  const VectorXd s_eval = batch.in.s.cwiseMax(s_min);
  const MatrixXd v_at = teacher.velocity_batch(f_minus, s_eval, batch.in.lambda, batch.in.labels);

  MatrixXd up = MatrixXd::Zero(model.dim(), n);
  Diagnostics diag;
  double loss = 0.0;
  Index valid = 0;
  for (Index j = 0; j < n; ++j) {
    VectorXd d = ds_f.col(j) - v_at.col(j);
    if (!d.allFinite() || !column_finite(F, j)) {
      ++diag.rejected;
      continue;
    }
    const double raw = d.norm();
    if (cfg.normalize) d /= raw + cfg.c_norm;
    const double w = pair_weight(batch.in.t(j), batch.in.s(j), cfg.weighting);
    loss += w * d.squaredNorm();
    up.col(j) = 2.0 * w * d;
    diag.raw_tangent_norm_mean += raw;
    diag.normalized_tangent_norm_mean += d.norm();
    ++valid;
  }
  if (valid > 0) {
    up /= static_cast<double>(valid);
    loss /= static_cast<double>(valid);
    diag.raw_tangent_norm_mean /= static_cast<double>(valid);
    diag.normalized_tangent_norm_mean /= static_cast<double>(valid);
  }
  return finish(model, *used, up, loss, diag, valid);
}

ObjectiveGrad discrete_cm_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target,
                               const DistillBatch& batch, const DiscreteCmOptions& opts,
                               const VectorXd& weights) {
  check_distill(model, batch);
  if (!(opts.dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (opts.distance == Distance::pseudo_huber && !(opts.huber_c > 0.0)) {
    throw std::invalid_argument("pseudo-Huber constant must be > 0");
  }
  if ((batch.in.s.array() != 0.0).any()) {
    throw std::invalid_argument("discrete consistency training requires s = 0");
  }
  const Index n = batch.in.size();
  if (weights.size() != 0 && weights.size() != n) {
    throw std::invalid_argument("weights must be empty or one per sample");
  }
  const net::MlpFlowMap& tgt = resolve(model, target);

  net::Tape tape;
  const MatrixXd F = model.forward(batch.in, &tape);

  net::Batch prev = batch.in;
  prev.t = (batch.in.t.array() - opts.dt).max(0.0).matrix();
  const VectorXd step = batch.in.t - prev.t;
  prev.x = batch.in.x - batch.v * step.asDiagonal();
  const MatrixXd F_prev = tgt.forward(prev);

  MatrixXd up = MatrixXd::Zero(model.dim(), n);
  Diagnostics diag;
  double loss = 0.0;
  Index valid = 0;
  for (Index j = 0; j < n; ++j) {
    const double t = batch.in.t(j);
    const VectorXd f = batch.in.x.col(j) - t * F.col(j);
    const VectorXd f_minus = prev.t(j) == 0.0 ? VectorXd(prev.x.col(j))
                                              : VectorXd(prev.x.col(j) - prev.t(j) * F_prev.col(j));
    const VectorXd delta = f - f_minus;
    if (!delta.allFinite()) {
      ++diag.rejected;
      continue;
    }
    const double w = weights.size() == 0 ? 1.0 : weights(j);
    VectorXd up_f;
    if (opts.distance == Distance::l2) {
      loss += w * delta.squaredNorm();
      up_f = 2.0 * w * delta;
    } else {
      const double root = std::sqrt(delta.squaredNorm() + opts.huber_c * opts.huber_c);
      loss += w * (root - opts.huber_c);
      up_f = w * delta / root;
    }
    up.col(j) = -t * up_f;
    ++valid;
  }
  if (valid > 0) {
    up /= static_cast<double>(valid);
    loss /= static_cast<double>(valid);
  }
  return finish(model, tape, up, loss, diag, valid);
}

FmBatch make_fm_batch(const MatrixXd& x0, const MatrixXd& x1, const VectorXd& t, const VectorXd& lambda) {
  if (x0.rows() != x1.rows() || x0.cols() != x1.cols() || t.size() != x0.cols() || lambda.size() != x0.cols()) {
    throw std::invalid_argument("flow matching inputs must share the batch size");
  }
  FmBatch b;
  b.in.x = x0 * (VectorXd::Ones(t.size()) - t).asDiagonal();
  b.in.x += x1 * t.asDiagonal();
  b.in.t = t;
  b.in.s = t;
  b.in.lambda = lambda;
  b.target = x1 - x0;
  return b;
}

ObjectiveGrad fm_grad(const net::MlpFlowMap& model, const FmBatch& batch) {
  const Index n = batch.in.size();
  if (n == 0 || batch.target.rows() != model.dim() || batch.target.cols() != n) {
    throw std::invalid_argument("flow matching target shape does not match the batch");
  }
  if (batch.weights.size() != 0 && batch.weights.size() != n) {
    throw std::invalid_argument("weights must be empty or one per sample");
  }
  net::Tape tape;
  const MatrixXd F = model.forward(batch.in, &tape);
  MatrixXd res = F - batch.target;
  if (batch.weights.size() != 0) {
    const MatrixXd weighted = res * batch.weights.asDiagonal();
    ObjectiveGrad out;
    out.loss = (res.array() * weighted.array()).sum() / static_cast<double>(n);
    out.grad = model.backward(tape, 2.0 * weighted / static_cast<double>(n));
    return out;
  }
  ObjectiveGrad out;
  out.loss = res.squaredNorm() / static_cast<double>(n);
  out.grad = model.backward(tape, 2.0 * res / static_cast<double>(n));
  return out;
}

ObjectiveGrad shortcut_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target,
                            const DistillBatch& batch) {
  check_distill(model, batch);
  const net::MlpFlowMap& tgt = resolve(model, target);
  const Index n = batch.in.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Flow matching term on the diagonal s = t.
  net::Batch diag_in = batch.in;
  diag_in.s = batch.in.t;
  net::Tape diag_tape;
  const MatrixXd F_diag = model.forward(diag_in, &diag_tape);
  const MatrixXd fm_res = F_diag - batch.v;
  ObjectiveGrad out;
  out.loss = fm_res.squaredNorm() * inv_n;
  out.grad = model.backward(diag_tape, 2.0 * inv_n * fm_res);

  // Self-consistency: one jump t -> s against two target half jumps.
  net::Batch half = batch.in;
  const VectorXd m = 0.5 * (batch.in.t + batch.in.s);
  half.s = m;
  const MatrixXd x_m = batch.in.x + tgt.forward(half) * (m - batch.in.t).asDiagonal();
  net::Batch second = batch.in;
  second.x = x_m;
  second.t = m;
  const MatrixXd T = x_m + tgt.forward(second) * (batch.in.s - m).asDiagonal();

  net::Tape tape;
  const MatrixXd F = model.forward(batch.in, &tape);
  MatrixXd up = MatrixXd::Zero(model.dim(), n);
  double sc_loss = 0.0;
  for (Index j = 0; j < n; ++j) {
    const double gap = batch.in.s(j) - batch.in.t(j);
    if (gap == 0.0) continue;
    const VectorXd f = batch.in.x.col(j) + gap * F.col(j);
    const VectorXd res = f - T.col(j);
    sc_loss += res.squaredNorm() / (gap * gap);
    up.col(j) = 2.0 * inv_n * res / gap;
  }
  out.loss += sc_loss * inv_n;
  out.grad.values += model.backward(tape, up).values;
  return out;
}

ObjectiveGrad meanflow_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target,
                            const DistillBatch& batch) {
  check_distill(model, batch);
  const net::MlpFlowMap& tgt = resolve(model, target);
  const Index n = batch.in.size();
  net::Tape tgt_tape, own_tape;
  const net::JvpResult jr = tgt.jvp(time_seed(batch), &tgt_tape);
  const net::Tape* used = nullptr;
  const MatrixXd F = live_forward(model, tgt, batch.in, jr, tgt_tape, own_tape, used);
  const MatrixXd regress = batch.v - jr.tangent * (batch.in.t - batch.in.s).asDiagonal();
  const MatrixXd res = F - regress;
  ObjectiveGrad out;
  out.loss = res.squaredNorm() / static_cast<double>(n);
  out.grad = model.backward(*used, 2.0 * res / static_cast<double>(n));
  return out;
}

ProbeResult regularizer_equivalence_probe(const net::MlpFlowMap& model, const DistillBatch& batch) {
  check_distill(model, batch);
  const Index n = batch.in.size();
  net::Tape tape;
  const MatrixXd F = model.forward(batch.in, &tape);
  MatrixXd up_a(model.dim(), n), up_b(model.dim(), n);
  for (Index j = 0; j < n; ++j) {
    const double gap = batch.in.t(j) - batch.in.s(j);
    const double sign = gap > 0.0 ? 1.0 : (gap < 0.0 ? -1.0 : 0.0);
    // d/df of sign(t-s) f.(v - F^-), chained through df/dF = (s - t).
    up_a.col(j) = sign * (batch.v.col(j) - F.col(j)) * (-gap);
    up_b.col(j) = 2.0 * std::abs(gap) * (F.col(j) - batch.v.col(j));
  }
  ProbeResult r;
  r.surrogate = model.backward(tape, up_a / static_cast<double>(n)).values;
  r.regularizer = model.backward(tape, up_b / static_cast<double>(n)).values;
  return r;
}

double cosine(const VectorXd& a, const VectorXd& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine of vectors of different length");
  const double den = a.norm() * b.norm();
  if (den == 0.0) return 0.0;
  return a.dot(b) / den;
}

}  // namespace ayf::objectives
