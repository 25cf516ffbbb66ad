#include "ayf/net.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ayf/errors.hpp"
#include "ayf/optimizer.hpp"

namespace ayf::net {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Vectorized logistic; exp(-z) overflowing to inf gives exactly 0.
Eigen::ArrayXXd logistic(const MatrixXd& z) { return (1.0 + (-z.array()).exp()).inverse(); }

MatrixXd apply_silu(const MatrixXd& z) { return (z.array() * logistic(z)).matrix(); }

MatrixXd apply_silu_prime(const MatrixXd& z) {
  const Eigen::ArrayXXd s = logistic(z);
  return (s * (1.0 + z.array() * (1.0 - s))).matrix();
}

MatrixXd apply_silu_second(const MatrixXd& z) {
  const Eigen::ArrayXXd s = logistic(z);
  return (s * (1.0 - s) * (2.0 + z.array() * (1.0 - 2.0 * s))).matrix();
}

void uniform_fill(Eigen::Ref<VectorXd> out, Engine& engine, double bound) {
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out(i) = uniform(engine, -bound, bound);
  }
}

}  // namespace

double silu(double z) { return z * sigmoid(z); }

double silu_prime(double z) {
  const double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}

double silu_second(double z) {
  const double s = sigmoid(z);
  return s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s));
}

std::vector<double> default_frequency_bank() {
  std::vector<double> freqs;
  for (int k = 0; k < 8; ++k) {
    freqs.push_back(std::ldexp(std::numbers::pi, k));
  }
  return freqs;
}

// --- MlpLayout ---------------------------------------------------------------

MlpLayout::MlpLayout(std::vector<int> widths, std::size_t offset)
    : widths_(std::move(widths)), offset_(offset) {
  if (widths_.size() < 2) {
    throw std::invalid_argument("MLP needs at least an input and an output width");
  }
  std::size_t pos = offset_;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    if (widths_[l] < 1 || widths_[l + 1] < 1) {
      throw std::invalid_argument("MLP widths must be >= 1");
    }
    offsets_.push_back(pos);
    pos += static_cast<std::size_t>(widths_[l]) * widths_[l + 1] + widths_[l + 1];
  }
  size_ = pos - offset_;
}

std::size_t MlpLayout::bias_offset(int layer) const {
  const auto l = static_cast<std::size_t>(layer);
  return offsets_[l] + static_cast<std::size_t>(widths_[l]) * widths_[l + 1];
}

void MlpLayout::init(Eigen::Ref<VectorXd> params, Engine& engine, bool zero_last) const {
  for (int l = 0; l < layers(); ++l) {
    const int in = widths_[static_cast<std::size_t>(l)];
    const int out = widths_[static_cast<std::size_t>(l) + 1];
    auto w = params.segment(static_cast<Eigen::Index>(weight_offset(l)), in * out);
    auto b = params.segment(static_cast<Eigen::Index>(bias_offset(l)), out);
    if (zero_last && l == layers() - 1) {
      w.setZero();
    } else {
      uniform_fill(w, engine, std::sqrt(3.0 / in));
    }
    b.setZero();
  }
}

MatrixXd MlpLayout::forward(const VectorXd& params, const MatrixXd& in, DenseTape* tape) const {
  if (in.rows() != widths_.front()) {
    throw std::invalid_argument("MLP input width mismatch");
  }
  if (tape) {
    *tape = DenseTape{};
  }
  MatrixXd h = in;
  for (int l = 0; l < layers(); ++l) {
    const auto l_ = static_cast<std::size_t>(l);
    Eigen::Map<const RowMatrix> w(params.data() + weight_offset(l), widths_[l_ + 1], widths_[l_]);
    Eigen::Map<const VectorXd> b(params.data() + bias_offset(l), widths_[l_ + 1]);
    MatrixXd z = w * h;
    z.colwise() += b;
    if (tape) {
      tape->inputs.push_back(std::move(h));
    }
    if (l + 1 < layers()) {
      h = apply_silu(z);
      if (tape) {
        tape->pre.push_back(std::move(z));
      }
    } else {
      h = std::move(z);
    }
  }
  return h;
}

std::pair<MatrixXd, MatrixXd> MlpLayout::jvp(const VectorXd& params, const MatrixXd& in,
                                             const MatrixXd& in_dot, DenseTape* tape) const {
  if (in.rows() != widths_.front() || in_dot.rows() != in.rows() || in_dot.cols() != in.cols()) {
    throw std::invalid_argument("MLP JVP shape mismatch");
  }
  if (tape) {
    *tape = DenseTape{};
    tape->has_dots = true;
  }
  MatrixXd h = in;
  MatrixXd hd = in_dot;
  for (int l = 0; l < layers(); ++l) {
    const auto l_ = static_cast<std::size_t>(l);
    Eigen::Map<const RowMatrix> w(params.data() + weight_offset(l), widths_[l_ + 1], widths_[l_]);
    Eigen::Map<const VectorXd> b(params.data() + bias_offset(l), widths_[l_ + 1]);
    MatrixXd z = w * h;
    z.colwise() += b;
    MatrixXd zd = w * hd;
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->input_dots.push_back(std::move(hd));
    }
    if (l + 1 < layers()) {
      h = apply_silu(z);
      hd = apply_silu_prime(z).cwiseProduct(zd);
      if (tape) {
        tape->pre.push_back(std::move(z));
        tape->pre_dots.push_back(std::move(zd));
      }
    } else {
      h = std::move(z);
      hd = std::move(zd);
    }
  }
  return {std::move(h), std::move(hd)};
}

MatrixXd MlpLayout::backward(const VectorXd& params, const DenseTape& tape,
                             const MatrixXd& upstream, VectorXd* grad) const {
  if (static_cast<int>(tape.inputs.size()) != layers()) {
    throw InvalidState("MLP tape does not match the layout");
  }
  MatrixXd delta = upstream;
  for (int l = layers() - 1; l >= 0; --l) {
    const auto l_ = static_cast<std::size_t>(l);
    const int in = widths_[l_];
    const int out = widths_[l_ + 1];
    Eigen::Map<const RowMatrix> w(params.data() + weight_offset(l), out, in);
    if (grad) {
      Eigen::Map<RowMatrix> gw(grad->data() + weight_offset(l), out, in);
      Eigen::Map<VectorXd> gb(grad->data() + bias_offset(l), out);
      gw.noalias() += delta * tape.inputs[l_].transpose();
      gb.noalias() += delta.rowwise().sum();
    }
    MatrixXd a = w.transpose() * delta;
    if (l == 0) {
      return a;
    }
    delta = a.cwiseProduct(apply_silu_prime(tape.pre[l_ - 1]));
  }
  return delta;
}

std::pair<MatrixXd, MatrixXd> MlpLayout::backward_dual(const VectorXd& params, const DenseTape& tape,
                                                       const MatrixXd& up_out,
                                                       const MatrixXd& up_out_dot,
                                                       VectorXd* grad) const {
  if (!tape.has_dots || static_cast<int>(tape.inputs.size()) != layers()) {
    throw InvalidState("dual reverse pass needs a JVP tape");
  }
  MatrixXd a_z = up_out;
  MatrixXd a_zd = up_out_dot;
  for (int l = layers() - 1; l >= 0; --l) {
    const auto l_ = static_cast<std::size_t>(l);
    const int in = widths_[l_];
    const int out = widths_[l_ + 1];
    Eigen::Map<const RowMatrix> w(params.data() + weight_offset(l), out, in);
    if (grad) {
      Eigen::Map<RowMatrix> gw(grad->data() + weight_offset(l), out, in);
      Eigen::Map<VectorXd> gb(grad->data() + bias_offset(l), out);
      gw.noalias() += a_z * tape.inputs[l_].transpose();
      gw.noalias() += a_zd * tape.input_dots[l_].transpose();
      gb.noalias() += a_z.rowwise().sum();
    }
    MatrixXd a_h = w.transpose() * a_z;
    MatrixXd a_hd = w.transpose() * a_zd;
    if (l == 0) {
      return {std::move(a_h), std::move(a_hd)};
    }
    const MatrixXd& z = tape.pre[l_ - 1];
    const MatrixXd& zd = tape.pre_dots[l_ - 1];
    const MatrixXd sp = apply_silu_prime(z);
    a_zd = a_hd.cwiseProduct(sp);
    a_z = a_h.cwiseProduct(sp) + a_hd.cwiseProduct(apply_silu_second(z)).cwiseProduct(zd);
  }
  return {a_z, a_zd};
}

std::pair<std::size_t, std::size_t> MlpLayout::last_layer_range() const {
  const int l = layers() - 1;
  return {weight_offset(l), offset_ + size_};
}

// --- FourierEmbedding --------------------------------------------------------

FourierEmbedding::FourierEmbedding(std::vector<double> freqs, int width, std::size_t offset,
                                   TimeParam param)
    : freqs_(std::move(freqs)), width_(width), offset_(offset), param_(param) {
  if (freqs_.empty() || width_ < 1) {
    throw std::invalid_argument("Fourier embedding needs frequencies and width >= 1");
  }
}

std::size_t FourierEmbedding::size() const {
  return static_cast<std::size_t>(width_) * (2 * freqs_.size() + 1);
}

void FourierEmbedding::init(Eigen::Ref<VectorXd> params, Engine& engine) const {
  const auto k2 = static_cast<Eigen::Index>(2 * freqs_.size());
  uniform_fill(params.segment(static_cast<Eigen::Index>(offset_), width_ * k2), engine,
               std::sqrt(3.0 / static_cast<double>(k2)));
  params.segment(static_cast<Eigen::Index>(offset_) + width_ * k2, width_).setZero();
}

void FourierEmbedding::features(const VectorXd& u, MatrixXd& phi, MatrixXd& dphi) const {
  const auto k = static_cast<Eigen::Index>(freqs_.size());
  phi.resize(2 * k, u.size());
  dphi.resize(2 * k, u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    double c = u(j);
    double dc = 1.0;
    if (param_ == TimeParam::log_sigma) {
      if (!(u(j) > 0.0 && u(j) < 1.0)) {
        throw std::invalid_argument("log-sigma embedding needs t in (0, 1)");
      }
      c = std::log(u(j) / (1.0 - u(j)));
      dc = 1.0 / (u(j) * (1.0 - u(j)));
    }
    for (Eigen::Index i = 0; i < k; ++i) {
      const double w = freqs_[static_cast<std::size_t>(i)];
      const double sn = std::sin(w * c);
      const double cs = std::cos(w * c);
      phi(i, j) = sn;
      phi(k + i, j) = cs;
      dphi(i, j) = w * cs * dc;
      dphi(k + i, j) = -w * sn * dc;
    }
  }
}

MatrixXd FourierEmbedding::forward(const VectorXd& params, const VectorXd& u, EmbedTape* tape) const {
  MatrixXd phi, dphi;
  features(u, phi, dphi);
  const auto k2 = static_cast<Eigen::Index>(2 * freqs_.size());
  Eigen::Map<const RowMatrix> p(params.data() + offset_, width_, k2);
  Eigen::Map<const VectorXd> b(params.data() + offset_ + static_cast<std::size_t>(width_ * k2), width_);
  MatrixXd out = p * phi;
  out.colwise() += b;
  if (tape) {
    tape->features = std::move(phi);
    tape->dfeatures = std::move(dphi);
  }
  return out;
}

std::pair<MatrixXd, MatrixXd> FourierEmbedding::jvp(const VectorXd& params, const VectorXd& u,
                                                    const VectorXd& u_dot, EmbedTape* tape) const {
  if (u_dot.size() != u.size()) {
    throw std::invalid_argument("embedding JVP seed size mismatch");
  }
  MatrixXd phi, dphi;
  features(u, phi, dphi);
  const auto k2 = static_cast<Eigen::Index>(2 * freqs_.size());
  Eigen::Map<const RowMatrix> p(params.data() + offset_, width_, k2);
  Eigen::Map<const VectorXd> b(params.data() + offset_ + static_cast<std::size_t>(width_ * k2), width_);
  MatrixXd out = p * phi;
  out.colwise() += b;
  MatrixXd out_dot = p * (dphi * u_dot.asDiagonal());
  if (tape) {
    tape->features = std::move(phi);
    tape->dfeatures = std::move(dphi);
  }
  return {std::move(out), std::move(out_dot)};
}

VectorXd FourierEmbedding::backward(const VectorXd& params, const EmbedTape& tape,
                                    const MatrixXd& upstream, VectorXd* grad) const {
  const auto k2 = static_cast<Eigen::Index>(2 * freqs_.size());
  if (tape.features.rows() != k2 || tape.features.cols() != upstream.cols() ||
      upstream.rows() != width_) {
    throw InvalidState("embedding tape does not match the upstream");
  }
  Eigen::Map<const RowMatrix> p(params.data() + offset_, width_, k2);
  if (grad) {
    Eigen::Map<RowMatrix> gp(grad->data() + offset_, width_, k2);
    Eigen::Map<VectorXd> gb(grad->data() + offset_ + static_cast<std::size_t>(width_ * k2), width_);
    gp.noalias() += upstream * tape.features.transpose();
    gb.noalias() += upstream.rowwise().sum();
  }
  return (upstream.cwiseProduct(p * tape.dfeatures)).colwise().sum().transpose();
}

// --- MlpFlowMap --------------------------------------------------------------

MlpFlowMap::MlpFlowMap(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.dim < 1 || spec_.classes < 0 || spec_.embed_width < 1 || spec_.freqs.empty()) {
    throw std::invalid_argument("invalid model spec");
  }
  const auto e = static_cast<std::size_t>(spec_.embed_width);
  const std::size_t emb_size = e * (2 * spec_.freqs.size() + 1);
  emb_t_ = FourierEmbedding(spec_.freqs, spec_.embed_width, 0);
  emb_s_ = FourierEmbedding(spec_.freqs, spec_.embed_width, emb_size);
  emb_lambda_ = FourierEmbedding(spec_.freqs, spec_.embed_width, 2 * emb_size);
  std::vector<int> widths{spec_.input_width()};
  widths.insert(widths.end(), spec_.hidden.begin(), spec_.hidden.end());
  widths.push_back(spec_.dim);
  trunk_ = MlpLayout(widths, 3 * emb_size);
  params_ = VectorXd::Zero(static_cast<Eigen::Index>(3 * emb_size + trunk_.size()));

  Engine engine = make_stream(seed, 0);
  emb_t_.init(params_, engine);
  emb_s_.init(params_, engine);
  emb_lambda_.init(params_, engine);
  trunk_.init(params_, engine, /*zero_last=*/true);
}

VectorXd& MlpFlowMap::mutable_params() {
  ++version_;
  return params_;
}

void MlpFlowMap::set_params(const VectorXd& p) {
  if (p.size() != params_.size()) {
    throw std::invalid_argument("parameter vector size mismatch");
  }
  ++version_;
  params_ = p;
}

void MlpFlowMap::check_batch(const Batch& batch) const {
  const Eigen::Index n = batch.x.cols();
  if (batch.x.rows() != spec_.dim || batch.t.size() != n || batch.s.size() != n ||
      batch.lambda.size() != n) {
    throw std::invalid_argument("flow-map batch shape mismatch");
  }
  if (!batch.labels.empty() && batch.labels.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("flow-map batch label count mismatch");
  }
  for (int label : batch.labels) {
    if (label >= spec_.classes) {
      throw std::invalid_argument("label out of range for this model");
    }
  }
}

MatrixXd MlpFlowMap::assemble(const Batch& batch, const MatrixXd& et, const MatrixXd& es,
                              const MatrixXd& el) const {
  const Eigen::Index n = batch.x.cols();
  const int d = spec_.dim;
  const int e = spec_.embed_width;
  MatrixXd h(spec_.input_width(), n);
  h.topRows(d) = batch.x;
  h.middleRows(d, e) = et;
  h.middleRows(d + e, e) = es;
  h.middleRows(d + 2 * e, e) = el;
  if (spec_.classes > 0) {
    auto onehot = h.bottomRows(spec_.classes);
    onehot.setZero();
    for (std::size_t j = 0; j < batch.labels.size(); ++j) {
      if (batch.labels[j] >= 0) {
        onehot(batch.labels[j], static_cast<Eigen::Index>(j)) = 1.0;
      }
    }
  }
  return h;
}

MatrixXd MlpFlowMap::forward(const Batch& batch, Tape* tape) const {
  check_batch(batch);
  const MatrixXd et = emb_t_.forward(params_, batch.t, tape ? &tape->emb_t : nullptr);
  const MatrixXd es = emb_s_.forward(params_, batch.s, tape ? &tape->emb_s : nullptr);
  const MatrixXd el = emb_lambda_.forward(params_, batch.lambda, tape ? &tape->emb_lambda : nullptr);
  MatrixXd out = trunk_.forward(params_, assemble(batch, et, es, el), tape ? &tape->trunk : nullptr);
  if (tape) {
    tape->owner = this;
    tape->version = version_;
    tape->batch = batch.size();
  }
  return out;
}

VectorXd MlpFlowMap::forward(const VectorXd& x, double t, double s, double lambda, int label) const {
  Batch b;
  b.x = x;
  b.t = VectorXd::Constant(1, t);
  b.s = VectorXd::Constant(1, s);
  b.lambda = VectorXd::Constant(1, lambda);
  if (label >= 0) {
    b.labels = {label};
  }
  return forward(b).col(0);
}

JvpResult MlpFlowMap::jvp(const DualBatch& dual, Tape* tape) const {
  const Batch& b = dual.primal;
  check_batch(b);
  const Eigen::Index n = b.size();
  if (dual.x_dot.rows() != b.x.rows() || dual.x_dot.cols() != n || dual.t_dot.size() != n ||
      dual.s_dot.size() != n || (dual.lambda_dot.size() != 0 && dual.lambda_dot.size() != n)) {
    throw std::invalid_argument("JVP seed shape mismatch");
  }
  const VectorXd ld = dual.lambda_dot.size() == 0 ? VectorXd::Zero(n) : dual.lambda_dot;
  auto [et, etd] = emb_t_.jvp(params_, b.t, dual.t_dot, tape ? &tape->emb_t : nullptr);
  auto [es, esd] = emb_s_.jvp(params_, b.s, dual.s_dot, tape ? &tape->emb_s : nullptr);
  auto [el, eld] = emb_lambda_.jvp(params_, b.lambda, ld, tape ? &tape->emb_lambda : nullptr);
  const MatrixXd h = assemble(b, et, es, el);
  MatrixXd hd = MatrixXd::Zero(h.rows(), n);
  const int d = spec_.dim;
  const int e = spec_.embed_width;
  hd.topRows(d) = dual.x_dot;
  hd.middleRows(d, e) = etd;
  hd.middleRows(d + e, e) = esd;
  hd.middleRows(d + 2 * e, e) = eld;
  auto [value, tangent] = trunk_.jvp(params_, h, hd, tape ? &tape->trunk : nullptr);
  if (tape) {
    tape->owner = this;
    tape->version = version_;
    tape->batch = n;
  }
  return {std::move(value), std::move(tangent)};
}

void MlpFlowMap::check_tape(const Tape& tape, const MatrixXd& upstream) const {
  if (tape.owner != this || tape.version != version_) {
    throw InvalidState("stale tape: parameters changed since the forward pass");
  }
  if (upstream.rows() != spec_.dim || upstream.cols() != tape.batch) {
    throw std::invalid_argument("upstream shape does not match the recorded batch");
  }
}

MatrixXd MlpFlowMap::input_adjoint(const Tape& tape, const MatrixXd& upstream, VectorXd* grad) const {
  check_tape(tape, upstream);
  return trunk_.backward(params_, tape.trunk, upstream, grad);
}

ParamGrad MlpFlowMap::backward(const Tape& tape, const MatrixXd& upstream) const {
  ParamGrad g{VectorXd::Zero(params_.size())};
  const MatrixXd a = input_adjoint(tape, upstream, &g.values);
  const int d = spec_.dim;
  const int e = spec_.embed_width;
  emb_t_.backward(params_, tape.emb_t, a.middleRows(d, e), &g.values);
  emb_s_.backward(params_, tape.emb_s, a.middleRows(d + e, e), &g.values);
  emb_lambda_.backward(params_, tape.emb_lambda, a.middleRows(d + 2 * e, e), &g.values);
  return g;
}

InputGrad MlpFlowMap::input_vjp(const Tape& tape, const MatrixXd& upstream) const {
  const MatrixXd a = input_adjoint(tape, upstream, nullptr);
  const int d = spec_.dim;
  const int e = spec_.embed_width;
  InputGrad out;
  out.x = a.topRows(d);
  out.t = emb_t_.backward(params_, tape.emb_t, a.middleRows(d, e), nullptr);
  out.s = emb_s_.backward(params_, tape.emb_s, a.middleRows(d + e, e), nullptr);
  out.lambda = emb_lambda_.backward(params_, tape.emb_lambda, a.middleRows(d + 2 * e, e), nullptr);
  return out;
}

// --- Discriminator -----------------------------------------------------------

Discriminator::Discriminator(int dim, std::vector<int> hidden, std::uint64_t seed) : dim_(dim) {
  if (dim < 1) {
    throw std::invalid_argument("discriminator dim must be >= 1");
  }
  std::vector<int> widths{dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  layout_ = MlpLayout(widths, 0);
  params_ = VectorXd::Zero(static_cast<Eigen::Index>(layout_.size()));
  Engine engine = make_stream(seed, 0);
  layout_.init(params_, engine, /*zero_last=*/false);
}

VectorXd Discriminator::forward(const MatrixXd& x, DenseTape* tape) const {
  return layout_.forward(params_, x, tape).row(0).transpose();
}

ParamGrad Discriminator::backward(const DenseTape& tape, const VectorXd& upstream) const {
  ParamGrad g{VectorXd::Zero(params_.size())};
  layout_.backward(params_, tape, upstream.transpose(), &g.values);
  return g;
}

MatrixXd Discriminator::input_grad(const MatrixXd& x) const {
  DenseTape tape;
  layout_.forward(params_, x, &tape);
  return layout_.backward(params_, tape, MatrixXd::Ones(1, x.cols()), nullptr);
}

Discriminator::Penalty Discriminator::penalty(const MatrixXd& x, const VectorXd& coeff) const {
  if (coeff.size() != x.cols()) {
    throw std::invalid_argument("penalty coefficient count mismatch");
  }
  const MatrixXd g = input_grad(x);
  DenseTape tape;
  layout_.jvp(params_, x, g, &tape);
  Penalty out;
  out.sq_norms = g.colwise().squaredNorm().transpose();
  out.grad.values = VectorXd::Zero(params_.size());
  layout_.backward_dual(params_, tape, MatrixXd::Zero(1, x.cols()), 2.0 * coeff.transpose(),
                        &out.grad.values);
  return out;
}

// --- time-embedding alignment ------------------------------------------------

TimeEmbedding::TimeEmbedding(std::vector<double> freqs, int width, TimeParam param,
                             std::uint64_t seed)
    : layout(std::move(freqs), width, 0, param) {
  params = VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
  Engine engine = make_stream(seed, 0);
  layout.init(params, engine);
}

AlignReport align_embedding(TimeEmbedding& fresh, const TimeEmbedding& original,
                            const AlignOptions& opts) {
  if (fresh.layout.width() != original.layout.width()) {
    throw std::invalid_argument("embeddings must share output width");
  }
  if (opts.iterations < 0 || opts.batch < 1 || opts.checkpoint_every < 1 || opts.heldout_points < 1 ||
      !(opts.delta > 0.0 && opts.delta < 0.5)) {
    throw std::invalid_argument("invalid alignment options");
  }
  const double lo = opts.delta;
  const double hi = 1.0 - opts.delta;
  VectorXd grid(opts.heldout_points);
  for (int i = 0; i < opts.heldout_points; ++i) {
    grid(i) = lo + (hi - lo) * (i + 0.5) / opts.heldout_points;
  }
  const MatrixXd grid_target = original.eval(grid);
  auto heldout = [&] {
    return (fresh.eval(grid) - grid_target).colwise().squaredNorm().mean();
  };

  AlignReport report;
  report.initial_mse = heldout();
  report.checkpoint_mse.push_back(report.initial_mse);

  Engine engine = make_stream(opts.seed, 1);
  AdamState state;
  VectorXd t(opts.batch);
  for (int it = 1; it <= opts.iterations; ++it) {
    for (int j = 0; j < opts.batch; ++j) {
      t(j) = uniform(engine, lo, hi);
    }
    EmbedTape tape;
    const MatrixXd diff = fresh.layout.forward(fresh.params, t, &tape) - original.eval(t);
    const double loss = diff.colwise().squaredNorm().mean();
    if (!std::isfinite(loss)) {
      throw DivergenceError("embedding alignment produced a non-finite loss");
    }
    VectorXd grad = VectorXd::Zero(fresh.params.size());
    fresh.layout.backward(fresh.params, tape, (2.0 / opts.batch) * diff, &grad);
    // Linear decay keeps the late checkpoints from oscillating.
    const double lr = opts.lr * (1.0 - static_cast<double>(it - 1) / opts.iterations);
    adam_step(fresh.params, grad, state, lr);
    if (it % opts.checkpoint_every == 0 || it == opts.iterations) {
      report.checkpoint_mse.push_back(heldout());
    }
  }
  report.final_mse = report.checkpoint_mse.back();
  return report;
}

}  // namespace ayf::net
