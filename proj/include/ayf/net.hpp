#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ayf/rng.hpp"

// Tiny MLP student F(x, t, s, lambda) with reverse-mode parameter gradients
// and forward-mode (dual-number) JVPs. Parameters live in one flat vector
// owned by the model; layouts below are stateless views at fixed offsets.
namespace ayf::net {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// SiLU and its first two derivatives.
double silu(double z);
double silu_prime(double z);
double silu_second(double z);

// {2^0, ..., 2^7} * pi.
std::vector<double> default_frequency_bank();

// Activations recorded by MlpLayout for a reverse pass.
struct DenseTape {
  std::vector<Eigen::MatrixXd> inputs;      // input to each affine layer
  std::vector<Eigen::MatrixXd> pre;         // pre-activation of each hidden layer
  std::vector<Eigen::MatrixXd> input_dots;  // JVP tangents, when recorded
  std::vector<Eigen::MatrixXd> pre_dots;
  bool has_dots = false;
};

// Affine layers with SiLU between them and a linear output layer.
class MlpLayout {
 public:
  MlpLayout() = default;
  MlpLayout(std::vector<int> widths, std::size_t offset);

  const std::vector<int>& widths() const { return widths_; }
  std::size_t offset() const { return offset_; }
  std::size_t size() const { return size_; }
  int layers() const { return static_cast<int>(widths_.size()) - 1; }

  // Scaled-uniform init, bound sqrt(3 / fan_in); biases zero.
  void init(Eigen::Ref<Eigen::VectorXd> params, Engine& engine, bool zero_last) const;

  Eigen::MatrixXd forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& in,
                          DenseTape* tape = nullptr) const;
  // Returns (value, tangent).
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> jvp(const Eigen::VectorXd& params,
                                                  const Eigen::MatrixXd& in,
                                                  const Eigen::MatrixXd& in_dot,
                                                  DenseTape* tape = nullptr) const;

  // Accumulates d<upstream, out>/dparams into `grad` (if non-null) and
  // returns the input adjoint.
  Eigen::MatrixXd backward(const Eigen::VectorXd& params, const DenseTape& tape,
                           const Eigen::MatrixXd& upstream, Eigen::VectorXd* grad) const;

  // Reverse pass through the JVP graph: given adjoints of (out, out_dot)
  // accumulates parameter gradients and returns adjoints of (in, in_dot).
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> backward_dual(const Eigen::VectorXd& params,
                                                            const DenseTape& tape,
                                                            const Eigen::MatrixXd& up_out,
                                                            const Eigen::MatrixXd& up_out_dot,
                                                            Eigen::VectorXd* grad) const;

  // [begin, end) of the final affine layer inside the flat vector.
  std::pair<std::size_t, std::size_t> last_layer_range() const;

 private:
  std::size_t weight_offset(int layer) const { return offsets_[static_cast<std::size_t>(layer)]; }
  std::size_t bias_offset(int layer) const;

  std::vector<int> widths_;
  std::vector<std::size_t> offsets_;
  std::size_t offset_ = 0;
  std::size_t size_ = 0;
};

// How a time value is turned into the Fourier phase.
enum class TimeParam { linear, log_sigma };

struct EmbedTape {
  Eigen::MatrixXd features;  // [sin; cos] of omega * c_noise(u)
  Eigen::MatrixXd dfeatures; // d features / du
};

// Fixed-bank Fourier features of c_noise(u) followed by a learnable affine
// projection to `width` outputs. c_noise is u itself (linear) or
// log(u / (1 - u)) (log_sigma).
class FourierEmbedding {
 public:
  FourierEmbedding() = default;
  FourierEmbedding(std::vector<double> freqs, int width, std::size_t offset,
                   TimeParam param = TimeParam::linear);

  const std::vector<double>& freqs() const { return freqs_; }
  int width() const { return width_; }
  TimeParam param() const { return param_; }
  std::size_t offset() const { return offset_; }
  std::size_t size() const;

  void init(Eigen::Ref<Eigen::VectorXd> params, Engine& engine) const;

  Eigen::MatrixXd forward(const Eigen::VectorXd& params, const Eigen::VectorXd& u,
                          EmbedTape* tape = nullptr) const;
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> jvp(const Eigen::VectorXd& params,
                                                  const Eigen::VectorXd& u,
                                                  const Eigen::VectorXd& u_dot,
                                                  EmbedTape* tape = nullptr) const;
  // Accumulates parameter gradients; returns d<upstream, emb>/du per sample.
  Eigen::VectorXd backward(const Eigen::VectorXd& params, const EmbedTape& tape,
                           const Eigen::MatrixXd& upstream, Eigen::VectorXd* grad) const;

 private:
  void features(const Eigen::VectorXd& u, Eigen::MatrixXd& phi, Eigen::MatrixXd& dphi) const;

  std::vector<double> freqs_;
  int width_ = 0;
  std::size_t offset_ = 0;
  TimeParam param_ = TimeParam::linear;
};

struct ModelSpec {
  int dim = 2;
  int classes = 0;  // one-hot label features; 0 disables conditioning
  std::vector<int> hidden{128, 128, 128};
  int embed_width = 16;
  std::vector<double> freqs = default_frequency_bank();

  int input_width() const { return dim + 3 * embed_width + classes; }
};

// A batch of network inputs; columns are samples.
struct Batch {
  Eigen::MatrixXd x;
  Eigen::VectorXd t;
  Eigen::VectorXd s;
  Eigen::VectorXd lambda;
  std::vector<int> labels;  // empty, or one per sample (-1 = unconditional)

  Eigen::Index size() const { return x.cols(); }
};

// Primal batch plus a same-shape directional seed.
struct DualBatch {
  Batch primal;
  Eigen::MatrixXd x_dot;
  Eigen::VectorXd t_dot;
  Eigen::VectorXd s_dot;
  Eigen::VectorXd lambda_dot;  // may be empty (treated as zero)
};

struct Tape {
  DenseTape trunk;
  EmbedTape emb_t, emb_s, emb_lambda;
  const void* owner = nullptr;
  std::uint64_t version = 0;
  Eigen::Index batch = 0;
};

struct ParamGrad {
  Eigen::VectorXd values;

  double norm() const { return values.norm(); }
};

struct JvpResult {
  Eigen::MatrixXd value;
  Eigen::MatrixXd tangent;
};

struct InputGrad {
  Eigen::MatrixXd x;
  Eigen::VectorXd t, s, lambda;
};

class MlpFlowMap {
 public:
  MlpFlowMap(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }
  std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }

  const Eigen::VectorXd& params() const { return params_; }
  // Any mutable access invalidates outstanding tapes.
  Eigen::VectorXd& mutable_params();
  void set_params(const Eigen::VectorXd& p);
  std::uint64_t version() const { return version_; }

  Eigen::MatrixXd forward(const Batch& batch, Tape* tape = nullptr) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& x, double t, double s, double lambda = 1.0,
                          int label = -1) const;

  JvpResult jvp(const DualBatch& dual, Tape* tape = nullptr) const;

  // Gradient of sum_j <upstream_j, F_j> w.r.t. every parameter.
  ParamGrad backward(const Tape& tape, const Eigen::MatrixXd& upstream) const;
  // Gradient of the same inner product w.r.t. the inputs (x, t, s, lambda).
  InputGrad input_vjp(const Tape& tape, const Eigen::MatrixXd& upstream) const;

  std::pair<std::size_t, std::size_t> last_layer_range() const { return trunk_.last_layer_range(); }

  const FourierEmbedding& time_embedding() const { return emb_t_; }

 private:
  void check_batch(const Batch& batch) const;
  Eigen::MatrixXd assemble(const Batch& batch, const Eigen::MatrixXd& et, const Eigen::MatrixXd& es,
                           const Eigen::MatrixXd& el) const;
  void check_tape(const Tape& tape, const Eigen::MatrixXd& upstream) const;
  Eigen::MatrixXd input_adjoint(const Tape& tape, const Eigen::MatrixXd& upstream,
                                Eigen::VectorXd* grad) const;

  ModelSpec spec_;
  FourierEmbedding emb_t_, emb_s_, emb_lambda_;
  MlpLayout trunk_;
  Eigen::VectorXd params_;
  std::uint64_t version_ = 0;
};

// Scalar-output MLP critic over points.
class Discriminator {
 public:
  Discriminator(int dim, std::vector<int> hidden, std::uint64_t seed);

  int dim() const { return dim_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& mutable_params() { return params_; }

  Eigen::VectorXd forward(const Eigen::MatrixXd& x, DenseTape* tape = nullptr) const;
  // Gradient of sum_j upstream_j D(x_j) w.r.t. parameters.
  ParamGrad backward(const DenseTape& tape, const Eigen::VectorXd& upstream) const;
  // Columns are grad_x D(x_j).
  Eigen::MatrixXd input_grad(const Eigen::MatrixXd& x) const;

  struct Penalty {
    Eigen::VectorXd sq_norms;  // ||grad_x D(x_j)||^2
    ParamGrad grad;            // d/dparams sum_j coeff_j ||grad_x D(x_j)||^2
  };
  // Differentiates the input-gradient norm by reverse-mode through the JVP
  // of D along its own input gradient.
  Penalty penalty(const Eigen::MatrixXd& x, const Eigen::VectorXd& coeff) const;

 private:
  int dim_;
  MlpLayout layout_;
  Eigen::VectorXd params_;
};

// A standalone learnable time embedding (parameters owned).
struct TimeEmbedding {
  FourierEmbedding layout;
  Eigen::VectorXd params;

  TimeEmbedding(std::vector<double> freqs, int width, TimeParam param, std::uint64_t seed);
  Eigen::MatrixXd eval(const Eigen::VectorXd& t) const { return layout.forward(params, t); }
};

struct AlignOptions {
  int iterations = 2000;
  int batch = 256;
  double lr = 1e-2;
  double delta = 1e-3;  // t sampled on [delta, 1 - delta]
  int checkpoint_every = 200;
  int heldout_points = 1000;
  std::uint64_t seed = 0;
};

struct AlignReport {
  double initial_mse = 0.0;
  double final_mse = 0.0;
  std::vector<double> checkpoint_mse;  // held-out MSE at each checkpoint, in order
};

// Trains `fresh` so that fresh(t) ~ original(t) on interior times, where the
// original consumes its own c_noise (typically log sigma_t).
AlignReport align_embedding(TimeEmbedding& fresh, const TimeEmbedding& original,
                            const AlignOptions& opts = {});

}  // namespace ayf::net
