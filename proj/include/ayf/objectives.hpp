#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "ayf/net.hpp"
#include "ayf/teachers.hpp"

// Training objectives as (loss, parameter gradient) producers. Every loss
// is differentiated only through the live model; `target` plays the
// stopgrad copy theta^- and defaults to the live model itself.
namespace ayf::objectives {

enum class Weighting { inverse_square, uniform };

Weighting parse_weighting(const std::string& name);
std::string to_string(Weighting w);

struct EmdConfig {
  double c_norm = 0.1;
  double H = 10000.0;
  double r_max = 0.99;
  Weighting weighting = Weighting::inverse_square;
  bool normalize = true;

  void validate() const;
};

// r = min(r_max, iter / H).
double warmup_r(std::int64_t iter, const EmdConfig& cfg);

// Per-sample weight of the F-space losses: w(t, s) * (t - s)^2, where
// w = 1/|t-s|^2 (inverse_square) or 1 (uniform).
double pair_weight(double t, double s, Weighting w);

struct Diagnostics {
  double raw_tangent_norm_mean = 0.0;
  double normalized_tangent_norm_mean = 0.0;
  double r = 0.0;
  int rejected = 0;
};

struct ObjectiveGrad {
  double loss = 0.0;
  net::ParamGrad grad;
  Diagnostics diag;
};

// Network inputs at (x_t, t, s, lambda) plus the guided teacher velocity v
// at (x_t, t).
struct DistillBatch {
  net::Batch in;
  Eigen::MatrixXd v;
};

ObjectiveGrad emd_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target,
                       const DistillBatch& batch, std::int64_t iter, const EmdConfig& cfg,
                       std::optional<double> r_override = std::nullopt);

// s = 0 specialization written in consistency-model form f = x - t F.
ObjectiveGrad continuous_cm_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target,
                                 const DistillBatch& batch, std::int64_t iter, const EmdConfig& cfg,
                                 std::optional<double> r_override = std::nullopt);

// d f / d s residual against the teacher at the model's own output. The
// teacher is evaluated at max(s, s_min).
ObjectiveGrad lmd_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target,
                       const teachers::GuidedTeacher& teacher, const DistillBatch& batch,
                       const EmdConfig& cfg, double s_min = 1e-3);

enum class Distance { l2, pseudo_huber };

struct DiscreteCmOptions {
  double dt = 1e-3;
  Distance distance = Distance::l2;
  double huber_c = 0.03;
};

// Consistency loss between f(x_t, t) and f^-(x_{t - dt}, t - dt), with
// x_{t - dt} from one Euler step of the teacher. `weights` is empty or one
// per sample.
ObjectiveGrad discrete_cm_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target,
                               const DistillBatch& batch, const DiscreteCmOptions& opts,
                               const Eigen::VectorXd& weights = {});

struct FmBatch {
  net::Batch in;             // s == t
  Eigen::MatrixXd target;
  Eigen::VectorXd weights;   // empty means 1
};

// x_t = (1 - t) x0 + t x1 with target x1 - x0.
FmBatch make_fm_batch(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& x1, const Eigen::VectorXd& t,
                      const Eigen::VectorXd& lambda);

ObjectiveGrad fm_grad(const net::MlpFlowMap& model, const FmBatch& batch);

// Flow matching at s = t plus two-half-step self-consistency.
ObjectiveGrad shortcut_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target,
                            const DistillBatch& batch);

// Regression onto v - (t - s) dF^-/dt.
ObjectiveGrad meanflow_grad(const net::MlpFlowMap& model, const net::MlpFlowMap* target,
                            const DistillBatch& batch);

struct ProbeResult {
  Eigen::VectorXd surrogate;   // r = 0 surrogate sign(t-s) f^T (v - F^-)
  Eigen::VectorXd regularizer; // |t - s| * ||F - v||^2
};

ProbeResult regularizer_equivalence_probe(const net::MlpFlowMap& model, const DistillBatch& batch);

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace ayf::objectives
