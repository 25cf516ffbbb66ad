#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace ayf {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;
};

// Bias-corrected adaptive-moment update. State is sized lazily on first use
// and must afterwards stay shape-congruent with `params`.
void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad, AdamState& state,
               double lr, const AdamConfig& cfg = {});

}  // namespace ayf
