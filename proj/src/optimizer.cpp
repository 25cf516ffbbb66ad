#include "ayf/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace ayf {

void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad, AdamState& state,
               double lr, const AdamConfig& cfg) {
  if (grad.size() != params.size()) {
    throw std::invalid_argument("adam_step: gradient size mismatch");
  }
  if (state.m.size() == 0 && state.step == 0) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameters");
  }
  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = state.m(i) / bc1;
    const double vhat = state.v(i) / bc2;
    params(i) -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace ayf
