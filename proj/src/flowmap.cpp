#include "ayf/flowmap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ayf/rng.hpp"

namespace ayf::flowmap {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_pair(TimePair p) {
  if (!std::isfinite(p.t) || !std::isfinite(p.s) || p.t < 0.0 || p.t > 1.0 || p.s < 0.0 || p.s > 1.0) {
    throw std::invalid_argument("time pair must lie in [0, 1]");
  }
  if (p.s > p.t) {
    throw std::invalid_argument("samplers only step in the generation direction (s <= t)");
  }
}

std::span<const int> chunk_labels(const SamplerOptions& opts, std::size_t begin, std::size_t count) {
  if (opts.labels.empty()) {
    return {};
  }
  return std::span<const int>(opts.labels).subspan(begin, count);
}

void check_options(const SamplerOptions& opts, std::size_t chains) {
  if (!opts.labels.empty() && opts.labels.size() != chains) {
    throw std::invalid_argument("sampler labels must be empty or one per chain");
  }
  if (!(opts.sigma_d > 0.0) || !std::isfinite(opts.sigma_d)) {
    throw std::invalid_argument("sigma_d must be > 0");
  }
}

// Shared driver: `renoise(x_hat, s, engine)` maps the jump result at each
// non-final transition to x_s.
template <typename Step>
MatrixXd run_chunks(const FlowMap& model, const SamplerSchedule& schedule, std::size_t chains,
                    const SamplerOptions& opts, Step step) {
  if (chains == 0) {
    throw std::invalid_argument("need at least one chain");
  }
  check_options(opts, chains);
  const int dim = model.dim();
  MatrixXd out(dim, static_cast<Eigen::Index>(chains));
  const std::size_t chunks = (chains + kChunkSize - 1) / kChunkSize;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = c * kChunkSize;
    const std::size_t count = std::min(kChunkSize, chains - begin);
    Engine engine = make_stream(schedule.seed(), c);
    MatrixXd x(dim, static_cast<Eigen::Index>(count));
    fill_normal(x, engine, opts.sigma_d);
    const auto labels = chunk_labels(opts, begin, count);
    const auto& ts = schedule.timesteps();
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
      x = step(x, ts[i], ts[i + 1], labels, engine);
    }
    out.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) = x;
  }
  return out;
}

}  // namespace

MatrixXd apply(const net::MlpFlowMap& model, const MatrixXd& x, TimePair pair, double lambda,
               std::span<const int> labels) {
  check_pair(pair);
  if (pair.s == pair.t) {
    return x;
  }
  net::Batch b;
  b.x = x;
  b.t = VectorXd::Constant(x.cols(), pair.t);
  b.s = VectorXd::Constant(x.cols(), pair.s);
  b.lambda = VectorXd::Constant(x.cols(), lambda);
  b.labels.assign(labels.begin(), labels.end());
  return x + (pair.s - pair.t) * model.forward(b);
}

MatrixXd NetFlowMap::apply(const MatrixXd& x, TimePair pair, double lambda,
                           std::span<const int> labels) const {
  return flowmap::apply(*model_, x, pair, lambda, labels);
}

MatrixXd VelocityFlowMap::apply(const MatrixXd& x, TimePair pair, double /*lambda*/,
                                std::span<const int> labels) const {
  check_pair(pair);
  if (pair.s == pair.t) {
    return x;
  }
  return x + (pair.s - pair.t) * field_->velocity_batch(x, VectorXd::Constant(x.cols(), pair.t), labels);
}

MatrixXd GaussianOptimalFlowMap::apply(const MatrixXd& x, TimePair pair, double /*lambda*/,
                                       std::span<const int> /*labels*/) const {
  check_pair(pair);
  if (pair.s == pair.t) {
    return x;
  }
  return gaussian::optimal_flow_map_coefficient(pair.t, pair.s, world_.c) * x;
}

MatrixXd PerturbedCmFlowMap::apply(const MatrixXd& x, TimePair pair, double /*lambda*/,
                                   std::span<const int> /*labels*/) const {
  check_pair(pair);
  if (pair.s == pair.t) {
    return x;
  }
  if (pair.s != 0.0) {
    throw std::invalid_argument("a consistency model only maps to s = 0");
  }
  return gaussian::perturbed_cm_coefficient(pair.t, model_) * x;
}

SamplerSchedule::SamplerSchedule(std::vector<double> timesteps, double gamma, std::uint64_t seed)
    : timesteps_(std::move(timesteps)), gamma_(gamma), seed_(seed) {
  if (timesteps_.size() < 2 || timesteps_.front() != 1.0 || timesteps_.back() != 0.0) {
    throw std::invalid_argument("schedule must start at exactly 1 and end at exactly 0");
  }
  for (std::size_t i = 0; i + 1 < timesteps_.size(); ++i) {
    if (!(timesteps_[i + 1] < timesteps_[i])) {
      throw std::invalid_argument("schedule must be strictly decreasing");
    }
  }
  if (!std::isfinite(gamma_) || gamma_ < 0.0 || gamma_ > 1.0) {
    throw std::invalid_argument("gamma must lie in [0, 1]");
  }
}

SamplerSchedule SamplerSchedule::uniform(int steps, double gamma, std::uint64_t seed) {
  return SamplerSchedule(gaussian::UniformStepSchedule(steps).timesteps(), gamma, seed);
}

RenoiseCoefficients renoise_coefficients(double s, double gamma) {
  if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
    throw std::invalid_argument("renoise time must lie in [0, 1]");
  }
  if (!std::isfinite(gamma) || gamma < 0.0 || gamma > 1.0) {
    throw std::invalid_argument("gamma must lie in [0, 1]");
  }
  RenoiseCoefficients r{};
  r.s_tilde = (1.0 - gamma) * s;
  if (r.s_tilde == 1.0) {
    // s = 1 and gamma = 0: nothing to renoise.
    r.alpha = 1.0;
    r.beta_sq = 0.0;
    r.beta = 0.0;
    return r;
  }
  r.alpha = (1.0 - s) / (1.0 - r.s_tilde);
  r.beta_sq = s * s - r.alpha * r.alpha * r.s_tilde * r.s_tilde;
  r.beta = std::sqrt(std::max(0.0, r.beta_sq));
  return r;
}

MatrixXd draw_initial_noise(int dim, std::size_t chains, std::uint64_t seed, double sigma_d) {
  MatrixXd out(dim, static_cast<Eigen::Index>(chains));
  const std::size_t chunks = (chains + kChunkSize - 1) / kChunkSize;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = c * kChunkSize;
    const std::size_t count = std::min(kChunkSize, chains - begin);
    Engine engine = make_stream(seed, c);
    auto block = out.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
    fill_normal(block, engine, sigma_d);
  }
  return out;
}

MatrixXd deterministic_sample(const FlowMap& model, const SamplerSchedule& schedule, const MatrixXd& x1,
                              const SamplerOptions& opts) {
  check_options(opts, static_cast<std::size_t>(x1.cols()));
  MatrixXd x = x1;
  const auto& ts = schedule.timesteps();
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    x = model.apply(x, {ts[i], ts[i + 1]}, opts.lambda, opts.labels);
  }
  return x;
}

MatrixXd gamma_sample(const FlowMap& model, const SamplerSchedule& schedule, std::size_t chains,
                      const SamplerOptions& opts) {
  const double gamma = schedule.gamma();
  return run_chunks(model, schedule, chains, opts,
                    [&](const MatrixXd& x, double t, double s, std::span<const int> labels, Engine& engine) {
                      if (s == 0.0) {
                        return model.apply(x, {t, 0.0}, opts.lambda, labels);
                      }
                      const RenoiseCoefficients rc = renoise_coefficients(s, gamma);
                      MatrixXd xs = model.apply(x, {t, rc.s_tilde}, opts.lambda, labels);
                      if (rc.beta == 0.0 && rc.alpha == 1.0) {
                        return xs;
                      }
                      MatrixXd z(x.rows(), x.cols());
                      fill_normal(z, engine, opts.sigma_d);
                      return MatrixXd(rc.alpha * xs + rc.beta * z);
                    });
}

MatrixXd multistep_cm_sample(const FlowMap& model, const SamplerSchedule& schedule, std::size_t chains,
                             const SamplerOptions& opts) {
  return run_chunks(model, schedule, chains, opts,
                    [&](const MatrixXd& x, double t, double s, std::span<const int> labels, Engine& engine) {
                      MatrixXd x0 = model.apply(x, {t, 0.0}, opts.lambda, labels);
                      if (s == 0.0) {
                        return x0;
                      }
                      MatrixXd z(x.rows(), x.cols());
                      fill_normal(z, engine, opts.sigma_d);
                      return MatrixXd((1.0 - s) * x0 + s * z);
                    });
}

}  // namespace ayf::flowmap
