#include "ayf/gaussian_world.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <boost/random/normal_distribution.hpp>

#include "ayf/errors.hpp"
#include "ayf/rng.hpp"

namespace ayf::gaussian {
namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + " must be finite");
  }
}

void require_finite(const Eigen::VectorXd& x) {
  if (!x.allFinite()) {
    throw std::invalid_argument("point has non-finite entries");
  }
}

void require_time(double t, const char* what) {
  require_finite(t, what);
  if (t < 0.0 || t > 1.0) {
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
  }
}

void require_positive_c(double c) {
  require_finite(c, "c");
  if (c <= 0.0) {
    throw std::invalid_argument("data std c must be > 0");
  }
}

}  // namespace

GaussianWorld::GaussianWorld(double c_, int dim_) : c(c_), dim(dim_) {
  require_positive_c(c);
  if (dim < 1) {
    throw std::invalid_argument("dim must be >= 1");
  }
}

double GaussianWorld::marginal_std(double t) const {
  return std::sqrt(t * t + (1.0 - t) * (1.0 - t) * c * c);
}

PerturbedCM::PerturbedCM(GaussianWorld w, double e) : world(w), eps(e) {
  require_finite(eps, "eps");
  if (eps < 0.0) {
    throw std::invalid_argument("eps must be >= 0");
  }
}

UniformStepSchedule::UniformStepSchedule(int n) {
  if (n < 1) {
    throw std::invalid_argument("step count must be >= 1");
  }
  timesteps_.resize(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    timesteps_[static_cast<std::size_t>(i)] = static_cast<double>(n - i) / n;
  }
}

double optimal_denoiser_coefficient(double sigma, double c) {
  require_finite(sigma, "sigma");
  require_positive_c(c);
  if (sigma < 0.0) {
    throw std::invalid_argument("sigma must be >= 0");
  }
  return c * c / (c * c + sigma * sigma);
}

Eigen::VectorXd optimal_denoiser(const Eigen::VectorXd& x, double sigma, double c) {
  require_finite(x);
  return optimal_denoiser_coefficient(sigma, c) * x;
}

double optimal_velocity_coefficient(double t, double c) {
  require_time(t, "t");
  require_finite(c, "c");
  const double denom = t * t + (1.0 - t) * (1.0 - t) * c * c;
  if (denom == 0.0) {
    throw SingularityError("optimal velocity is singular at t = 0 when c = 0");
  }
  return (t - c * c * (1.0 - t)) / denom;
}

Eigen::VectorXd optimal_velocity(const Eigen::VectorXd& x, double t, double c) {
  require_finite(x);
  return optimal_velocity_coefficient(t, c) * x;
}

double optimal_cm_coefficient(double t, double c) {
  require_time(t, "t");
  require_positive_c(c);
  return c / std::sqrt(t * t + (1.0 - t) * (1.0 - t) * c * c);
}

Eigen::VectorXd optimal_cm(const Eigen::VectorXd& x, double t, double c) {
  require_finite(x);
  return optimal_cm_coefficient(t, c) * x;
}

double optimal_flow_map_coefficient(double t, double s, double c) {
  require_time(t, "t");
  require_time(s, "s");
  const GaussianWorld w(c);
  return w.marginal_std(s) / w.marginal_std(t);
}

double perturbed_cm_coefficient(double t, const PerturbedCM& model) {
  require_time(t, "t");
  const double c = model.world.c;
  return (c + t * model.eps) / model.world.marginal_std(t);
}

Eigen::VectorXd perturbed_cm(const Eigen::VectorXd& x, double t, const PerturbedCM& model) {
  require_finite(x);
  if (t == 0.0) {
    return x;
  }
  return perturbed_cm_coefficient(t, model) * x;
}

double variance_recursion_step(double var_t, double t, double s, const GaussianWorld& world,
                               double eps) {
  require_time(t, "t");
  require_time(s, "s");
  require_finite(var_t, "var_t");
  if (var_t < 0.0) {
    throw std::invalid_argument("variance must be >= 0");
  }
  if (s >= t) {
    throw std::invalid_argument("variance recursion needs s < t");
  }
  const double c = world.c;
  const double gain = (c + t * eps) * (c + t * eps) / (t * t + (1.0 - t) * (1.0 - t) * c * c);
  return s * s + (1.0 - s) * (1.0 - s) * gain * var_t;
}

double multistep_cm_variance(int n, const GaussianWorld& world, double eps) {
  const UniformStepSchedule schedule(n);
  const auto& ts = schedule.timesteps();
  double var = 1.0;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    var = variance_recursion_step(var, ts[i], ts[i + 1], world, eps);
  }
  return var;
}

double w2_isotropic(double var, const GaussianWorld& world) {
  require_finite(var, "variance");
  if (var < 0.0) {
    throw std::invalid_argument("variance must be >= 0");
  }
  const double d = std::sqrt(var) - world.c;
  return d * d;
}

Eigen::MatrixXd simulate_multistep_cm(int n, const PerturbedCM& model, std::size_t num_samples,
                                      std::uint64_t seed) {
  if (num_samples == 0) {
    throw std::invalid_argument("num_samples must be >= 1");
  }
  const UniformStepSchedule schedule(n);
  const auto& ts = schedule.timesteps();
  const int dim = model.world.dim;
  Eigen::MatrixXd out(dim, static_cast<Eigen::Index>(num_samples));

  // Per-step scalar gains so the inner loop is a fused multiply-add.
  std::vector<double> gains(ts.size() - 1);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    gains[i] = (1.0 - ts[i + 1]) * perturbed_cm_coefficient(ts[i], model);
  }

  boost::random::normal_distribution<double> normal;
  const std::size_t chunks = (num_samples + kChunkSize - 1) / kChunkSize;
  for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
    Engine engine = make_stream(seed, chunk);
    const auto begin = static_cast<Eigen::Index>(chunk * kChunkSize);
    const auto count =
        static_cast<Eigen::Index>(std::min(kChunkSize, num_samples - chunk * kChunkSize));
    auto block = out.middleCols(begin, count);
    fill_normal(block, engine);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
      const double s = ts[i + 1];
      const double g = gains[i];
      if (s == 0.0) {
        block *= g;
        continue;
      }
      for (Eigen::Index j = 0; j < count; ++j) {
        for (int k = 0; k < dim; ++k) {
          block(k, j) = s * normal(engine) + g * block(k, j);
        }
      }
    }
  }
  return out;
}

double isotropic_variance(const Eigen::MatrixXd& samples) {
  if (samples.size() == 0) {
    throw std::invalid_argument("empty sample set");
  }
  return samples.squaredNorm() / static_cast<double>(samples.size());
}

}  // namespace ayf::gaussian
