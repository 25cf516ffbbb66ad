#include "ayf/teachers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "ayf/errors.hpp"
#include "ayf/gaussian_world.hpp"

namespace ayf::teachers {
namespace {

void require_velocity_time(double t) {
  if (!std::isfinite(t) || t < 0.0 || t > 1.0) {
    throw std::invalid_argument("velocity time must lie in (0, 1]");
  }
  if (t == 0.0) {
    throw SingularityError("teacher velocity is singular at t = 0");
  }
}

std::optional<int> label_at(std::span<const int> labels, Eigen::Index j) {
  if (labels.empty() || labels[static_cast<std::size_t>(j)] < 0) {
    return std::nullopt;
  }
  return labels[static_cast<std::size_t>(j)];
}

}  // namespace

Eigen::MatrixXd VelocityField::velocity_batch(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                                              std::span<const int> labels) const {
  if (t.size() != x.cols() || (!labels.empty() && labels.size() != static_cast<std::size_t>(x.cols()))) {
    throw std::invalid_argument("velocity_batch: size mismatch");
  }
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    out.col(j) = velocity(x.col(j), t(j), label_at(labels, j));
  }
  return out;
}

// --- GaussianTeacher --------------------------------------------------------

GaussianTeacher::GaussianTeacher(double c, int dim) : c_(c), dim_(dim) {
  gaussian::GaussianWorld check(c, dim);
  (void)check;
}

Eigen::VectorXd GaussianTeacher::velocity(const Eigen::VectorXd& x, double t,
                                          std::optional<int> /*label*/) const {
  require_velocity_time(t);
  return gaussian::optimal_velocity(x, t, c_);
}

Eigen::MatrixXd GaussianTeacher::velocity_batch(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                                                std::span<const int> /*labels*/) const {
  if (t.size() != x.cols()) {
    throw std::invalid_argument("velocity_batch: size mismatch");
  }
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    require_velocity_time(t(j));
    out.col(j) = gaussian::optimal_velocity_coefficient(t(j), c_) * x.col(j);
  }
  return out;
}

LabeledPoints GaussianTeacher::sample(std::size_t n, Engine& engine) const {
  LabeledPoints out;
  out.points.resize(dim_, static_cast<Eigen::Index>(n));
  fill_normal(out.points, engine, c_);
  out.labels.assign(n, -1);
  return out;
}

// --- GmmTeacher -------------------------------------------------------------

GmmTeacher::GmmTeacher(std::vector<double> weights, Eigen::MatrixXd means,
                       std::vector<double> comp_std, std::vector<int> labels)
    : weights_(std::move(weights)),
      means_(std::move(means)),
      comp_std_(std::move(comp_std)),
      labels_(std::move(labels)) {
  const auto k = static_cast<std::size_t>(means_.cols());
  if (k == 0 || means_.rows() == 0) {
    throw std::invalid_argument("GMM needs at least one component and dim >= 1");
  }
  if (weights_.size() != k || comp_std_.size() != k) {
    throw std::invalid_argument("GMM weights/comp_std must have one entry per component");
  }
  if (!labels_.empty() && labels_.size() != k) {
    throw std::invalid_argument("GMM labels must be empty or one per component");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("GMM weights must be finite and >= 0");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("GMM weights must sum to 1");
  }
  for (double s : comp_std_) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("GMM component std must be > 0");
    }
  }
  if (!means_.allFinite()) {
    throw std::invalid_argument("GMM means must be finite");
  }
  log_weights_.resize(k);
  std::transform(weights_.begin(), weights_.end(), log_weights_.begin(),
                 [](double w) { return std::log(w); });
}

GmmTeacher GmmTeacher::ring(int modes, double radius, double comp_std) {
  if (modes < 1) {
    throw std::invalid_argument("ring needs at least one mode");
  }
  Eigen::MatrixXd means(2, modes);
  std::vector<int> labels(static_cast<std::size_t>(modes));
  for (int k = 0; k < modes; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / modes;
    means(0, k) = radius * std::cos(angle);
    means(1, k) = radius * std::sin(angle);
    labels[static_cast<std::size_t>(k)] = k;
  }
  return GmmTeacher(std::vector<double>(static_cast<std::size_t>(modes), 1.0 / modes), means,
                    std::vector<double>(static_cast<std::size_t>(modes), comp_std), labels);
}

int GmmTeacher::num_classes() const {
  if (labels_.empty()) {
    return 0;
  }
  return *std::max_element(labels_.begin(), labels_.end()) + 1;
}

Eigen::VectorXd GmmTeacher::posterior_mean(const Eigen::VectorXd& x, double t,
                                           std::optional<int> label) const {
  if (x.size() != means_.rows()) {
    throw std::invalid_argument("posterior_mean: dimension mismatch");
  }
  if (!std::isfinite(t) || t < 0.0 || t > 1.0) {
    throw std::invalid_argument("posterior_mean: t must lie in [0, 1]");
  }
  // Non-finite inputs give NaN so that callers can reject them.
  if (!x.allFinite()) {
    return Eigen::VectorXd::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
  }
  const double a = 1.0 - t;
  const double d = static_cast<double>(x.size());
  const auto k = static_cast<std::size_t>(means_.cols());

  std::vector<double> logr(k, -std::numeric_limits<double>::infinity());
  double max_logr = -std::numeric_limits<double>::infinity();
  bool eligible = false;
  for (std::size_t j = 0; j < k; ++j) {
    if (label && !labels_.empty() && labels_[j] != *label) {
      continue;
    }
    eligible = true;
    const double var = a * a * comp_std_[j] * comp_std_[j] + t * t;
    const double sq = (x - a * means_.col(static_cast<Eigen::Index>(j))).squaredNorm();
    logr[j] = log_weights_[j] - 0.5 * d * std::log(var) - 0.5 * sq / var;
    max_logr = std::max(max_logr, logr[j]);
  }
  if (!eligible) {
    throw std::invalid_argument("posterior_mean: no component carries the requested label");
  }
  // Every log-density underflowed: x is too far out to attribute.
  if (!std::isfinite(max_logr)) {
    return Eigen::VectorXd::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(x.size());
  double norm = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (!std::isfinite(logr[j])) {
      continue;
    }
    const double r = std::exp(logr[j] - max_logr);
    const double s2 = comp_std_[j] * comp_std_[j];
    const double var = a * a * s2 + t * t;
    const auto mu = means_.col(static_cast<Eigen::Index>(j));
    mean += r * (mu + (a * s2 / var) * (x - a * mu));
    norm += r;
  }
  return mean / norm;
}

Eigen::VectorXd GmmTeacher::velocity(const Eigen::VectorXd& x, double t,
                                     std::optional<int> label) const {
  require_velocity_time(t);
  return (x - posterior_mean(x, t, label)) / t;
}

LabeledPoints GmmTeacher::sample(std::size_t n, Engine& engine) const {
  std::discrete_distribution<int> pick(weights_.begin(), weights_.end());
  LabeledPoints out;
  out.points.resize(means_.rows(), static_cast<Eigen::Index>(n));
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = pick(engine);
    const auto col = static_cast<Eigen::Index>(i);
    for (Eigen::Index r = 0; r < means_.rows(); ++r) {
      out.points(r, col) = means_(r, k) + comp_std_[static_cast<std::size_t>(k)] * standard_normal(engine);
    }
    out.labels[i] = labels_.empty() ? -1 : labels_[static_cast<std::size_t>(k)];
  }
  return out;
}

Eigen::VectorXd GmmTeacher::mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(means_.rows());
  for (Eigen::Index j = 0; j < means_.cols(); ++j) {
    m += weights_[static_cast<std::size_t>(j)] * means_.col(j);
  }
  return m;
}

// --- guidance ---------------------------------------------------------------

GuidanceMode parse_guidance_mode(const std::string& name) {
  if (name == "none") return GuidanceMode::none;
  if (name == "autoguidance") return GuidanceMode::autoguidance;
  if (name == "cfg") return GuidanceMode::cfg;
  throw ConfigError("unknown guidance mode '" + name + "'");
}

std::string to_string(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::none:
      return "none";
    case GuidanceMode::autoguidance:
      return "autoguidance";
    case GuidanceMode::cfg:
      return "cfg";
  }
  return "none";
}

void GuidanceSpec::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw ConfigError("guidance scale must be finite and >= 0");
  }
  if (mode == GuidanceMode::autoguidance && !weak) {
    throw ConfigError("autoguidance requires a weak guidance model");
  }
  if (mode == GuidanceMode::cfg && !uncond) {
    throw ConfigError("cfg requires an unconditional model");
  }
}

Eigen::VectorXd guided_velocity(const GuidanceSpec& spec, const VelocityField& main,
                                const Eigen::VectorXd& x, double t, std::optional<int> label) {
  spec.validate();
  switch (spec.mode) {
    case GuidanceMode::none:
      return main.velocity(x, t, label);
    case GuidanceMode::autoguidance:
      return spec.lambda * main.velocity(x, t, label) +
             (1.0 - spec.lambda) * spec.weak->velocity(x, t, label);
    case GuidanceMode::cfg:
      return spec.lambda * main.velocity(x, t, label) +
             (1.0 - spec.lambda) * spec.uncond->velocity(x, t, std::nullopt);
  }
  return main.velocity(x, t, label);
}

GuidedTeacher::GuidedTeacher(std::shared_ptr<const VelocityField> main, GuidanceSpec spec)
    : main_(std::move(main)), spec_(std::move(spec)) {
  if (!main_) {
    throw ConfigError("guided teacher needs a main velocity field");
  }
  spec_.validate();
}

Eigen::MatrixXd GuidedTeacher::velocity_batch(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                                              const Eigen::VectorXd& lambda,
                                              std::span<const int> labels) const {
  if (lambda.size() != x.cols()) {
    throw std::invalid_argument("guided velocity: lambda size mismatch");
  }
  Eigen::MatrixXd v = main_->velocity_batch(x, t, labels);
  switch (spec_.mode) {
    case GuidanceMode::none:
      break;
    case GuidanceMode::autoguidance: {
      const Eigen::MatrixXd weak = spec_.weak->velocity_batch(x, t, labels);
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        v.col(j) = lambda(j) * v.col(j) + (1.0 - lambda(j)) * weak.col(j);
      }
      break;
    }
    case GuidanceMode::cfg: {
      const Eigen::MatrixXd uncond = spec_.uncond->velocity_batch(x, t, {});
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        v.col(j) = lambda(j) * v.col(j) + (1.0 - lambda(j)) * uncond.col(j);
      }
      break;
    }
  }
  return v;
}

GmmTeacher make_weak_teacher(const GmmTeacher& teacher, double multiplier, std::uint64_t seed,
                             double jitter_fraction) {
  if (!std::isfinite(multiplier) || multiplier <= 1.0) {
    throw std::invalid_argument("weak-teacher std multiplier must be > 1");
  }
  if (!std::isfinite(jitter_fraction) || jitter_fraction < 0.0) {
    throw std::invalid_argument("jitter fraction must be >= 0");
  }
  const Eigen::VectorXd centre = teacher.mean();
  double spread2 = 0.0;
  for (int k = 0; k < teacher.components(); ++k) {
    spread2 += teacher.weights()[static_cast<std::size_t>(k)] *
               (teacher.means().col(k) - centre).squaredNorm();
  }
  const double spread = std::sqrt(spread2 / static_cast<double>(teacher.dim()));

  Eigen::MatrixXd means = teacher.means();
  Engine engine = make_stream(seed, 0);
  Eigen::MatrixXd jitter(means.rows(), means.cols());
  fill_normal(jitter, engine, 1.0);
  means += (jitter_fraction * spread) * jitter;

  std::vector<double> stds = teacher.comp_std();
  for (double& s : stds) {
    s *= multiplier;
  }
  return GmmTeacher(teacher.weights(), means, stds, teacher.labels());
}

Eigen::VectorXd euler_solve(const VelocityField& field, const Eigen::VectorXd& x, double t_from,
                            double t_to, int n_steps, std::optional<int> label) {
  if (n_steps < 1) {
    throw std::invalid_argument("euler_solve needs n_steps >= 1");
  }
  Eigen::VectorXd y = x;
  if (t_from == t_to) {
    return y;
  }
  const double h = (t_to - t_from) / n_steps;
  for (int i = 0; i < n_steps; ++i) {
    const double t = t_from + i * h;
    y += h * field.velocity(y, t, label);
  }
  return y;
}

Eigen::MatrixXd euler_solve_batch(const VelocityField& field, const Eigen::MatrixXd& x,
                                  double t_from, double t_to, int n_steps,
                                  std::span<const int> labels) {
  if (n_steps < 1) {
    throw std::invalid_argument("euler_solve needs n_steps >= 1");
  }
  Eigen::MatrixXd y = x;
  if (t_from == t_to) {
    return y;
  }
  const double h = (t_to - t_from) / n_steps;
  for (int i = 0; i < n_steps; ++i) {
    const Eigen::VectorXd t = Eigen::VectorXd::Constant(x.cols(), t_from + i * h);
    y += h * field.velocity_batch(y, t, labels);
  }
  return y;
}

}  // namespace ayf::teachers
