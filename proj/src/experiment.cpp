#include "ayf/experiment.hpp"

#include <algorithm>
#include <limits>

#include "ayf/errors.hpp"
#include "ayf/flowmap.hpp"
#include "ayf/rng.hpp"

namespace ayf::experiment {

using Eigen::MatrixXd;

Setup make_setup(const config::ExperimentConfig& cfg) {
  cfg.validate();
  Setup setup;
  setup.cfg = cfg;
  setup.spec = cfg.model;
  teachers::GuidanceSpec guidance;
  guidance.mode = cfg.guidance.mode;
  if (cfg.teacher.kind == config::TeacherKind::gaussian) {
    auto g = std::make_shared<teachers::GaussianTeacher>(cfg.teacher.c, cfg.teacher.dim);
    setup.main = g;
    setup.data = g;
    setup.spec.dim = cfg.teacher.dim;
    setup.spec.classes = 0;
  } else {
    auto ring = std::make_shared<teachers::GmmTeacher>(
        teachers::GmmTeacher::ring(cfg.teacher.modes, cfg.teacher.radius, cfg.teacher.comp_std));
    setup.main = ring;
    setup.data = ring;
    setup.modes = ring->means();
    setup.spec.dim = ring->dim();
    setup.spec.classes = 0;
    if (guidance.mode == teachers::GuidanceMode::autoguidance) {
      guidance.weak = std::make_shared<teachers::GmmTeacher>(
          teachers::make_weak_teacher(*ring, cfg.guidance.weak_multiplier, cfg.guidance.weak_seed));
    } else if (guidance.mode == teachers::GuidanceMode::cfg) {
      // The unlabeled posterior of the same mixture is the unconditional model.
      guidance.uncond = ring;
      setup.spec.classes = ring->num_classes();
    }
  }
  guidance.validate();
  setup.teacher = std::make_shared<teachers::GuidedTeacher>(setup.main, guidance);
  return setup;
}

net::MlpFlowMap init_model(const Setup& setup) { return net::MlpFlowMap(setup.spec, setup.cfg.model_seed); }

std::vector<int> chain_labels(const Setup& setup, int n) {
  if (setup.spec.classes <= 0) return {};
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % setup.spec.classes;
  return labels;
}

double sampler_gamma(const Setup& setup, double gamma) {
  return setup.cfg.train.objective == trainer::Objective::cm ? 1.0 : gamma;
}

MatrixXd sample_student(const net::MlpFlowMap& model, const Setup& setup, int steps, double gamma,
                        double lambda, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need at least one chain");
  const flowmap::NetFlowMap fm(model);
  flowmap::SamplerOptions opts;
  opts.lambda = lambda;
  opts.sigma_d = setup.cfg.train.sigma_d;
  opts.labels = chain_labels(setup, n);
  const auto schedule = flowmap::SamplerSchedule::uniform(steps, sampler_gamma(setup, gamma), seed);
  return flowmap::gamma_sample(fm, schedule, static_cast<std::size_t>(n), opts);
}

MatrixXd reference_samples(const Setup& setup, int n, std::uint64_t seed) {
  Engine engine = make_stream(seed, 0);
  return setup.data->sample(static_cast<std::size_t>(n), engine).points;
}

std::vector<double> w2_per_seed(const net::MlpFlowMap& model, const Setup& setup, int steps,
                                double lambda, bool validation) {
  const auto& ev = setup.cfg.eval;
  const std::uint64_t sample_base = validation ? kValidationSampleSeed : kSampleSeed;
  const std::uint64_t ref_base = validation ? kValidationReferenceSeed : kReferenceSeed;
  std::vector<double> out;
  for (int k = 0; k < ev.seeds; ++k) {
    const auto uk = static_cast<std::uint64_t>(k);
    const MatrixXd x = sample_student(model, setup, steps, ev.gamma, lambda, ev.samples, sample_base + uk);
    out.push_back(metrics::empirical_w2_exact(x, reference_samples(setup, ev.samples, ref_base + uk)));
  }
  return out;
}

double evaluation_lambda(const net::MlpFlowMap& model, const Setup& setup, int steps) {
  switch (setup.cfg.guidance.mode) {
    case teachers::GuidanceMode::none:
      return 1.0;
    case teachers::GuidanceMode::cfg:
      return setup.cfg.eval.cfg_lambda;
    case teachers::GuidanceMode::autoguidance:
      break;
  }
  double best = setup.cfg.eval.lambda_grid.front();
  double best_w2 = std::numeric_limits<double>::infinity();
  for (double lambda : setup.cfg.eval.lambda_grid) {
    const double w2 = metrics::summarize(w2_per_seed(model, setup, steps, lambda, true)).mean;
    if (w2 < best_w2) {
      best_w2 = w2;
      best = lambda;
    }
  }
  return best;
}

}  // namespace ayf::experiment
