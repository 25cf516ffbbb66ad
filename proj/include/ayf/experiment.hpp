#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "ayf/config.hpp"
#include "ayf/metrics.hpp"
#include "ayf/net.hpp"
#include "ayf/teachers.hpp"

// Teacher, student and evaluation protocol assembled from an
// ExperimentConfig; shared by the CLI and the acceptance suite.
namespace ayf::experiment {

// Seed offsets of the evaluation protocol. Sample set k draws its chains
// from kSampleSeed + k and its data reference from kReferenceSeed + k;
// guidance-scale selection uses the disjoint validation offsets.
inline constexpr std::uint64_t kSampleSeed = 1000;
inline constexpr std::uint64_t kReferenceSeed = 2000;
inline constexpr std::uint64_t kValidationSampleSeed = 3000;
inline constexpr std::uint64_t kValidationReferenceSeed = 4000;

struct Setup {
  config::ExperimentConfig cfg;
  std::shared_ptr<const teachers::VelocityField> main;
  std::shared_ptr<const teachers::DataSource> data;
  std::shared_ptr<const teachers::GuidedTeacher> teacher;
  net::ModelSpec spec;     // dim and classes filled in from the teacher
  Eigen::MatrixXd modes;   // ring centers (dim x K); empty for the Gaussian world

  bool is_ring() const { return modes.cols() > 0; }
};

Setup make_setup(const config::ExperimentConfig& cfg);

net::MlpFlowMap init_model(const Setup& setup);

// Chain labels for a conditional student: balanced round-robin over classes;
// empty when the student is unconditional.
std::vector<int> chain_labels(const Setup& setup, int n);

// A consistency-model student can only jump to 0, so it is always sampled
// with gamma = 1 (multistep CM); other students use `gamma`.
double sampler_gamma(const Setup& setup, double gamma);

Eigen::MatrixXd sample_student(const net::MlpFlowMap& model, const Setup& setup, int steps,
                               double gamma, double lambda, int n, std::uint64_t seed);

Eigen::MatrixXd reference_samples(const Setup& setup, int n, std::uint64_t seed);

// Exact W2 against fresh data for each of `seeds` sample sets.
std::vector<double> w2_per_seed(const net::MlpFlowMap& model, const Setup& setup, int steps,
                                double lambda, bool validation = false);

// Guidance scale used for evaluation: 1 without guidance, eval.cfg_lambda
// for CFG, and for autoguidance the grid value with the lowest mean W2 on
// the validation seeds at this step count.
double evaluation_lambda(const net::MlpFlowMap& model, const Setup& setup, int steps);

}  // namespace ayf::experiment
