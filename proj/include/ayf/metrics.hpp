#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

// Distributional distances between sample sets (columns are points).
namespace ayf::metrics {

inline constexpr Eigen::Index kMaxExactPoints = 1024;

struct SampleSet {
  Eigen::MatrixXd points;  // dim x n
  std::string provenance;

  void validate() const;
};

// Optimal assignment for a square cost matrix; returns col index per row.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

// sqrt of the optimal-assignment mean squared Euclidean cost.
double empirical_w2_exact(const SampleSet& a, const SampleSet& b);
double empirical_w2_exact(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// sqrt(dim * mean over random unit directions of squared sorted-quantile
// 1-D W2). The dim factor makes it a lower bound of W2 that is tight for
// isotropic discrepancies.
double sliced_w2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int n_projections, std::uint64_t seed);

struct Coverage {
  std::vector<long> counts;  // per mode
  long unassigned = 0;

  long assigned() const;
  // Share of the assigned mass held by mode k.
  double fraction(std::size_t k) const;
};

// Nearest center if within `radius`, else unassigned. `modes` is dim x K.
Coverage mode_coverage(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& modes, double radius);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for one value
};

Summary summarize(const std::vector<double>& values);

}  // namespace ayf::metrics
