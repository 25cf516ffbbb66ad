#include "ayf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ayf/rng.hpp"

namespace ayf::metrics {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_pair(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("sample sets differ in dimension");
  if (a.cols() < 1 || b.cols() < 1) throw std::invalid_argument("sample sets must be non-empty");
  if (!a.allFinite() || !b.allFinite()) throw std::invalid_argument("sample sets must be finite");
}

}  // namespace

void SampleSet::validate() const {
  if (points.cols() < 1 || points.rows() < 1) throw std::invalid_argument("sample set must be non-empty");
  if (!points.allFinite()) throw std::invalid_argument("sample set must be finite");
}

std::vector<int> solve_assignment(const MatrixXd& cost) {
  // Shortest augmenting path with row/column potentials (1-based internally).
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("assignment cost must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(n);
  for (int j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
  return assign;
}

double empirical_w2_exact(const SampleSet& a, const SampleSet& b) {
  a.validate();
  b.validate();
  return empirical_w2_exact(a.points, b.points);
}

double empirical_w2_exact(const MatrixXd& a, const MatrixXd& b) {
  check_pair(a, b);
  if (a.cols() != b.cols()) throw std::invalid_argument("exact W2 needs equal sample counts");
  if (a.cols() > kMaxExactPoints) throw std::invalid_argument("exact W2 is limited to 1024 points");
  const Index n = a.cols();
  // ||a_i - b_j||^2 = |a_i|^2 + |b_j|^2 - 2 a_i.b_j
  MatrixXd cost = -2.0 * a.transpose() * b;
  cost.colwise() += a.colwise().squaredNorm().transpose();
  cost.rowwise() += b.colwise().squaredNorm();
  cost = cost.cwiseMax(0.0);
  const std::vector<int> assign = solve_assignment(cost);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += (a.col(i) - b.col(assign[static_cast<std::size_t>(i)])).squaredNorm();
  return std::sqrt(total / static_cast<double>(n));
}

double sliced_w2(const MatrixXd& a, const MatrixXd& b, int n_projections, std::uint64_t seed) {
  check_pair(a, b);
  if (n_projections < 1) throw std::invalid_argument("need at least one projection");
  if (a.cols() != b.cols()) throw std::invalid_argument("sliced W2 needs equal sample counts");
  const Index n = a.cols();
  Engine engine = make_stream(seed, 0);
  VectorXd dir(a.rows());
  std::vector<double> pa(static_cast<std::size_t>(n)), pb(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (int k = 0; k < n_projections; ++k) {
    if (a.rows() == 1) {
      dir(0) = 1.0;
    } else {
      do {
        fill_normal(dir, engine);
      } while (dir.norm() == 0.0);
      dir.normalize();
    }
    for (Index i = 0; i < n; ++i) {
      pa[static_cast<std::size_t>(i)] = dir.dot(a.col(i));
      pb[static_cast<std::size_t>(i)] = dir.dot(b.col(i));
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double w = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) w += (pa[i] - pb[i]) * (pa[i] - pb[i]);
    acc += w / static_cast<double>(n);
  }
  // Scaled by dim so isotropic discrepancies match the full W2 (d E[(theta.z)^2] = |z|^2).
  return std::sqrt(static_cast<double>(a.rows()) * acc / n_projections);
}

long Coverage::assigned() const {
  long total = 0;
  for (long c : counts) total += c;
  return total;
}

double Coverage::fraction(std::size_t k) const {
  const long total = assigned();
  return total == 0 ? 0.0 : static_cast<double>(counts.at(k)) / static_cast<double>(total);
}

Coverage mode_coverage(const MatrixXd& samples, const MatrixXd& modes, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be > 0");
  if (samples.rows() != modes.rows()) throw std::invalid_argument("samples and modes differ in dimension");
  Coverage out;
  out.counts.assign(static_cast<std::size_t>(modes.cols()), 0);
  for (Index i = 0; i < samples.cols(); ++i) {
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < modes.cols(); ++k) {
      const double d = (samples.col(i) - modes.col(k)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best >= 0 && std::sqrt(best_d) <= radius) {
      ++out.counts[static_cast<std::size_t>(best)];
    } else {
      ++out.unassigned;
    }
  }
  return out;
}

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("nothing to summarize");
  Summary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / static_cast<double>(values.size() - 1));
  }
  return s;
}

}  // namespace ayf::metrics
