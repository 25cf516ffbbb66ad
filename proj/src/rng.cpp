#include "ayf/rng.hpp"

#include <array>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

namespace ayf {

Engine make_stream(std::uint64_t seed, std::uint64_t stream) {
  const std::array<std::uint32_t, 4> words{
      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::seed_seq seq(words.begin(), words.end());
  return Engine(seq);
}

double standard_normal(Engine& engine) {
  boost::random::normal_distribution<double> dist;
  return dist(engine);
}

double uniform(Engine& engine, double lo, double hi) {
  if (lo == hi) {
    return lo;
  }
  boost::random::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine);
}

void fill_normal(Eigen::Ref<Eigen::MatrixXd> out, Engine& engine, double stddev) {
  boost::random::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      out(i, j) = dist(engine);
    }
  }
}

}  // namespace ayf
