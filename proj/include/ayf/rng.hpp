#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace ayf {

using Engine = std::mt19937_64;

// Number of samples/chains that share one RNG stream. Results are
// bit-identical for a fixed seed as long as this stays fixed.
inline constexpr std::size_t kChunkSize = 1024;

// Independent stream keyed by (seed, stream index).
Engine make_stream(std::uint64_t seed, std::uint64_t stream);

double standard_normal(Engine& engine);
double uniform(Engine& engine, double lo, double hi);

// Fills `out` column by column with N(0, stddev^2) draws.
void fill_normal(Eigen::Ref<Eigen::MatrixXd> out, Engine& engine, double stddev = 1.0);

}  // namespace ayf
