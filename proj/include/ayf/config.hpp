#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ayf/net.hpp"
#include "ayf/teachers.hpp"
#include "ayf/trainer.hpp"

// Flat `key = value` experiment documents. `#` starts a comment; lists are
// comma-separated. Unknown keys and malformed values throw ConfigError naming
// the key. Every key has a default, so an empty document is valid.
namespace ayf::config {

enum class TeacherKind { gaussian, ring };

struct TeacherSpec {
  TeacherKind kind = TeacherKind::ring;
  double c = 0.5;          // gaussian
  int dim = 2;             // gaussian
  int modes = 8;           // ring
  double radius = 4.0;     // ring
  double comp_std = 0.2;   // ring
};

struct GuidanceConfig {
  teachers::GuidanceMode mode = teachers::GuidanceMode::none;
  double weak_multiplier = 2.0;
  std::uint64_t weak_seed = 7;
};

struct SampleConfig {
  int steps = 1;
  double gamma = 0.0;
  double lambda = 1.0;
  int n = 512;
  std::uint64_t seed = 0;
};

// Evaluation protocol: `seeds` independent sample sets of `samples` points
// each, compared with fresh data draws by exact W2.
struct EvalConfig {
  int samples = 512;
  int seeds = 5;
  std::vector<int> steps{1, 2, 4, 8};
  double gamma = 0.0;
  // Candidate guidance scales for guided students, chosen on validation
  // seeds disjoint from the reported ones.
  std::vector<double> lambda_grid{1.0, 1.5, 2.0, 2.5, 3.0};
  double cfg_lambda = 3.0;
};

struct ExperimentConfig {
  TeacherSpec teacher;
  GuidanceConfig guidance;
  net::ModelSpec model;  // dim and classes are derived from the teacher
  std::uint64_t model_seed = 0;
  trainer::TrainConfig train;
  bool adversarial = false;
  trainer::AdvConfig adv;
  SampleConfig sample;
  EvalConfig eval;
  std::string out;  // empty: derived from AYF_OUTPUT_ROOT

  // Throws ConfigError on inconsistent values.
  void validate() const;

  // One `key = value` line per key except `out`, sorted, with every default
  // filled in.
  std::string canonical() const;
  // Hex FNV-1a of canonical().
  std::string hash() const;
};

ExperimentConfig parse(const std::string& text);
ExperimentConfig load(const std::filesystem::path& path);

// Applies one `key=value` override (same rules as a document line).
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// All recognised keys, sorted.
std::vector<std::string> known_keys();

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace ayf::config
