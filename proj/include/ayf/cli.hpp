#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

// Subcommands of the `ayf` tool. Each returns a process exit code:
// 0 success, 1 config error, 2 I/O, 3 divergence, 4 integrity.
namespace ayf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitIntegrity = 4;

// Environment variable naming the default output root (else ./runs).
inline constexpr const char* kOutputRootEnv = "AYF_OUTPUT_ROOT";

struct Thm1Options {
  double c = 0.5;
  double eps = 0.05;
  int max_steps = 256;
  std::int64_t mc_samples = 100000;
  int dim = 2;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainOptions {
  std::string config;                  // empty: all defaults
  std::vector<std::string> overrides;  // `key=value`
  std::string out;
  bool adversarial = false;
  std::string init;  // checkpoint to finetune; default <out>/model.ckpt
};

struct SampleOptions {
  std::string checkpoint;
  std::string config;  // optional; its hash must match the checkpoint's
  int steps = 1;
  double gamma = 0.0;
  double lambda = 1.0;
  int n = 512;
  std::uint64_t seed = 0;
  std::string out;
};

struct AblateOptions {
  std::string suite;  // objectives | guidance
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

// Maps library exceptions to exit codes and prints the message to stderr.
int guarded(const std::function<void()>& body);

int cmd_thm1(const Thm1Options& opts);
int cmd_train(const TrainOptions& opts);
int cmd_sample(const SampleOptions& opts);
int cmd_ablate(const AblateOptions& opts);

// <AYF_OUTPUT_ROOT or ./runs>/<command>-<hash> when `explicit_out` is empty.
std::filesystem::path resolve_output(const std::string& explicit_out, const std::string& command,
                                     const std::string& hash);

// Holds <dir>/.lock for its lifetime so that at most one writer uses a
// directory. Throws IoError if the lock already exists.
class OutputLock {
 public:
  explicit OutputLock(std::filesystem::path dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace ayf::cli
