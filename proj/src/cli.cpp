#include "ayf/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "ayf/checkpoint.hpp"
#include "ayf/config.hpp"
#include "ayf/errors.hpp"
#include "ayf/experiment.hpp"
#include "ayf/flowmap.hpp"
#include "ayf/gaussian_world.hpp"
#include "ayf/hash.hpp"
#include "ayf/metrics.hpp"
#include "ayf/trainer.hpp"
#include "ayf/version.hpp"

namespace ayf::cli {
namespace {

namespace fs = std::filesystem;
using config::format_double;

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::string& header) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write " + path.string());
    line(header);
  }

  void row(const std::vector<std::string>& cells) {
    std::string text;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text += ',';
      text += cells[i];
    }
    line(text);
  }

 private:
  void line(const std::string& text) {
    out_ << text << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_.string());
  }

  fs::path path_;
  std::ofstream out_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Resolved settings of a run, written next to its outputs.
void write_resolved(const fs::path& dir, const std::string& canonical) {
  write_text(dir / "config.resolved.cfg", canonical);
  write_text(dir / "config.hash", to_hex(fnv1a(canonical)) + "\n");
}

void write_manifest(const fs::path& dir, const std::string& command, const std::string& hash,
                    const std::string& status) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == ".lock" || rel == "manifest.json") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  nlohmann::ordered_json j;
  j["tool"] = "ayf";
  j["tool_version"] = kVersion;
  j["command"] = command;
  j["config_hash"] = hash;
  j["status"] = status;
  j["files"] = files;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

config::ExperimentConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  config::ExperimentConfig cfg = path.empty() ? config::ExperimentConfig{} : config::load(path);
  for (const auto& o : overrides) config::apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

std::string log_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

// Streams log rows as they arrive so that a diverged run keeps its history.
struct RunLogs {
  CsvWriter log;
  CsvWriter timing;

  RunLogs(const fs::path& dir, const std::string& stem)
      : log(dir / (stem + ".csv"), "iter,loss,r,grad_norm,w_adaptive"),
        timing(dir / (stem + "_timing.csv"), "iter,wallclock_ms") {}

  void add(const trainer::LogRow& r) {
    log.row({std::to_string(r.iter), format_double(r.loss), format_double(r.r), format_double(r.grad_norm),
             log_cell(r.w_adaptive)});
    timing.row({std::to_string(r.iter), format_double(r.wallclock_ms)});
  }
};

trainer::TrainHooks make_hooks(RunLogs& logs, const fs::path& dir, const std::string& prefix,
                               const std::string& hash) {
  trainer::TrainHooks hooks;
  hooks.on_log = [&logs](const trainer::LogRow& r) { logs.add(r); };
  hooks.on_checkpoint = [dir, prefix, hash](std::int64_t iter, const net::MlpFlowMap& model) {
    fs::create_directories(dir / "checkpoints");
    char name[64];
    std::snprintf(name, sizeof name, "%s_%08lld.ckpt", prefix.c_str(), static_cast<long long>(iter));
    checkpoint::save(dir / "checkpoints" / name, model, hash);
  };
  return hooks;
}

void require_compatible(const net::ModelSpec& a, const net::ModelSpec& b) {
  if (a.dim != b.dim || a.classes != b.classes || a.hidden != b.hidden || a.embed_width != b.embed_width ||
      a.freqs != b.freqs) {
    throw ConfigError("checkpoint architecture does not match the config's model.* keys");
  }
}

// Trains one student into `dir`; returns it. Divergence propagates after
// the log has been written.
net::MlpFlowMap train_into(const experiment::Setup& setup, const fs::path& dir) {
  const std::string hash = setup.cfg.hash();
  net::MlpFlowMap model = experiment::init_model(setup);
  RunLogs logs(dir, "log");
  trainer::train(model, *setup.teacher, *setup.data, setup.cfg.train, make_hooks(logs, dir, "train", hash));
  checkpoint::save(dir / "model.ckpt", model, hash);
  return model;
}

}  // namespace

fs::path resolve_output(const std::string& explicit_out, const std::string& command, const std::string& hash) {
  if (!explicit_out.empty()) return fs::absolute(explicit_out);
  const char* root = std::getenv(kOutputRootEnv);
  const fs::path base = (root && *root) ? fs::path(root) : fs::path("runs");
  return fs::absolute(base / (command + "-" + hash));
}

OutputLock::OutputLock(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  const fs::path lock = dir_ / ".lock";
  const int fd = ::open(lock.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw IoError("output directory " + dir_.string() + " is locked by another writer (remove " +
                    lock.string() + " if stale)");
    }
    throw IoError("cannot create " + lock.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(dir_ / ".lock", ec);
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int cmd_thm1(const Thm1Options& opts) {
  return guarded([&] {
    if (!(opts.c > 0.0)) throw ConfigError("--c must be > 0");
    if (!(opts.eps >= 0.0)) throw ConfigError("--eps must be >= 0");
    if (opts.max_steps < 1) throw ConfigError("--max-steps must be >= 1");
    if (opts.mc_samples < 1) throw ConfigError("--mc-samples must be >= 1");
    if (opts.dim < 1) throw ConfigError("--dim must be >= 1");
    std::string canonical;
    canonical += "c = " + format_double(opts.c) + "\n";
    canonical += "dim = " + std::to_string(opts.dim) + "\n";
    canonical += "eps = " + format_double(opts.eps) + "\n";
    canonical += "max_steps = " + std::to_string(opts.max_steps) + "\n";
    canonical += "mc_samples = " + std::to_string(opts.mc_samples) + "\n";
    canonical += "seed = " + std::to_string(opts.seed) + "\n";
    const std::string hash = to_hex(fnv1a(canonical));
    OutputLock lock(resolve_output(opts.out, "thm1", hash));
    write_resolved(lock.dir(), canonical);
    const gaussian::GaussianWorld world(opts.c, opts.dim);
    const gaussian::PerturbedCM model(world, opts.eps);
    CsvWriter csv(lock.dir() / "thm1.csv", "n,variance,w2_analytic,w2_montecarlo,eps,c");
    for (int n = 1; n <= opts.max_steps; n *= 2) {
      const double var = gaussian::multistep_cm_variance(n, world, opts.eps);
      const auto samples = gaussian::simulate_multistep_cm(n, model, static_cast<std::size_t>(opts.mc_samples), opts.seed);
      const double mc = gaussian::w2_isotropic(gaussian::isotropic_variance(samples), world);
      csv.row({std::to_string(n), format_double(var), format_double(gaussian::w2_isotropic(var, world)),
               format_double(mc), format_double(opts.eps), format_double(opts.c)});
      if (n > opts.max_steps / 2) break;
    }
    write_manifest(lock.dir(), "thm1", hash, "ok");
  });
}

int cmd_train(const TrainOptions& opts) {
  return guarded([&] {
    const config::ExperimentConfig cfg = resolve_config(opts.config, opts.overrides);
    const bool adversarial = opts.adversarial || cfg.adversarial;
    const std::string hash = cfg.hash();
    OutputLock lock(resolve_output(opts.out.empty() ? cfg.out : opts.out, "train", hash));
    const fs::path& dir = lock.dir();
    write_resolved(dir, cfg.canonical());
    const auto setup = experiment::make_setup(cfg);
    const std::string command = adversarial ? "train --adversarial" : "train";
    try {
      if (!adversarial) {
        train_into(setup, dir);
      } else {
        const fs::path init = opts.init.empty() ? dir / "model.ckpt" : fs::path(opts.init);
        auto loaded = checkpoint::load(init);
        require_compatible(loaded.model.spec(), setup.spec);
        RunLogs logs(dir, "adv_log");
        trainer::adversarial_finetune(loaded.model, *setup.teacher, *setup.data, cfg.train, cfg.adv,
                                      make_hooks(logs, dir, "adv", hash));
        checkpoint::save(dir / "model_adv.ckpt", loaded.model, hash);
      }
    } catch (const DivergenceError&) {
      write_manifest(dir, command, hash, "diverged");
      throw;
    }
    write_manifest(dir, command, hash, "ok");
  });
}

int cmd_sample(const SampleOptions& opts) {
  return guarded([&] {
    if (opts.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    if (opts.steps < 1) throw ConfigError("--steps must be >= 1");
    if (!(opts.gamma >= 0.0 && opts.gamma <= 1.0)) throw ConfigError("--gamma must lie in [0, 1]");
    if (opts.n < 1) throw ConfigError("--n must be >= 1");
    const std::string ckpt_bytes_hash = to_hex(fnv1a(read_bytes(opts.checkpoint)));
    const auto loaded = checkpoint::load(opts.checkpoint);
    double sigma_d = trainer::TrainConfig{}.sigma_d;
    if (!opts.config.empty()) {
      const auto cfg = config::load(opts.config);
      if (cfg.hash() != loaded.config_hash) {
        throw IntegrityError("config hash " + cfg.hash() + " does not match checkpoint's " + loaded.config_hash);
      }
      sigma_d = cfg.train.sigma_d;
    }
    // One step always lands on 0, where renoising is a no-op.
    const double gamma = opts.steps == 1 ? 0.0 : opts.gamma;
    std::string canonical;
    canonical += "checkpoint_hash = " + ckpt_bytes_hash + "\n";
    canonical += "gamma = " + format_double(gamma) + "\n";
    canonical += "lambda = " + format_double(opts.lambda) + "\n";
    canonical += "n = " + std::to_string(opts.n) + "\n";
    canonical += "seed = " + std::to_string(opts.seed) + "\n";
    canonical += "sigma_d = " + format_double(sigma_d) + "\n";
    canonical += "steps = " + std::to_string(opts.steps) + "\n";
    const std::string hash = to_hex(fnv1a(canonical));
    OutputLock lock(resolve_output(opts.out, "sample", hash));
    write_resolved(lock.dir(), canonical);

    const auto& model = loaded.model;
    const flowmap::NetFlowMap fm(model);
    flowmap::SamplerOptions sopts;
    sopts.lambda = opts.lambda;
    sopts.sigma_d = sigma_d;
    if (model.spec().classes > 0) {
      for (int i = 0; i < opts.n; ++i) sopts.labels.push_back(i % model.spec().classes);
    }
    const auto schedule = flowmap::SamplerSchedule::uniform(opts.steps, gamma, opts.seed);
    const Eigen::MatrixXd x = flowmap::gamma_sample(fm, schedule, static_cast<std::size_t>(opts.n), sopts);

    std::string header = "chain,label";
    for (int d = 0; d < model.dim(); ++d) header += ",x" + std::to_string(d);
    CsvWriter csv(lock.dir() / "samples.csv", header);
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      std::vector<std::string> cells{std::to_string(i),
                                     std::to_string(sopts.labels.empty() ? -1 : sopts.labels[static_cast<std::size_t>(i)])};
      for (Eigen::Index d = 0; d < x.rows(); ++d) cells.push_back(format_double(x(d, i)));
      csv.row(cells);
    }
    nlohmann::ordered_json meta;
    meta["checkpoint_config_hash"] = loaded.config_hash;
    meta["checkpoint_file_hash"] = ckpt_bytes_hash;
    meta["checkpoint_tool_version"] = loaded.tool_version;
    meta["steps"] = opts.steps;
    meta["gamma_requested"] = opts.gamma;
    meta["gamma"] = gamma;
    meta["lambda"] = opts.lambda;
    meta["n"] = opts.n;
    meta["seed"] = opts.seed;
    meta["sigma_d"] = sigma_d;
    meta["tool_version"] = kVersion;
    write_text(lock.dir() / "samples.meta.json", meta.dump(2) + "\n");
    write_manifest(lock.dir(), "sample", hash, "ok");
  });
}

int cmd_ablate(const AblateOptions& opts) {
  int arm_failure = kExitOk;
  const int code = guarded([&] {
    config::ExperimentConfig base = resolve_config(opts.config, opts.overrides);
    std::vector<std::pair<std::string, config::ExperimentConfig>> arms;
    if (opts.suite == "objectives") {
      for (const char* name : {"emd", "lmd", "cm", "shortcut"}) {
        auto cfg = base;
        cfg.guidance.mode = teachers::GuidanceMode::none;
        cfg.train.objective = trainer::parse_objective(name);
        arms.emplace_back(name, cfg);
      }
    } else if (opts.suite == "guidance") {
      if (base.teacher.kind != config::TeacherKind::ring) throw ConfigError("guidance suite needs teacher.kind = ring");
      auto grid = base.eval.lambda_grid;
      grid.push_back(base.eval.cfg_lambda);
      const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
      for (const char* name : {"none", "autoguidance", "cfg"}) {
        auto cfg = base;
        cfg.guidance.mode = teachers::parse_guidance_mode(name);
        if (cfg.guidance.mode != teachers::GuidanceMode::none) {
          // Guided students are trained over the scales they are evaluated at.
          cfg.train.lambda_min = *lo;
          cfg.train.lambda_max = *hi;
        }
        arms.emplace_back(name, cfg);
      }
    } else {
      throw ConfigError("--suite must be objectives or guidance");
    }
    for (auto& [name, cfg] : arms) cfg.validate();

    std::string canonical = "suite = " + opts.suite + "\n" + base.canonical();
    const std::string hash = to_hex(fnv1a(canonical));
    OutputLock lock(resolve_output(opts.out.empty() ? base.out : opts.out, "ablate-" + opts.suite, hash));
    const fs::path& dir = lock.dir();
    write_resolved(dir, canonical);
    CsvWriter table(dir / "ablation.csv", "suite,arm,status,steps,gamma,lambda,w2_mean,w2_std,seeds,n");
    CsvWriter metric_csv(dir / "metrics.csv", "metric,value,seed,n,run_id");
    for (const auto& [name, cfg] : arms) {
      const fs::path arm_dir = dir / "arms" / name;
      fs::create_directories(arm_dir);
      write_resolved(arm_dir, cfg.canonical());
      const auto setup = experiment::make_setup(cfg);
      std::clog << "[" << opts.suite << "] training arm " << name << std::endl;
      std::optional<net::MlpFlowMap> model;
      std::string status = "ok";
      try {
        model.emplace(train_into(setup, arm_dir));
      } catch (const DivergenceError& e) {
        std::cerr << "arm " << name << " diverged: " << e.what() << "\n";
        status = "diverged";
        arm_failure = kExitDivergence;
      }
      const std::string run_id = opts.suite + "-" + name + "-" + cfg.hash();
      for (int steps : cfg.eval.steps) {
        const double gamma = experiment::sampler_gamma(setup, cfg.eval.gamma);
        if (!model) {
          table.row({opts.suite, name, status, std::to_string(steps), format_double(gamma), "", "", "",
                     std::to_string(cfg.eval.seeds), std::to_string(cfg.eval.samples)});
          continue;
        }
        const double lambda = experiment::evaluation_lambda(*model, setup, steps);
        const auto w = experiment::w2_per_seed(*model, setup, steps, lambda);
        const auto s = metrics::summarize(w);
        table.row({opts.suite, name, status, std::to_string(steps), format_double(gamma), format_double(lambda),
                   format_double(s.mean), format_double(s.std), std::to_string(cfg.eval.seeds),
                   std::to_string(cfg.eval.samples)});
        for (std::size_t k = 0; k < w.size(); ++k) {
          metric_csv.row({"w2_exact_steps_" + std::to_string(steps), format_double(w[k]),
                          std::to_string(experiment::kSampleSeed + k), std::to_string(cfg.eval.samples), run_id});
        }
        std::clog << "  " << name << " steps=" << steps << " lambda=" << lambda << " W2=" << s.mean << " +- "
                  << s.std << std::endl;
      }
    }
    write_manifest(dir, "ablate --suite " + opts.suite, hash, arm_failure == kExitOk ? "ok" : "partial");
  });
  return code != kExitOk ? code : arm_failure;
}

}  // namespace ayf::cli
