#include <CLI11.hpp>

#include "ayf/cli.hpp"
#include "ayf/runtime.hpp"
#include "ayf/version.hpp"

int main(int argc, char** argv) {
  ayf::configure_allocator();
  CLI::App app{"Flow-map distillation experiments on 2-D toy teachers"};
  app.set_version_flag("--version", ayf::kVersion);
  app.require_subcommand(1);

  ayf::cli::Thm1Options thm1;
  auto* c_thm1 = app.add_subcommand("thm1", "Multistep-CM W2 versus step count in the Gaussian world");
  c_thm1->add_option("--c", thm1.c, "data standard deviation")->capture_default_str();
  c_thm1->add_option("--eps", thm1.eps, "denoiser perturbation")->capture_default_str();
  c_thm1->add_option("--max-steps", thm1.max_steps, "largest step count (powers of two up to it)")->capture_default_str();
  c_thm1->add_option("--mc-samples", thm1.mc_samples, "Monte-Carlo chains per step count")->capture_default_str();
  c_thm1->add_option("--dim", thm1.dim, "dimension of the simulated world")->capture_default_str();
  c_thm1->add_option("--seed", thm1.seed, "simulation seed")->capture_default_str();
  c_thm1->add_option("--out", thm1.out, "output directory");

  ayf::cli::TrainOptions train;
  auto* c_train = app.add_subcommand("train", "Distill a flow-map student (or finetune one adversarially)");
  c_train->add_option("--config", train.config, "experiment config file")->check(CLI::ExistingFile);
  c_train->add_option("--set", train.overrides, "override a config key (key=value), repeatable");
  c_train->add_option("--out", train.out, "output directory");
  c_train->add_flag("--adversarial", train.adversarial, "finetune an existing student with the adversarial loop");
  c_train->add_option("--init", train.init, "checkpoint to finetune (default <out>/model.ckpt)");

  ayf::cli::SampleOptions sample;
  auto* c_sample = app.add_subcommand("sample", "Draw samples from a trained student");
  c_sample->add_option("--checkpoint", sample.checkpoint, "student checkpoint")->required();
  c_sample->add_option("--config", sample.config, "config the checkpoint must have been trained with");
  c_sample->add_option("--steps", sample.steps, "sampling steps")->capture_default_str();
  c_sample->add_option("--gamma", sample.gamma, "stochasticity in [0, 1]")->capture_default_str();
  c_sample->add_option("--lambda", sample.lambda, "guidance scale")->capture_default_str();
  c_sample->add_option("--n", sample.n, "number of chains")->capture_default_str();
  c_sample->add_option("--seed", sample.seed, "sampler seed")->capture_default_str();
  c_sample->add_option("--out", sample.out, "output directory");

  ayf::cli::AblateOptions ablate;
  auto* c_ablate = app.add_subcommand("ablate", "Train matched-budget students per arm and compare W2");
  c_ablate->add_option("--suite", ablate.suite, "objectives | guidance")
      ->required()
      ->check(CLI::IsMember({"objectives", "guidance"}));
  c_ablate->add_option("--config", ablate.config, "experiment config file")->check(CLI::ExistingFile);
  c_ablate->add_option("--set", ablate.overrides, "override a config key (key=value), repeatable");
  c_ablate->add_option("--out", ablate.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ayf::cli::kExitOk : ayf::cli::kExitConfig;
  }

  if (c_thm1->parsed()) return ayf::cli::cmd_thm1(thm1);
  if (c_train->parsed()) return ayf::cli::cmd_train(train);
  if (c_sample->parsed()) return ayf::cli::cmd_sample(sample);
  return ayf::cli::cmd_ablate(ablate);
}
