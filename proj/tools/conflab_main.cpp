// conflab: confidence-label training toolkit.
//
// Verbs: gen-labels, make-noise, train, gradcheck, report.
// Global flags: --config PATH, --seed N, --out DIR.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <conflab/conflab.hpp>

int main(int argc, char** argv) {
  CLI::App app{"confidence-label losses: label generation, noise injection, training, reports"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("--config", config_path, "experiment config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the experiment noise seed")
      ->each([&](const std::string&) { seed_given = true; });
  app.add_option("--out", out_dir, "override the experiment output directory");

  auto* gen = app.add_subcommand("gen-labels", "write a label book JSON");
  bool hard = false;
  std::string from_model;
  gen->add_flag("--hard", hard, "emit one-hot labels");
  gen->add_option("--from-model", from_model, "derive labels from a checkpoint's predictions")
      ->check(CLI::ExistingFile);

  auto* noisecmd = app.add_subcommand("make-noise", "inject label noise, write manifests");

  auto* traincmd = app.add_subcommand("train", "run the configured training sweep");

  auto* gradcmd = app.add_subcommand("gradcheck", "verify loss gradients against finite differences");
  int probes = 200;
  bool corrupt = false;
  gradcmd->add_option("--probes", probes, "probes per loss")->check(CLI::PositiveNumber);
  gradcmd->add_flag("--corrupt", corrupt, "fault injection: perturb analytic gradients");

  auto* reportcmd = app.add_subcommand("report", "tabulate cell summaries as markdown + CSV");

  CLI11_PARSE(app, argc, argv);

  conflab::CliOptions opts;
  opts.config_path = config_path;
  if (seed_given) opts.seed = seed;
  opts.out_dir = out_dir;

  try {
    if (gen->parsed()) return conflab::cmd_gen_labels(opts, hard, from_model, std::cout);
    if (noisecmd->parsed()) return conflab::cmd_make_noise(opts, std::cout);
    if (traincmd->parsed()) return conflab::cmd_train(opts, std::cout);
    if (gradcmd->parsed()) return conflab::cmd_gradcheck(opts, probes, corrupt, std::cout);
    if (reportcmd->parsed()) return conflab::cmd_report(opts, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command\n";
  return 1;
}
