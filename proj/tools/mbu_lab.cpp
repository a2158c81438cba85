// mbu-lab: runs the experiments. Exit codes: 0 assertion held, 1 it did not,
// 2 bad configuration or contract violation.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mbu/cli/experiment.hpp"
#include "mbu/errors.hpp"

namespace {

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::string> alpha;
  std::optional<int> horizon;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<std::string> env;
  std::optional<std::string> agent;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key=value configuration file");
  cmd->add_option("--seed", f.seed, "root seed");
  cmd->add_option("--steps", f.steps, "mature steps (run, sweep) or history length (learn)");
  cmd->add_option("--alpha", f.alpha, "environment parameter, e.g. 99/100");
  cmd->add_option("--horizon", f.horizon, "planning horizon");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--format", f.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--env", f.env, "q67, period4 or q67-reward");
  cmd->add_option("--agent", f.agent, "model-based, rl, goal, prediction or knowledge");
  cmd->add_option("--set", f.sets, "extra key=value settings (repeatable)");
}

mbu::cli::ExperimentConfig build(const Flags& f, const std::string& command) {
  mbu::cli::ExperimentConfig c;
  c.experiment = command;
  if (!f.config.empty()) c.load_file(f.config);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw mbu::cli::ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.env) c.set("env", *f.env);
  if (f.agent) c.set("agent", *f.agent);
  if (f.seed) c.seed = *f.seed;
  if (f.steps) c.set(command == "learn" ? "learn_steps" : "mature_steps", std::to_string(*f.steps));
  if (f.alpha) c.env_param = *f.alpha;
  if (f.horizon) c.set("horizon", std::to_string(*f.horizon));
  if (f.out) c.out = *f.out;
  if (f.format) c.format = *f.format;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experiments with model-based utility agents"};
  app.require_subcommand(1);
  Flags flags;
  auto* loops = app.add_subcommand("appendix-a", "enumerate the 1458 loop candidates and print the matches");
  auto* learn = app.add_subcommand("learn", "learn a model from a probing history and print the best candidates");
  auto* run = app.add_subcommand("run", "train, mature and run an agent");
  auto* selfmod = app.add_subcommand("selfmod", "check that pi-star never replaces itself");
  auto* sweep = app.add_subcommand("sweep", "repeat run over seeds and environment parameters");
  for (auto* cmd : {learn, run, selfmod, sweep}) add_common(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (loops->parsed()) return mbu::cli::cmd_appendix_a(std::cout);
    const std::string name = learn->parsed() ? "learn" : run->parsed() ? "run" : selfmod->parsed() ? "selfmod" : "sweep";
    const auto config = build(flags, name);
    if (learn->parsed()) return mbu::cli::cmd_learn(config, std::cout);
    if (run->parsed()) return mbu::cli::cmd_run(config, std::cout);
    if (selfmod->parsed()) return mbu::cli::cmd_selfmod(config, std::cout);
    return mbu::cli::cmd_sweep(config, std::cout);
  } catch (const mbu::cli::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const mbu::ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << '\n';
    return 2;
  } catch (const mbu::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
