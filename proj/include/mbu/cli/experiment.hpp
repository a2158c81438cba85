#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbu/dbn/bits.hpp"
#include "mbu/dbn/program.hpp"
#include "mbu/learn/model_search.hpp"
#include "mbu/plan/planner.hpp"
#include "mbu/utility/utility.hpp"

namespace mbu::cli {

/// Bad configuration: unknown key, malformed value, inconsistent settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The agent could not be built at maturity (specification binding failed).
class AgentFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AgentKind { ModelBased, RL, Goal, Prediction, Knowledge };

std::string to_string(AgentKind k);
AgentKind parse_agent(const std::string& text);

/// Every knob of an experiment. Empty strings and zeros mean "default for the
/// environment and agent kind", resolved by resolved().
struct ExperimentConfig {
  std::string experiment = "run";
  std::string env = "q67";
  std::string env_param;  // alpha for the q67 variants, flip probability for period4
  AgentKind agent = AgentKind::ModelBased;
  std::string spec;
  std::string goal_var = "o";
  int horizon = 4;
  std::string discount;

  std::size_t min_training = 2000;
  std::size_t max_training = 5000;
  std::size_t check_every = 500;
  std::size_t maturity_window = 500;
  double maturity_threshold = 0.0;
  int noise_core_nodes = 0;

  std::size_t mature_steps = 10000;
  std::string mature_policy = "plan";     // plan | delude
  std::string on_contradiction = "fail";  // fail | relearn
  std::string delusion_var = "b";
  std::uint64_t seed = 0;

  std::size_t learn_steps = 2000;
  std::size_t top_k = 5;

  std::size_t trials = 100;
  double gamma = 0.9;
  int depth = 4;
  std::size_t max_policies = 5;
  std::string rewrite = "unobserved-equals:c";

  std::size_t sweep_seeds = 10;
  std::string sweep_alphas;

  std::optional<double> expect_realized;
  double expect_tolerance = 0.02;
  std::optional<double> expect_delusion_min;
  std::optional<double> expect_delusion_max;

  std::string out;
  std::string format = "json";

  /// Sets one field from its key=value form. Throws ConfigError.
  void set(const std::string& key, const std::string& value);
  /// Reads key=value lines; '#' starts a comment. Throws ConfigError.
  void load(std::istream& in);
  void load_file(const std::string& path);
  /// All fields as key=value pairs with defaults filled in.
  std::map<std::string, std::string> to_map() const;

  /// Copy with environment- and agent-dependent defaults filled in; checks consistency.
  ExperimentConfig resolved() const;

  dbn::DbnProgram environment() const;
  utility::UtilitySpec utility_spec() const;
  plan::Discount discount_fn() const;
  learn::CandidateSpace candidate_space() const;
};

struct StepRecord {
  std::size_t t = 0;  // 1-based
  bool mature = false;
  dbn::ActionVec action;
  dbn::ObsVec obs;
  bool deluded = false;
  std::optional<double> u;         // agent's utility of the history up to this step
  std::optional<double> realized;  // the same utility measured on the true state
  int model = -1;                  // index of the model in force, -1 while training
  std::optional<double> value;
  std::optional<double> runner_up;
};

struct RunSummary {
  std::size_t steps = 0;
  std::size_t training_steps = 0;
  std::size_t mature_steps = 0;
  bool forced_maturity = false;
  std::size_t relearns = 0;
  std::optional<double> mean_u;
  std::optional<double> mean_realized;
  double delusion_fraction = 0.0;
  std::string model_text;
  int model_dl = 0;
  bool recovered = false;  // learned model equals the environment up to renaming
};

struct RunResult {
  std::vector<StepRecord> steps;
  RunSummary summary;
};

/// Training under the probe policy, a maturity check every check_every steps
/// from min_training on (forced at max_training), then the mature loop.
/// Throws AgentFailure when binding fails and relearning is off or exhausted.
RunResult run_experiment(const ExperimentConfig& config, const std::function<void(const StepRecord&)>& on_step = {});

/// Means over the mature steps of `steps`; model fields are left empty.
RunSummary summarize(const std::vector<StepRecord>& steps);

std::string step_json(const StepRecord& r);
std::string summary_csv_header();
std::string summary_csv_row(const ExperimentConfig& config, const RunSummary& s);
std::string summary_json(const ExperimentConfig& config, const RunSummary& s);

/// Subcommands. Each writes its report to `out` and returns the exit code:
/// 0 when the experiment's assertion holds, 1 when it does not.
int cmd_appendix_a(std::ostream& out);
int cmd_learn(const ExperimentConfig& config, std::ostream& out);
int cmd_run(const ExperimentConfig& config, std::ostream& out);
int cmd_selfmod(const ExperimentConfig& config, std::ostream& out);
int cmd_sweep(const ExperimentConfig& config, std::ostream& out);

}  // namespace mbu::cli
