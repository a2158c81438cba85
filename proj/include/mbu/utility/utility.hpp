#pragma once

#include <functional>
#include <memory>
#include <string>

#include "mbu/dbn/history.hpp"
#include "mbu/dbn/inference.hpp"
#include "mbu/dbn/program.hpp"

namespace mbu::utility {

enum class SpecKind {
  UnobservedStateEqualsAction,  // 1 when action var equals the state var no output reads
  ObservedStateEqualsPrevAction,  // 1 when action var (lag steps back) equals the state var the outputs read
  RewardChannel,
  GoalPredicate,
  PredictionMatch,
  KnowledgeSeeking,
};

using GoalFn = std::function<bool(const dbn::History&)>;

struct UtilitySpec {
  SpecKind kind = SpecKind::UnobservedStateEqualsAction;
  std::string var;  // action variable, or the reward observation variable
  int lag = 0;      // ObservedStateEqualsPrevAction only: compare s_t with a_{t-lag}
  GoalFn goal;
  std::string goal_name;

  static UtilitySpec unobserved_equals(std::string action_var);
  static UtilitySpec observed_equals_prev(std::string action_var, int lag = 0);
  static UtilitySpec reward(std::string obs_var);
  static UtilitySpec goal_reached(std::string name, GoalFn predicate);
  static UtilitySpec prediction_match();
  static UtilitySpec knowledge_seeking();

  /// "unobserved-equals:a", "observed-equals-prev:a[:lag]", "reward:r", "prediction", "knowledge".
  static UtilitySpec parse(const std::string& text);
  std::string to_string() const;

  bool model_based() const {
    return kind == SpecKind::UnobservedStateEqualsAction || kind == SpecKind::ObservedStateEqualsPrevAction;
  }
};

struct Binding {
  UtilitySpec spec;
  int target_state = -1;  // model-based variants
  std::string target_name;
  int action_index = -1;
  int obs_index = -1;  // RewardChannel
};

/// State variables read by some output rule.
std::vector<bool> observed_state_vars(const dbn::DbnProgram& program);

/// Matches a specification to a structure of `program`. Throws NoMatch or
/// Ambiguous when the model-based variants find zero or several candidates.
Binding bind(const UtilitySpec& spec, const dbn::DbnProgram& program);

/// Exact model-based utility from the current-step belief. Empty histories
/// (and histories shorter than lag + 1) score 0.
double u_model(const dbn::History& h, const dbn::DbnProgram& program, const Binding& binding);
double u_model(const dbn::History& h, const dbn::Belief& belief, const Binding& binding);

/// The same quantity summed over full state histories by exhaustive enumeration.
double u_model_general(const dbn::History& h, const dbn::DbnProgram& program, const Binding& binding,
                       std::size_t horizon_bound = dbn::kDefaultOracleBound);

/// Reward bit of the last observation.
double u_rl(const dbn::History& h, const Binding& binding);
/// 1 iff the goal holds on h and on no shorter prefix.
double u_goal(const dbn::History& h, const GoalFn& predicate);
/// 1 iff o_t equals the most probable observation predicted from h_{<t} and a_t.
double u_predict(const dbn::History& h, const dbn::DbnProgram& program);
/// 1 - rho(h), rho(h) = P(h | q) 2^-|q|.
double u_knowledge(const dbn::History& h, const dbn::DbnProgram& program);

/// Utility of step `t` (0-based) of h measured on the true state of that step
/// instead of a belief.
double realized(const Binding& binding, const dbn::History& h, std::size_t t, dbn::StateVec true_state);

/// Everything a utility may read at one node of a (real or hypothetical) history.
struct NodeContext {
  const dbn::History& history;
  const dbn::Filter& filter;       // conditioned on all of history
  const dbn::Filter* parent;       // conditioned on history minus its last step; null at the root
};

/// Utility as evaluated inside the planner.
class Utility {
 public:
  virtual ~Utility() = default;
  virtual double evaluate(const NodeContext& node) const = 0;
  /// Number of trailing steps of a node's history, besides its belief, that the
  /// utilities of its descendants read; -1 when they read more, in which case
  /// subtree values can not be memoized on beliefs.
  virtual int memo_context() const = 0;
  virtual std::string name() const = 0;
};

/// Utility for a bound specification; model-based variants read the filter.
std::unique_ptr<Utility> make_utility(const Binding& binding, const dbn::DbnProgram& model);

}  // namespace mbu::utility
