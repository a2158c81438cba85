#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mbu/dbn/bits.hpp"
#include "mbu/dbn/expr.hpp"
#include "mbu/dbn/fraction.hpp"

namespace mbu::dbn {

enum class VarKind { State, Observation, Action };

struct VarId {
  std::string name;
  VarKind kind = VarKind::State;
  friend bool operator==(const VarId&, const VarId&) = default;
};

struct StateRule {
  std::string name;
  Expr update;  // reads PrevState, CurAction, Const
};

struct ObsRule {
  std::string name;
  Expr output;  // reads CurState, CurAction, Const
};

/// Exact prior 2^-exponent.
struct DyadicPrior {
  int exponent = 0;
  double value() const;
  double log() const;  // natural log
  friend bool operator==(const DyadicPrior&, const DyadicPrior&) = default;
  friend bool operator<(const DyadicPrior& a, const DyadicPrior& b) { return a.exponent > b.exponent; }
};

/// Initial-state distribution; an empty weight list means uniform.
struct InitDist {
  std::vector<std::pair<StateVec, Fraction>> weights;
  bool uniform() const { return weights.empty(); }
  static InitDist point(StateVec s) { return InitDist{{{s, Fraction(1, 1)}}}; }
  friend bool operator==(const InitDist&, const InitDist&) = default;
};

/// Stochastic Boolean dynamic Bayesian network. The first state is drawn from
/// the initial distribution and observed at step 1; later states follow the
/// update rules. Observations are computed from the current state and action.
class DbnProgram {
 public:
  DbnProgram(std::vector<std::string> actions, std::vector<StateRule> states, std::vector<ObsRule> observations,
             InitDist init = {});

  int state_width() const { return static_cast<int>(states_.size()); }
  int action_width() const { return static_cast<int>(actions_.size()); }
  int obs_width() const { return static_cast<int>(obs_.size()); }

  const std::vector<std::string>& actions() const { return actions_; }
  const std::vector<StateRule>& states() const { return states_; }
  const std::vector<ObsRule>& observations() const { return obs_; }
  const InitDist& init() const { return init_; }

  std::optional<VarId> find(const std::string& name) const;
  int state_index(const std::string& name) const;
  int action_index(const std::string& name) const;
  int obs_index(const std::string& name) const;

  /// |q|: sum of rule lengths.
  int description_length() const;
  /// rho(q) = 2^-|q|.
  DyadicPrior prior() const { return DyadicPrior{description_length()}; }

  int choice_count() const;

  /// Same program with every Choice probability replaced.
  DbnProgram with_choice_probability(Fraction p) const;
  /// Same program with every Choice replaced by its `then` branch.
  DbnProgram without_choice() const;

  /// Probability of initial state s.
  double init_probability(StateVec s) const;

  void check_state(StateVec s) const;
  void check_action(ActionVec a) const;
  void check_obs(ObsVec o) const;

 private:
  void validate() const;

  std::vector<std::string> actions_;
  std::vector<StateRule> states_;
  std::vector<ObsRule> obs_;
  InitDist init_;
};

}  // namespace mbu::dbn
