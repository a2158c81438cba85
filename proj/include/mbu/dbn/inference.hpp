#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "mbu/dbn/bits.hpp"
#include "mbu/dbn/history.hpp"
#include "mbu/dbn/program.hpp"

namespace mbu::dbn {

/// Normalized distribution over the assignments of a program's state variables,
/// indexed by StateVec::bits().
class Belief {
 public:
  Belief() = default;
  Belief(std::vector<double> weights, int width);

  int width() const { return width_; }
  std::size_t size() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  double probability(StateVec s) const;
  /// P(state variable `var` is true).
  double marginal(int var) const;

  static Belief uniform(int width);

 private:
  std::vector<double> weights_;
  int width_ = 0;
};

/// Transition and output probability tables of a program, tabulated for every
/// action. Immutable after construction.
class CompiledModel {
 public:
  explicit CompiledModel(DbnProgram program);

  const DbnProgram& program() const { return program_; }
  std::size_t state_count() const { return std::size_t{1} << program_.state_width(); }
  std::size_t obs_count() const { return std::size_t{1} << program_.obs_width(); }
  std::size_t action_count() const { return std::size_t{1} << program_.action_width(); }

  /// P(z_t = next | z_{t-1} = prev, a_t = a).
  double transition(std::uint32_t prev, std::uint32_t a, std::uint32_t next) const {
    return trans_[trans_offset(a) + prev * state_count() + next];
  }
  /// P(o_t = o | z_t = z, a_t = a).
  double output(std::uint32_t z, std::uint32_t a, std::uint32_t o) const {
    return obs_[(a * state_count() + z) * obs_count() + o];
  }
  const std::vector<double>& init() const { return init_; }
  bool actions_affect_transitions() const { return action_dependent_; }

 private:
  std::size_t trans_offset(std::uint32_t a) const {
    return action_dependent_ ? a * state_count() * state_count() : 0;
  }

  DbnProgram program_;
  bool action_dependent_ = false;
  std::vector<double> trans_;
  std::vector<double> obs_;
  std::vector<double> init_;
};

/// Exact forward filter. Before the first observation the belief is the
/// initial distribution over z_1; afterwards it is P(z_t | h).
class Filter {
 public:
  explicit Filter(std::shared_ptr<const CompiledModel> model);
  explicit Filter(const DbnProgram& program);

  /// Distribution of the state that the next observation will read.
  std::vector<double> next_state_prior(ActionVec a) const;
  /// P(o_{t+1} = . | h, a), indexed by ObsVec::bits().
  std::vector<double> predict(ActionVec a) const;
  /// Conditions on (a, o) and returns P(o | h, a). Throws ModelContradiction when
  /// that probability is zero; the filter is left unchanged in that case.
  double observe(ActionVec a, ObsVec o);

  Belief belief() const { return Belief(weights_, model_->program().state_width()); }
  const std::vector<double>& weights() const { return weights_; }
  double log_likelihood() const { return log_likelihood_; }
  std::size_t steps() const { return steps_; }
  const CompiledModel& model() const { return *model_; }
  const std::shared_ptr<const CompiledModel>& model_ptr() const { return model_; }

 private:
  std::shared_ptr<const CompiledModel> model_;
  std::vector<double> weights_;
  double log_likelihood_ = 0.0;
  std::size_t steps_ = 0;
};

/// P(h | q); exactly 0 for impossible histories. Underflows for long histories,
/// where log_likelihood should be used instead.
double likelihood(const DbnProgram& program, const History& h);
/// ln P(h | q); -infinity for impossible histories.
double log_likelihood(const DbnProgram& program, const History& h);
/// P(z_t | h); for the empty history, the initial distribution.
Belief filter(const DbnProgram& program, const History& h);
/// P(o | h, a) indexed by ObsVec::bits().
std::vector<double> predictive(const DbnProgram& program, const History& h, ActionVec a);

inline constexpr std::size_t kDefaultOracleBound = 8;

/// Exhaustive enumeration over hidden-state histories (z_1, ..., z_t) consistent
/// with h, with every Choice draw enumerated explicitly. Calls `visit` with each
/// state history of non-zero probability and its joint probability P(z, h).
/// For the empty history the visited histories are the length-1 initial states.
void enumerate_state_histories(const DbnProgram& program, const History& h,
                               const std::function<void(const std::vector<StateVec>&, double)>& visit,
                               std::size_t bound = kDefaultOracleBound);

struct StateHistoryDistribution {
  std::map<std::vector<StateVec>, double> weights;  // normalized P(z | h)
  double evidence = 0.0;                            // P(h), before normalization
};

StateHistoryDistribution state_history_distribution(const DbnProgram& program, const History& h,
                                                    std::size_t bound = kDefaultOracleBound);

}  // namespace mbu::dbn
