#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mbu/dbn/history.hpp"
#include "mbu/dbn/program.hpp"
#include "mbu/dbn/rng.hpp"
#include "mbu/utility/utility.hpp"

namespace mbu::envs {

/// A running environment. The hidden state stays on the simulator side; agents
/// only see what act() returns.
class EnvInstance {
 public:
  EnvInstance(dbn::DbnProgram program, std::uint64_t seed);

  /// Performs one step and returns its observation. The first call observes
  /// the initial state; later calls transition first.
  dbn::ObsVec act(dbn::ActionVec a);

  const dbn::DbnProgram& program() const { return program_; }
  const dbn::History& history() const { return history_; }
  /// True states, one per completed step.
  const std::vector<dbn::StateVec>& states() const { return states_; }

 private:
  dbn::DbnProgram program_;
  dbn::Rng rng_;
  dbn::History history_;
  std::vector<dbn::StateVec> states_;
};

struct GroundTruthStep {
  dbn::StateVec state;
  dbn::ActionVec action;
  dbn::ObsVec obs;
  double realized = 0.0;
};

/// Per-step utility of `spec` evaluated on the true states. Throws NoMatch if
/// the spec does not bind to the true program.
std::vector<double> realized_utility(const dbn::DbnProgram& truth, const dbn::History& h,
                                     const std::vector<dbn::StateVec>& states, const utility::UtilitySpec& spec);

std::vector<GroundTruthStep> ground_truth_trace(const EnvInstance& env, const utility::UtilitySpec& spec);

}  // namespace mbu::envs
