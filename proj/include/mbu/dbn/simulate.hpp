#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mbu/dbn/history.hpp"
#include "mbu/dbn/program.hpp"
#include "mbu/dbn/rng.hpp"

namespace mbu::dbn {

struct StepResult {
  StateVec next;
  ObsVec obs;
};

/// Draws an initial state from the program's initial distribution.
StateVec sample_initial(const DbnProgram& program, Rng& rng);

/// Next state from the update rules, then the observation of that state. Choice
/// draws consume rng in rule declaration order (state rules, then outputs).
StepResult step(const DbnProgram& program, StateVec prev, ActionVec action, Rng& rng);

/// Observation of state `cur` under `action`.
ObsVec emit(const DbnProgram& program, StateVec cur, ActionVec action, Rng& rng);

using Policy = std::function<ActionVec(const History&)>;

struct Trace {
  History history;
  std::vector<StateVec> states;  // states[i] is the state observed at step i+1
};

/// Runs `steps` steps. The first state is `start` if given, otherwise drawn from
/// the initial distribution; it is observed at step 1 without a transition.
Trace simulate_trace(const DbnProgram& program, const Policy& policy, std::size_t steps, Rng& rng,
                     std::optional<StateVec> start = std::nullopt);

History simulate(const DbnProgram& program, const Policy& policy, std::size_t steps, std::uint64_t seed);

}  // namespace mbu::dbn
