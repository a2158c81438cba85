#include "mbu/dbn/simulate.hpp"

#include <numeric>

#include "mbu/errors.hpp"

namespace mbu::dbn {

StateVec sample_initial(const DbnProgram& program, Rng& rng) {
  const int k = program.state_width();
  const auto& init = program.init();
  if (init.uniform()) return StateVec(static_cast<std::uint32_t>(rng.below(std::uint64_t{1} << k)), k);
  std::uint64_t common = 1;
  for (const auto& [s, w] : init.weights) {
    common = std::lcm(common, std::uint64_t{w.den()});
    if (common > (std::uint64_t{1} << 40)) throw ContractViolation("initial distribution denominators too large");
  }
  std::uint64_t x = rng.below(common);
  for (const auto& [s, w] : init.weights) {
    std::uint64_t mass = w.num() * (common / w.den());
    if (x < mass) return s;
    x -= mass;
  }
  throw ContractViolation("initial distribution does not sum to 1");
}

ObsVec emit(const DbnProgram& program, StateVec cur, ActionVec action, Rng& rng) {
  program.check_state(cur);
  program.check_action(action);
  EvalInputs in{StateVec(0, program.state_width()), cur, action};
  std::uint32_t o = 0;
  for (std::size_t j = 0; j < program.observations().size(); ++j)
    if (program.observations()[j].output.sample(in, rng)) o |= 1u << j;
  return ObsVec(o, program.obs_width());
}

StepResult step(const DbnProgram& program, StateVec prev, ActionVec action, Rng& rng) {
  program.check_state(prev);
  program.check_action(action);
  EvalInputs in{prev, StateVec(0, program.state_width()), action};
  std::uint32_t z = 0;
  for (std::size_t i = 0; i < program.states().size(); ++i)
    if (program.states()[i].update.sample(in, rng)) z |= 1u << i;
  StateVec next(z, program.state_width());
  return {next, emit(program, next, action, rng)};
}

Trace simulate_trace(const DbnProgram& program, const Policy& policy, std::size_t steps, Rng& rng,
                     std::optional<StateVec> start) {
  Trace tr;
  if (steps == 0) return tr;
  StateVec z = start ? *start : sample_initial(program, rng);
  program.check_state(z);
  for (std::size_t t = 0; t < steps; ++t) {
    ActionVec a = policy(tr.history);
    ObsVec o;
    if (t == 0) {
      o = emit(program, z, a, rng);
    } else {
      auto r = step(program, z, a, rng);
      z = r.next;
      o = r.obs;
    }
    tr.history.push(a, o);
    tr.states.push_back(z);
  }
  return tr;
}

History simulate(const DbnProgram& program, const Policy& policy, std::size_t steps, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "env");
  return simulate_trace(program, policy, steps, rng).history;
}

}  // namespace mbu::dbn
