#include "mbu/envs/instance.hpp"

#include "mbu/dbn/simulate.hpp"
#include "mbu/errors.hpp"

namespace mbu::envs {

EnvInstance::EnvInstance(dbn::DbnProgram program, std::uint64_t seed)
    : program_(std::move(program)), rng_(dbn::Rng::substream(seed, "env")) {}

dbn::ObsVec EnvInstance::act(dbn::ActionVec a) {
  dbn::StateVec z;
  dbn::ObsVec o;
  if (states_.empty()) {
    z = dbn::sample_initial(program_, rng_);
    o = dbn::emit(program_, z, a, rng_);
  } else {
    auto r = dbn::step(program_, states_.back(), a, rng_);
    z = r.next;
    o = r.obs;
  }
  states_.push_back(z);
  history_.push(a, o);
  return o;
}

std::vector<double> realized_utility(const dbn::DbnProgram& truth, const dbn::History& h,
                                     const std::vector<dbn::StateVec>& states, const utility::UtilitySpec& spec) {
  require(states.size() == h.size(), "one true state per step required");
  auto binding = utility::bind(spec, truth);
  std::vector<double> out;
  out.reserve(h.size());
  for (std::size_t t = 0; t < h.size(); ++t) out.push_back(utility::realized(binding, h, t, states[t]));
  return out;
}

std::vector<GroundTruthStep> ground_truth_trace(const EnvInstance& env, const utility::UtilitySpec& spec) {
  auto u = realized_utility(env.program(), env.history(), env.states(), spec);
  std::vector<GroundTruthStep> out;
  for (std::size_t t = 0; t < u.size(); ++t)
    out.push_back({env.states()[t], env.history()[t].action, env.history()[t].obs, u[t]});
  return out;
}

}  // namespace mbu::envs
