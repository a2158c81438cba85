#pragma once

#include <cstddef>
#include <cstdint>

#include "mbu/dbn/bits.hpp"
#include "mbu/dbn/history.hpp"
#include "mbu/dbn/program.hpp"

namespace mbu::learn {

/// Exploration schedule used before maturity. One action bit is the probe gate
/// (b in both environments); every `period` steps it is set for a probe episode
/// of min_length..max_length steps. All other bits are fair coins every step.
struct ProbeSchedule {
  std::size_t period = 50;
  std::size_t offset = 25;  // position of the probe episode within each period
  std::size_t min_length = 1;
  std::size_t max_length = 2;
  int gate = 1;
};

/// Action at step t (0-based); a pure function of (t, seed).
dbn::ActionVec training_policy(std::size_t t, std::uint64_t seed, int action_width, const ProbeSchedule& schedule = {});

/// Mean of P(o_t | h_{<t}, a_t) over the last `window` steps of h.
double mean_predictive(const dbn::History& h, const dbn::DbnProgram& model, std::size_t window);

/// True iff the model's mean one-step predictive probability over the trailing
/// window reaches `threshold`.
bool maturity_check(const dbn::History& h, const dbn::DbnProgram& model, std::size_t window = 500,
                    double threshold = 0.95);

}  // namespace mbu::learn
