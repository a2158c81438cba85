#pragma once

#include <cmath>
#include <vector>

#include "mbu/dbn/bits.hpp"
#include "mbu/dbn/history.hpp"

namespace testing_util {

using mbu::dbn::ActionVec;
using mbu::dbn::ObsVec;
using mbu::dbn::StateVec;

inline ActionVec act(std::vector<bool> bits) { return ActionVec::from_bools(bits); }
inline ObsVec obs(std::vector<bool> bits) { return ObsVec::from_bools(bits); }
inline StateVec state(std::vector<bool> bits) { return StateVec::from_bools(bits); }

inline bool close(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

}  // namespace testing_util
