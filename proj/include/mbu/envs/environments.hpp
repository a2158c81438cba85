#pragma once

#include <string>

#include "mbu/dbn/fraction.hpp"
#include "mbu/dbn/program.hpp"

namespace mbu::envs {

/// Environment 1: hidden (s, r, v) cycling through a 7-state loop with s flipped
/// by noise; the agent sees (o, p) = (s, v) unless b replaces them by (c, d).
/// Actions (a, b, c, d); a is the agent's guess of the unobserved r.
dbn::DbnProgram make_q67(dbn::Fraction alpha);

/// Environment 2: s holds its value while the 2-bit counter (r, v) counts; when
/// the counter wraps, s is replaced by a coin flip (prob `flip` of negation).
/// Actions (a, b, c); o = s unless b replaces it by c.
dbn::DbnProgram make_period4(dbn::Fraction flip = dbn::Fraction(1, 2));

/// Environment 1 plus an observed reward bit that equals s, or d when b is set.
/// Not part of the original pair; exists to show a reward maximizer using the
/// delusion action.
dbn::DbnProgram make_reward_channel(dbn::Fraction alpha = dbn::Fraction(99, 100));

/// Builds an environment by name ("q67", "period4", "q67-reward") and optional
/// parameter: alpha for the q67 variants, flip probability for period4, given
/// as "99/100" or "alpha=99/100".
dbn::DbnProgram make_environment(const std::string& name, const std::string& param = "");

}  // namespace mbu::envs
