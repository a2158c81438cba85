#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace mbu::learn {

/// One deterministic DBN over (s, r, v) made of a binary relation and two
/// plain copies, as searched by the small exhaustive program in the model
/// literature. Variable ordinals: 0 = s, 1 = r, 2 = v.
struct LoopCandidate {
  int ordinal = 0;
  int relation = 0;  // 0 = and, 1 = or, 2 = xor
  int place = 0;     // variable receiving the relation
  std::array<int, 2> inputs{};  // relation inputs
  std::array<int, 2> others{};  // sources for variables (place+1)%3 and (place+2)%3
  bool initial_r = false;

  std::string to_string() const;
};

inline constexpr int kLoopCandidateCount = 3 * 3 * 3 * 3 * 3 * 3 * 2;

/// Ordinal decoding: relation varies fastest, initial_r slowest.
LoopCandidate decode_loop_candidate(int ordinal);
std::vector<LoopCandidate> enumerate_appendix_a();

/// The observed (o, p) = (s, v) loop of environment 1, starting at (T, F).
const std::vector<std::pair<bool, bool>>& observed_cycle();

/// Simulates the candidate from (s, initial_r, v) = (first s, initial_r, first v)
/// and checks s and v against `behavior` at every later step.
bool behavior_match(const LoopCandidate& c, const std::vector<std::pair<bool, bool>>& behavior);

/// `observed_cycle()` followed by its first entry again: 8 steps.
std::vector<std::pair<bool, bool>> default_behavior();

}  // namespace mbu::learn
