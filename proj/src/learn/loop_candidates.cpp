#include "mbu/learn/loop_candidates.hpp"

#include "mbu/errors.hpp"

namespace mbu::learn {

std::string LoopCandidate::to_string() const {
  return "binary_relation = " + std::to_string(relation) + " binary_place = " + std::to_string(place) +
         " binary_inputs = " + std::to_string(inputs[0]) + " " + std::to_string(inputs[1]) +
         " other_inputs = " + std::to_string(others[0]) + " " + std::to_string(others[1]) +
         " initial_r = " + std::to_string(initial_r ? 1 : 0);
}

LoopCandidate decode_loop_candidate(int ordinal) {
  require(ordinal >= 0 && ordinal < kLoopCandidateCount, "candidate ordinal out of range");
  LoopCandidate c;
  c.ordinal = ordinal;
  int x = ordinal;
  c.relation = x % 3;
  x /= 3;
  c.place = x % 3;
  x /= 3;
  for (int& in : c.inputs) {
    in = x % 3;
    x /= 3;
  }
  for (int& in : c.others) {
    in = x % 3;
    x /= 3;
  }
  c.initial_r = x == 1;
  return c;
}

std::vector<LoopCandidate> enumerate_appendix_a() {
  std::vector<LoopCandidate> out;
  out.reserve(kLoopCandidateCount);
  for (int i = 0; i < kLoopCandidateCount; ++i) out.push_back(decode_loop_candidate(i));
  return out;
}

const std::vector<std::pair<bool, bool>>& observed_cycle() {
  static const std::vector<std::pair<bool, bool>> cycle = {{true, false}, {false, false}, {true, true},
                                                           {true, false}, {true, true},   {false, true},
                                                           {false, true}};
  return cycle;
}

std::vector<std::pair<bool, bool>> default_behavior() {
  auto b = observed_cycle();
  b.push_back(b.front());
  return b;
}

bool behavior_match(const LoopCandidate& c, const std::vector<std::pair<bool, bool>>& behavior) {
  if (behavior.empty()) return true;
  bool srv[3] = {behavior[0].first, c.initial_r, behavior[0].second};
  for (std::size_t t = 1; t < behavior.size(); ++t) {
    // All inputs are read before any variable is written.
    const bool a = srv[c.inputs[0]], b = srv[c.inputs[1]];
    const bool d = srv[c.others[0]], e = srv[c.others[1]];
    srv[c.place] = c.relation == 0 ? (a && b) : c.relation == 1 ? (a || b) : (a != b);
    srv[(c.place + 1) % 3] = d;
    srv[(c.place + 2) % 3] = e;
    if (srv[0] != behavior[t].first || srv[2] != behavior[t].second) return false;
  }
  return true;
}

}  // namespace mbu::learn
