#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mbu/dbn/fraction.hpp"
#include "mbu/dbn/history.hpp"
#include "mbu/dbn/program.hpp"

namespace mbu::learn {

/// Bounded family of candidate programs.
///
/// A candidate has up to max_state_vars hidden variables z0, z1, ... Each state
/// rule is a deterministic expression over the previous state with at most
/// max_expr_nodes nodes. At most one rule is noisy, in one of two forms:
///   flip: (choice p e (not e))   hold: (choice p e self)
/// with p on the grid k/fraction_denominator and e of at most noise_core_nodes
/// nodes. Each output is a constant, a state literal, a negated state literal,
/// an action, or (ite g x y) with g an action, x an action or constant and y one
/// of the plain forms. State rules do not read actions.
struct CandidateSpace {
  int max_state_vars = 3;
  int max_expr_nodes = 3;
  int noise_core_nodes = 3;
  bool flip_noise = true;
  bool hold_noise = true;
  std::uint32_t fraction_denominator = 100;
  bool action_gates = true;
};

/// Names for the learned program's action and output variables.
struct Alphabet {
  std::vector<std::string> actions;
  std::vector<std::string> observations;
};

struct ScoredModel {
  dbn::DbnProgram program;
  double log_likelihood = 0.0;  // natural log
  double log_prior = 0.0;       // -|q| ln 2
  int description_length = 0;
  std::size_t ordinal = 0;  // enumeration position of the structure
  double score() const { return log_likelihood + log_prior; }
};

struct SearchStats {
  std::size_t structures = 0;  // state-rule structures visited
  std::size_t feasible = 0;    // full candidates with non-zero likelihood
  std::size_t scored = 0;
};

/// argmax over the space of ln P(h|q) + ln 2^-|q|; ties go to the shorter
/// program, then to the earlier structure. Throws NoExplanation if every
/// candidate assigns h probability zero.
ScoredModel map_lambda(const dbn::History& h, const CandidateSpace& space, const Alphabet& alphabet,
                       SearchStats* stats = nullptr);

/// The best `k` candidates, best first.
std::vector<ScoredModel> map_lambda_top(const dbn::History& h, const CandidateSpace& space, const Alphabet& alphabet,
                                        std::size_t k, SearchStats* stats = nullptr);

/// Best Choice probability for a program with exactly one Choice node: the grid
/// fraction k/den (or no Choice at all, meaning the `then` branch always)
/// maximizing ln P(h|q) + ln 2^-|q|. nullopt stands for the deterministic rule.
std::optional<dbn::Fraction> estimate_alpha(const dbn::History& h, const dbn::DbnProgram& structure,
                                            std::uint32_t denominator = 100);

/// True iff some permutation of b's state variables makes it assign the same
/// initial, transition and output probabilities as a (to `tol`) and both have
/// the same description length. Action and output names must agree in order.
bool equivalent_up_to_renaming(const dbn::DbnProgram& a, const dbn::DbnProgram& b, double tol = 1e-12);

/// Reduced fractions k/den for 0 < k < den, without duplicates, in increasing order.
std::vector<dbn::Fraction> fraction_grid(std::uint32_t denominator);

}  // namespace mbu::learn
