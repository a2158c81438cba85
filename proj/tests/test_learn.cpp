#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "mbu/dbn/inference.hpp"
#include "mbu/dbn/simulate.hpp"
#include "mbu/dbn/text_format.hpp"
#include "mbu/envs/environments.hpp"
#include "mbu/errors.hpp"
#include "mbu/learn/loop_candidates.hpp"
#include "mbu/learn/model_search.hpp"
#include "mbu/learn/training.hpp"

using namespace mbu;
using namespace mbu::dbn;
using namespace mbu::learn;
using testing_util::act;
using testing_util::obs;

namespace {

Alphabet alphabet_of(const DbnProgram& p) {
  Alphabet a{p.actions(), {}};
  for (const auto& o : p.observations()) a.observations.push_back(o.name);
  return a;
}

History probing_history(const DbnProgram& env, std::size_t steps, std::uint64_t seed) {
  Policy pol = [&](const History& h) { return training_policy(h.size(), seed, env.action_width()); };
  return simulate(env, pol, steps, seed);
}

// One visible bit that keeps its value w.p. p and flips otherwise.
DbnProgram sticky_bit(Fraction p) {
  return DbnProgram({"x"}, {{"s", Expr::choice(p, Expr::prev_state(0), Expr::negate(Expr::prev_state(0)))}},
                    {{"o", Expr::cur_state(0)}});
}

History bit_sequence(std::size_t length, std::size_t flips) {
  // Exactly `flips` changes, evenly spaced from step 1 on.
  const std::size_t gap = flips ? (length - 1) / flips : 0;
  History h;
  bool v = false;
  for (std::size_t t = 0; t < length; ++t) {
    if (flips && t >= 1 && (t - 1) % gap == 0 && (t - 1) / gap < flips) v = !v;
    h.push(act({false}), obs({v}));
  }
  return h;
}

}  // namespace

TEST_CASE("loop enumeration has 1458 distinct candidates") {
  const auto all = enumerate_appendix_a();
  CHECK(all.size() == 1458u);
  std::set<std::string> distinct;
  for (const auto& c : all) distinct.insert(c.to_string());
  CHECK(distinct.size() == 1458u);
  const auto first = decode_loop_candidate(0);
  CHECK(first.relation == 0);
  CHECK(first.place == 0);
  CHECK(first.inputs == std::array<int, 2>{0, 0});
  CHECK(first.others == std::array<int, 2>{0, 0});
  CHECK_FALSE(first.initial_r);
  CHECK_FALSE(behavior_match(first, default_behavior()));
}

TEST_CASE("exactly two loop candidates match the observed loop") {
  std::vector<LoopCandidate> matches;
  for (const auto& c : enumerate_appendix_a())
    if (behavior_match(c, default_behavior())) matches.push_back(c);
  REQUIRE(matches.size() == 2u);
  CHECK(matches[0].to_string() == "binary_relation = 2 binary_place = 0 binary_inputs = 2 1 other_inputs = 0 1 initial_r = 0");
  CHECK(matches[1].to_string() == "binary_relation = 2 binary_place = 0 binary_inputs = 1 2 other_inputs = 0 1 initial_r = 0");
}

TEST_CASE("fraction grid is the reduced hundredths in increasing order") {
  const auto g = fraction_grid(100);
  CHECK(g.size() == 99u);
  CHECK(g.front() == Fraction(1, 100));
  CHECK(g.back() == Fraction(99, 100));
  CHECK(g[49] == Fraction(1, 2));
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i - 1].value() < g[i].value());
}

TEST_CASE("estimate_alpha picks the grid point with the best exact score") {
  const std::size_t T = 10000;
  const auto structure = sticky_bit(Fraction(1, 2));
  for (std::size_t flips : {200u, 100u, 37u}) {
    const History h = bit_sequence(T, flips);
    // Closed form: ln 1/2 + keeps ln p + flips ln(1-p) - DL ln 2.
    const double keeps = static_cast<double>(T - 1 - flips);
    std::optional<Fraction> best;
    double best_score = -INFINITY;
    int best_dl = 0;
    for (const auto& f : fraction_grid(100)) {
      const int dl = structure.with_choice_probability(f).description_length();
      const double score =
          std::log(0.5) + keeps * std::log(f.value()) + static_cast<double>(flips) * std::log(1 - f.value()) - dl * std::log(2.0);
      if (!best || score > best_score + 1e-9 || (score >= best_score - 1e-9 && dl < best_dl)) {
        best = f;
        best_score = score;
        best_dl = dl;
      }
    }
    CHECK(estimate_alpha(h, structure) == best);
  }
  CHECK(estimate_alpha(bit_sequence(T, 200), structure) == Fraction(49, 50));
  CHECK(estimate_alpha(bit_sequence(T, 100), structure) == Fraction(99, 100));
}

TEST_CASE("estimate_alpha prefers the deterministic rule when nothing flips") {
  CHECK_FALSE(estimate_alpha(bit_sequence(500, 0), sticky_bit(Fraction(1, 2))).has_value());
  auto two = DbnProgram({"x"}, {}, {{"o", Expr::constant(true)}});
  CHECK_THROWS_AS(estimate_alpha(History{}, two), ContractViolation);
}

TEST_CASE("an empty history yields the shortest candidate") {
  const Alphabet al{{"x"}, {"o"}};
  const auto m = map_lambda(History{}, CandidateSpace{}, al);
  CHECK(m.log_likelihood == 0.0);
  CHECK(m.description_length == 1);
  CHECK(m.program.state_width() == 0);
}

TEST_CASE("no candidate explains an output that changes under identical inputs") {
  CandidateSpace space;
  space.max_state_vars = 0;
  History h;
  h.push(act({false}), obs({true}));
  h.push(act({false}), obs({false}));
  CHECK_THROWS_AS(map_lambda(h, space, Alphabet{{"x"}, {"o"}}), NoExplanation);
  // One hidden bit is enough.
  space.max_state_vars = 1;
  CHECK_NOTHROW(map_lambda(h, space, Alphabet{{"x"}, {"o"}}));
}

TEST_CASE("scores agree with the exact likelihood and come sorted") {
  const auto env = envs::make_q67(Fraction(99, 100));
  const History h = probing_history(env, 300, 7);
  const auto top = map_lambda_top(h, CandidateSpace{}, alphabet_of(env), 6);
  REQUIRE(top.size() == 6u);
  for (std::size_t i = 0; i < top.size(); ++i) {
    const auto& m = top[i];
    CHECK(std::abs(m.log_likelihood - log_likelihood(m.program, h)) <= 1e-9);
    CHECK(m.description_length == m.program.description_length());
    CHECK(m.log_prior == doctest::Approx(-m.description_length * std::log(2.0)).epsilon(1e-12));
    if (i > 0) CHECK(top[i - 1].score() >= top[i].score() - 1e-9);
  }
}

TEST_CASE("the learner recovers the environment from a probing history") {
  const auto env = envs::make_q67(Fraction(99, 100));
  const auto m = map_lambda(probing_history(env, 2000, 0), CandidateSpace{}, alphabet_of(env));
  CHECK(m.description_length == 31);
  CHECK(equivalent_up_to_renaming(m.program, env));
}

TEST_CASE("equivalence up to renaming") {
  const auto q = envs::make_q67(Fraction(99, 100));
  // Same program with the state variables listed in another order.
  const auto renamed = parse_program(R"(
action a b c d
state v := r
state s := (choice 99/100 (xor r v) (not (xor r v)))
state r := s
obs o := (ite b c s)
obs p := (ite b d v)
init uniform
)");
  CHECK(equivalent_up_to_renaming(q, renamed));
  CHECK(equivalent_up_to_renaming(renamed, q));
  CHECK_FALSE(equivalent_up_to_renaming(q, envs::make_q67(Fraction(49, 50))));
  CHECK_FALSE(equivalent_up_to_renaming(q, envs::make_q67(Fraction(1, 1))));
  // Same kernels but a longer expression is not the same candidate.
  const auto padded = parse_program(R"(
action a b c d
state s := (choice 99/100 (xor r v) (not (xor r v)))
state r := (not (not s))
state v := r
obs o := (ite b c s)
obs p := (ite b d v)
init uniform
)");
  CHECK_FALSE(equivalent_up_to_renaming(q, padded));
}

TEST_CASE("probe schedule") {
  const std::uint64_t seed = 11;
  std::size_t gated = 0, episodes = 0;
  bool prev = false;
  for (std::size_t t = 0; t < 5000; ++t) {
    const auto a = training_policy(t, seed, 4);
    CHECK(a == training_policy(t, seed, 4));
    if (a[1]) ++gated;
    if (a[1] && !prev) ++episodes;
    prev = a[1];
  }
  CHECK(episodes == 100u);
  CHECK(static_cast<double>(gated) / 5000.0 <= 0.10);
  // Other bits are not constant.
  std::set<std::uint32_t> seen;
  for (std::size_t t = 0; t < 64; ++t) seen.insert(training_policy(t, seed, 4).bits() & 0b1101u);
  CHECK(seen.size() > 4u);
}

TEST_CASE("maturity check") {
  const auto q = envs::make_q67(Fraction(99, 100));
  const History h = probing_history(q, 1000, 3);
  CHECK(maturity_check(h, q, 500, 0.95));

  auto coin = [] { return Expr::choice(Fraction(1, 2), Expr::constant(true), Expr::constant(false)); };
  const DbnProgram uniform(q.actions(), {}, {{"o", coin()}, {"p", coin()}});
  CHECK_FALSE(maturity_check(h, uniform, 500, 0.9));
  CHECK(mean_predictive(h, uniform, 500) == doctest::Approx(0.25));

  const auto det = envs::make_q67(Fraction(1, 1));
  const History hd = probing_history(det, 800, 4);
  CHECK(maturity_check(hd, det, 500, 0.99));
  CHECK_THROWS_AS(maturity_check(hd, det, 801, 0.5), ContractViolation);
}

TEST_CASE("recovery rate does not fall as the history grows") {
  const auto env = envs::make_q67(Fraction(99, 100));
  const std::vector<std::size_t> checkpoints = {500, 1000, 2000};
  std::vector<int> hits(checkpoints.size(), 0);
  const int seeds = 100;
  for (int seed = 0; seed < seeds; ++seed) {
    const History full = probing_history(env, checkpoints.back(), static_cast<std::uint64_t>(seed));
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      const auto m = map_lambda(full.prefix(checkpoints[c]), CandidateSpace{}, alphabet_of(env));
      if (equivalent_up_to_renaming(m.program, env)) ++hits[c];
    }
  }
  MESSAGE("recovered at 500/1000/2000 steps: " << hits[0] << "/" << hits[1] << "/" << hits[2] << " of " << seeds);
  for (std::size_t c = 1; c < checkpoints.size(); ++c) CHECK(hits[c] >= hits[c - 1]);
}
