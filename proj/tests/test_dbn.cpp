#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "mbu/dbn/inference.hpp"
#include "mbu/dbn/simulate.hpp"
#include "mbu/dbn/text_format.hpp"
#include "mbu/envs/environments.hpp"
#include "mbu/errors.hpp"

using namespace mbu;
using namespace mbu::dbn;
using testing_util::act;
using testing_util::obs;
using testing_util::state;

namespace {

// One action bit x ("a" = x false, "b" = x true), no state, o true w.p. 4/5.
DbnProgram coin_emitter() {
  return DbnProgram({"x"}, {}, {{"o", Expr::choice(Fraction(4, 5), Expr::constant(true), Expr::constant(false))}});
}

ActionVec q67_act(bool a, bool b, bool c, bool d) { return act({a, b, c, d}); }

Policy constant_policy(ActionVec a) {
  return [a](const History&) { return a; };
}

const std::vector<std::pair<bool, bool>> kCycle = {{true, false}, {false, false}, {true, true}, {true, false},
                                                   {true, true},  {false, true},  {false, true}};

}  // namespace

TEST_CASE("likelihood of the coin emitter history is 0.8 * 0.2 * 0.8") {
  auto p = coin_emitter();
  History h;
  h.push(act({false}), obs({true}));
  h.push(act({false}), obs({false}));
  h.push(act({true}), obs({true}));
  CHECK(std::abs(likelihood(p, h) - 0.128) <= 1e-12);
  CHECK(likelihood(p, History{}) == 1.0);
}

TEST_CASE("q67 step follows the seven-state loop and the delusion branch") {
  auto q = envs::make_q67(Fraction(1, 1));
  Rng rng(7);
  auto r = step(q, state({true, false, false}), q67_act(false, false, false, false), rng);
  CHECK(r.next == state({false, true, false}));
  CHECK(r.obs == obs({false, false}));

  auto q99 = envs::make_q67(Fraction(99, 100));
  for (std::uint32_t z = 0; z < 8; ++z) {
    auto d = step(q99, StateVec(z, 3), q67_act(false, true, true, false), rng);
    CHECK(d.obs == obs({true, false}));
  }
}

TEST_CASE("single coin rule is reproducible for a fixed seed") {
  DbnProgram p({}, {{"s", Expr::choice(Fraction(1, 2), Expr::constant(true), Expr::constant(false))}}, {});
  std::vector<StateVec> first, second;
  Rng r1(42), r2(42);
  StateVec z1 = state({false}), z2 = state({false});
  for (int i = 0; i < 64; ++i) {
    z1 = step(p, z1, ActionVec(0, 0), r1).next;
    z2 = step(p, z2, ActionVec(0, 0), r2).next;
    first.push_back(z1);
    second.push_back(z2);
  }
  CHECK(first == second);
}

TEST_CASE("simulate repeats the observed seven-cycle") {
  auto q = envs::make_q67(Fraction(1, 1));
  Rng rng(1);
  auto tr = simulate_trace(q, constant_policy(q67_act(false, false, false, false)), 14, rng, state({true, false, false}));
  REQUIRE(tr.history.size() == 14);
  for (std::size_t t = 0; t < 14; ++t) {
    CHECK(tr.history[t].obs[0] == kCycle[t % 7].first);
    CHECK(tr.history[t].obs[1] == kCycle[t % 7].second);
  }
  CHECK(simulate(q, constant_policy(q67_act(false, false, false, false)), 0, 3).empty());
}

TEST_CASE("q67 loop structure: one 7-cycle and a fixed point") {
  auto q = envs::make_q67(Fraction(1, 1));
  Rng rng(0);
  auto a = q67_act(false, false, false, false);
  CHECK(step(q, StateVec(0, 3), a, rng).next == StateVec(0, 3));
  for (std::uint32_t z = 1; z < 8; ++z) {
    StateVec cur(z, 3);
    for (int i = 0; i < 7; ++i) {
      cur = step(q, cur, a, rng).next;
      if (i < 6) CHECK(cur != StateVec(z, 3));
    }
    CHECK(cur == StateVec(z, 3));
  }
}

TEST_CASE("simulated flip frequency matches 1 - alpha") {
  auto q = envs::make_q67(Fraction(99, 100));
  Rng rng(2024);
  auto tr = simulate_trace(q, constant_policy(q67_act(false, false, false, false)), 100000, rng);
  int flips = 0;
  for (std::size_t t = 1; t < tr.states.size(); ++t) {
    const auto& prev = tr.states[t - 1];
    bool expected = prev[1] != prev[2];
    if (tr.states[t][0] != expected) ++flips;
  }
  double freq = flips / 99999.0;
  CHECK(std::abs(freq - 0.01) <= 0.002);
}

TEST_CASE("simulation is bit-identical for identical seed and policy") {
  auto q = envs::make_q67(Fraction(99, 100));
  Policy pol = [](const History& h) { return q67_act(h.size() % 3 == 0, h.size() % 11 == 5, true, false); };
  CHECK(simulate(q, pol, 500, 9) == simulate(q, pol, 500, 9));
  CHECK(!(simulate(q, pol, 500, 9) == simulate(q, pol, 500, 10)));
}

TEST_CASE("likelihood of the observed loop equals the sum over initial states and flip patterns") {
  const double alpha = 0.99;
  auto q = envs::make_q67(Fraction(99, 100));
  History h;
  for (int t = 0; t < 6; ++t) h.push(q67_act(false, false, false, false), obs({kCycle[t].first, kCycle[t].second}));

  // Every (initial state, flip pattern) yields one state path; keep those whose
  // (s, v) reproduce the observations.
  double total = 0.0;
  for (int z0 = 0; z0 < 8; ++z0) {
    for (int flips = 0; flips < (1 << 5); ++flips) {
      bool s = z0 & 1, r = z0 & 2, v = z0 & 4;
      double w = 1.0 / 8.0;
      bool ok = s == kCycle[0].first && v == kCycle[0].second;
      for (int t = 1; t < 6 && ok; ++t) {
        bool flip = (flips >> (t - 1)) & 1;
        bool ns = (r != v) != flip;
        w *= flip ? 1 - alpha : alpha;
        v = r;
        r = s;
        s = ns;
        ok = s == kCycle[t].first && v == kCycle[t].second;
      }
      if (ok) total += w;
    }
  }
  CHECK(std::abs(likelihood(q, h) - total) <= 1e-12);
  CHECK(std::abs(state_history_distribution(q, h).evidence - total) <= 1e-12);
}

TEST_CASE("filter: empty history gives the uniform initial belief") {
  auto b = filter(envs::make_q67(Fraction(99, 100)), History{});
  for (double w : b.weights()) CHECK(w == 0.125);
}

TEST_CASE("filter: r is known exactly one step after s is observed") {
  auto q = envs::make_q67(Fraction(99, 100));
  auto a = q67_act(false, false, false, false);
  for (int last = 0; last < 7; ++last) {
    Filter f(q);
    for (int t = 0; t <= last; ++t) f.observe(a, obs({kCycle[t].first, kCycle[t].second}));
    auto prior = f.next_state_prior(a);
    Belief next(prior, 3);
    CHECK(next.marginal(1) == doctest::Approx(kCycle[last].first ? 1.0 : 0.0).epsilon(1e-12));
  }
}

TEST_CASE("filter: r certainty decays as parity of the flips it depends on") {
  // Errors propagate linearly over GF(2): e_s(j) = e_s(j-2) ^ e_s(j-3) ^ n_j,
  // so r at step j = e_s(j-1) is wrong iff an odd number of its noise terms fire.
  const double alpha = 0.99;
  auto q = envs::make_q67(Fraction(99, 100));
  Filter f(q);
  for (int t = 0; t < 4; ++t) f.observe(q67_act(false, false, false, false), obs({kCycle[t].first, kCycle[t].second}));
  std::vector<std::set<int>> es = {{}, {}, {}};  // noise sets for e_s at j = -2, -1, 0
  auto at = [&](int j) -> std::set<int>& { return es[static_cast<std::size_t>(j + 2)]; };
  // r after observing step 4 is s at step 3; predicted deterministic path:
  Belief start = f.belief();
  std::uint32_t known = 0;
  for (std::uint32_t z = 0; z < 8; ++z)
    if (start.weights()[z] > 0.999) known = z;
  Rng unused(0);
  auto det = envs::make_q67(Fraction(1, 1));
  StateVec predicted(known, 3);
  for (int j = 1; j <= 12; ++j) {
    std::set<int> e = at(j - 2);
    for (int x : at(j - 3)) {
      if (e.count(x)) e.erase(x); else e.insert(x);
    }
    e.insert(j);
    es.push_back(e);
    predicted = step(det, predicted, q67_act(false, true, false, false), unused).next;
    f.observe(q67_act(false, true, false, false), obs({false, false}));
    const std::size_t m = at(j - 1).size();
    const double expect = 0.5 * (1.0 + std::pow(2 * alpha - 1, static_cast<double>(m)));
    const double p_r = f.belief().marginal(1);
    CHECK(std::abs((predicted[1] ? p_r : 1 - p_r) - expect) <= 1e-12);
  }
}

TEST_CASE("state history enumeration agrees with the filter") {
  auto q = envs::make_q67(Fraction(99, 100));
  SUBCASE("empty history is the initial distribution over single states") {
    auto d = state_history_distribution(q, History{});
    CHECK(d.weights.size() == 8);
    for (const auto& [z, w] : d.weights) {
      CHECK(z.size() == 1);
      CHECK(w == doctest::Approx(0.125));
    }
  }
  SUBCASE("deterministic program concentrates on one history") {
    auto det = envs::make_q67(Fraction(1, 1));
    History h;
    for (int t = 0; t < 5; ++t) h.push(q67_act(false, false, false, false), obs({kCycle[t].first, kCycle[t].second}));
    auto d = state_history_distribution(det, h);
    REQUIRE(d.weights.size() == 1);
    CHECK(d.weights.begin()->second == 1.0);
  }
  SUBCASE("final-step marginal equals the filter at length 4") {
    Policy pol = [](const History& h) { return q67_act(false, h.size() == 2, true, true); };
    auto h = simulate(q, pol, 4, 5);
    auto d = state_history_distribution(q, h);
    std::vector<double> marg(8, 0.0);
    for (const auto& [z, w] : d.weights) marg[z.back().bits()] += w;
    auto b = filter(q, h);
    for (std::size_t z = 0; z < 8; ++z) CHECK(std::abs(marg[z] - b.weights()[z]) <= 1e-12);
    CHECK(std::abs(d.evidence - likelihood(q, h)) <= 1e-12);
  }
  SUBCASE("bound is enforced") {
    auto h = simulate(q, constant_policy(q67_act(false, false, false, false)), 9, 1);
    CHECK_THROWS_AS(state_history_distribution(q, h), OracleBoundExceeded);
  }
}

TEST_CASE("filter rejects impossible histories") {
  auto q = envs::make_q67(Fraction(99, 100));
  History h;
  h.push(q67_act(false, true, true, true), obs({false, true}));  // delusion branch must echo (c, d)
  CHECK(likelihood(q, h) == 0.0);
  CHECK(std::isinf(log_likelihood(q, h)));
  CHECK_THROWS_AS(filter(q, h), ModelContradiction);
}

TEST_CASE("likelihood chain rule") {
  auto q = envs::make_q67(Fraction(99, 100));
  Policy pol = [](const History& h) { return q67_act(h.size() % 2 == 0, h.size() % 5 == 3, h.size() % 3 == 0, true); };
  auto h = simulate(q, pol, 8, 77);
  for (std::size_t t = 0; t < h.size(); ++t) {
    auto pre = h.prefix(t);
    auto pred = predictive(q, pre, h[t].action);
    double sum = 0.0;
    for (double x : pred) sum += x;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(std::abs(likelihood(q, h.prefix(t + 1)) - likelihood(q, pre) * pred[h[t].obs.bits()]) <= 1e-12);
  }
}

TEST_CASE("description length and prior") {
  auto q = envs::make_q67(Fraction(99, 100));
  // s: 1 + (2+3 digits) + xor(3) + not xor(4) = 13; r, v: 1 each; o, p: ite = 4 + 2*1 + 1 + 1 = 8 each.
  CHECK(q.description_length() == 31);
  CHECK(q.prior().exponent == 31);
  CHECK(q.prior().value() == std::ldexp(1.0, -31));

  auto cheap = Expr::choice(Fraction(99, 100), Expr::prev_state(0), Expr::constant(false));
  auto dear = Expr::choice(Fraction(989, 1000), Expr::prev_state(0), Expr::constant(false));
  CHECK(cheap.description_length() < dear.description_length());

  DbnProgram base({}, {{"s", Expr::prev_state(0)}}, {{"o", Expr::cur_state(0)}});
  DbnProgram more({}, {{"s", Expr::negate(Expr::prev_state(0))}}, {{"o", Expr::cur_state(0)}});
  CHECK(more.description_length() == base.description_length() + 1);
  CHECK(more.prior().value() <= base.prior().value() / 2);
  CHECK(base.prior() < DyadicPrior{1} );
}

TEST_CASE("program validation") {
  CHECK_THROWS_AS(DbnProgram({}, {{"s", Expr::cur_state(0)}}, {}), ContractViolation);
  CHECK_THROWS_AS(DbnProgram({}, {{"s", Expr::prev_state(0)}}, {{"o", Expr::prev_state(0)}}), ContractViolation);
  CHECK_THROWS_AS(DbnProgram({}, {{"s", Expr::prev_state(1)}}, {}), ContractViolation);
  CHECK_THROWS_AS(DbnProgram({"s"}, {{"s", Expr::prev_state(0)}}, {}), ContractViolation);
  CHECK_THROWS_AS(Expr::choice(Fraction(1, 1), Expr::constant(true), Expr::constant(false)), ContractViolation);
  CHECK(Fraction(50, 100) == Fraction(1, 2));
}

TEST_CASE("canonical text round trip matches the golden file") {
  auto q = envs::make_q67(Fraction(99, 100));
  std::ifstream in("tests/golden/q67_99.txt");
  REQUIRE(in.good());
  std::string golden((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(to_text(q) == golden);
  auto back = parse_program(golden);
  CHECK(to_text(back) == golden);
  CHECK(back.description_length() == q.description_length());

  auto p4 = envs::make_period4();
  CHECK(to_text(parse_program(to_text(p4))) == to_text(p4));

  DbnProgram pinned({}, {{"s", Expr::prev_state(0)}, {"t", Expr::prev_state(1)}}, {{"o", Expr::cur_state(0)}},
                    InitDist{{{state({true, false}), Fraction(1, 3)}, {state({false, false}), Fraction(2, 3)}}});
  CHECK(to_text(parse_program(to_text(pinned))) == to_text(pinned));
  CHECK_THROWS_AS(parse_program("state s := (and s)\n"), ParseError);
  CHECK_THROWS_AS(parse_program("state s := o\nobs o := s\n"), ParseError);
}

TEST_CASE("an output that cannot be false gets probability exactly zero for false") {
  // With a0 true the first disjunct is certain, but 2/3 + 1/3 need not sum to 1 in floating point.
  const auto p = parse_program(R"(
action a0
state z0 := (not true)
obs o0 := (or (choice 2/3 (choice 5/8 a0 a0) (and a0 z0)) (choice 1/2 a0 (ite z0 z0 a0)))
init uniform
)");
  const CompiledModel m(p);
  for (std::uint32_t z = 0; z < 2; ++z) {
    CHECK(m.output(z, 1, 0) == 0.0);
    CHECK(m.output(z, 1, 1) == 1.0);
  }
  History h;
  h.push(act({true}), obs({false}));
  CHECK(likelihood(p, h) == 0.0);
  CHECK_THROWS_AS(filter(p, h), ModelContradiction);
}
