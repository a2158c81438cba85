#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "mbu/dbn/inference.hpp"
#include "mbu/dbn/simulate.hpp"
#include "mbu/dbn/text_format.hpp"
#include "mbu/envs/environments.hpp"
#include "mbu/errors.hpp"
#include "mbu/utility/utility.hpp"
#include "random_programs.hpp"

using namespace mbu;
using namespace mbu::dbn;
using namespace mbu::utility;
using testing_util::act;
using testing_util::obs;

namespace {

ActionVec q67_act(bool a, bool b, bool c, bool d) { return act({a, b, c, d}); }

// The learned form of environment 1 with neutral names.
DbnProgram learned_q67() {
  return parse_program(R"(
action a b c d
state z0 := (choice 99/100 (xor z1 z2) (not (xor z1 z2)))
state z1 := z2
state z2 := z0
obs o := (ite b c z0)
obs p := (ite b d z1)
init uniform
)");
}

}  // namespace

TEST_CASE("specification round trip through text") {
  for (const std::string text : {"unobserved-equals:a", "observed-equals-prev:a", "observed-equals-prev:a:1", "reward:reward",
                                 "prediction", "knowledge"})
    CHECK(UtilitySpec::parse(text).to_string() == text);
  CHECK(UtilitySpec::parse("observed-equals-prev:a:0").to_string() == "observed-equals-prev:a");
  for (const std::string bad : {"", "unobserved-equals", "unobserved-equals:", "observed-equals-prev:a:x",
                                "observed-equals-prev:a:-1", "reward", "prediction:x", "nonsense:a"})
    CHECK_THROWS_AS(UtilitySpec::parse(bad), ParseError);
}

TEST_CASE("binding selects the hidden variable of the learned model") {
  const auto q = learned_q67();
  const auto b = bind(UtilitySpec::unobserved_equals("a"), q);
  // z0 feeds o, z1 feeds p: z2 plays the role of r.
  CHECK(b.target_name == "z2");
  CHECK(b.target_state == 2);
  CHECK(b.action_index == 0);
  // Same for the environment's own names.
  CHECK(bind(UtilitySpec::unobserved_equals("a"), envs::make_q67(Fraction(99, 100))).target_name == "r");
  // Binding is a pure function of its inputs.
  CHECK(bind(UtilitySpec::unobserved_equals("a"), q).target_state == b.target_state);
}

TEST_CASE("binding the observed variable of period4") {
  const auto p = envs::make_period4();
  const auto b = bind(UtilitySpec::observed_equals_prev("a"), p);
  CHECK(b.target_name == "s");
  CHECK_THROWS_AS(bind(UtilitySpec::unobserved_equals("a"), p), Ambiguous);
}

TEST_CASE("binding failures") {
  // Every state variable feeds an output.
  const DbnProgram all_seen({"a"}, {{"x", Expr::prev_state(1)}, {"y", Expr::prev_state(0)}},
                            {{"o", Expr::cur_state(0)}, {"p", Expr::cur_state(1)}});
  CHECK_THROWS_AS(bind(UtilitySpec::unobserved_equals("a"), all_seen), NoMatch);
  // Four state variables, two of them hidden.
  const DbnProgram two_hidden({"a"},
                              {{"w", Expr::prev_state(1)},
                               {"x", Expr::prev_state(2)},
                               {"y", Expr::prev_state(3)},
                               {"z", Expr::prev_state(0)}},
                              {{"o", Expr::cur_state(0)}, {"p", Expr::cur_state(1)}});
  CHECK_THROWS_AS(bind(UtilitySpec::unobserved_equals("a"), two_hidden), Ambiguous);
  // A model without any state has nothing to observe either.
  const DbnProgram stateless({"a"}, {}, {{"o", Expr::action(0)}});
  CHECK_THROWS_AS(bind(UtilitySpec::observed_equals_prev("a"), stateless), NoMatch);
  CHECK_THROWS_AS(bind(UtilitySpec::unobserved_equals("nope"), learned_q67()), ContractViolation);
  CHECK_THROWS_AS(bind(UtilitySpec::reward("reward"), learned_q67()), ContractViolation);
}

TEST_CASE("model utility is the belief that the target equals the action") {
  const auto q = learned_q67();
  const auto b = bind(UtilitySpec::unobserved_equals("a"), q);
  History h;
  h.push(q67_act(true, false, false, false), obs({true, false}));

  // Uniform belief: 0.5 whatever the action.
  const auto uniform = Belief::uniform(3);
  CHECK(u_model(h, uniform, b) == 0.5);
  History h_false;
  h_false.push(q67_act(false, false, false, false), obs({true, false}));
  CHECK(u_model(h_false, uniform, b) == 0.5);

  // P(z2 = T) = 0.9.
  std::vector<double> w(8, 0.0);
  w[0b100] = 0.9;
  w[0b000] = 0.1;
  const Belief skewed(w, 3);
  CHECK(u_model(h, skewed, b) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(u_model(h_false, skewed, b) == doctest::Approx(0.1).epsilon(1e-15));

  // Monotonicity: the better action scores max(p, 1-p) >= 0.5.
  for (double p : {0.0, 0.2, 0.5, 0.7, 1.0}) {
    std::vector<double> v(8, 0.0);
    v[0b100] = p;
    v[0b000] = 1 - p;
    const Belief bel(v, 3);
    const double best = std::max(u_model(h, bel, b), u_model(h_false, bel, b));
    CHECK(best == doctest::Approx(std::max(p, 1 - p)));
    CHECK(best >= 0.5);
  }
  CHECK(u_model(History{}, q, b) == 0.0);
}

TEST_CASE("copying the last o into a is worth exactly 1 with b unset") {
  const auto q = learned_q67();
  const auto b = bind(UtilitySpec::unobserved_equals("a"), q);
  const auto truth = envs::make_q67(Fraction(99, 100));
  Rng rng(31);
  const Policy pol = [](const History& h) {
    return q67_act(h.empty() ? false : h.back().obs[0], false, h.size() % 3 == 0, false);
  };
  const auto tr = simulate_trace(truth, pol, 60, rng);
  for (std::size_t t = 2; t <= tr.history.size(); ++t) CHECK(u_model(tr.history.prefix(t), q, b) == 1.0);
}

TEST_CASE("lag compares the state with an earlier action") {
  const auto p = envs::make_period4();
  const auto b0 = bind(UtilitySpec::observed_equals_prev("a", 0), p);
  const auto b1 = bind(UtilitySpec::observed_equals_prev("a", 1), p);
  History h;
  h.push(act({true, false, false}), obs({true}));
  CHECK(u_model(h, p, b0) == 1.0);
  CHECK(u_model(h, p, b1) == 0.0);  // no earlier action yet
  h.push(act({false, false, false}), obs({true}));
  CHECK(u_model(h, p, b0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(u_model(h, p, b1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(realized(b1, h, 1, StateVec::from_bools({true, false, true})) == 1.0);
  CHECK(realized(b1, h, 0, StateVec::from_bools({true, false, false})) == 0.0);
  CHECK(realized(b0, h, 1, StateVec::from_bools({false, false, true})) == 1.0);
}

TEST_CASE("summing over state histories gives the same utility") {
  testing_util::ProgramGenerator gen(77);
  int compared = 0;
  for (int i = 0; i < 300; ++i) {
    const auto p = gen.program();
    if (p.state_width() == 0) continue;
    const auto h = gen.history(p, 1 + gen.rng().below(8));
    Binding b;
    b.spec = gen.rng().coin() ? UtilitySpec::unobserved_equals(p.actions()[0]) : UtilitySpec::observed_equals_prev(p.actions()[0], static_cast<int>(gen.rng().below(2)));
    b.action_index = static_cast<int>(gen.rng().below(static_cast<std::uint64_t>(p.action_width())));
    b.target_state = static_cast<int>(gen.rng().below(static_cast<std::uint64_t>(p.state_width())));
    if (likelihood(p, h) == 0.0) {
      CHECK_THROWS_AS(u_model(h, p, b), ModelContradiction);
      continue;
    }
    CHECK(std::abs(u_model(h, p, b) - u_model_general(h, p, b)) <= 1e-12);
    ++compared;
  }
  CHECK(compared > 100);
}

TEST_CASE("deterministic model puts all weight on one state history") {
  const auto det = envs::make_q67(Fraction(1, 1));
  const auto b = bind(UtilitySpec::unobserved_equals("a"), det);
  History h;
  h.push(q67_act(false, false, false, false), obs({true, false}));
  h.push(q67_act(true, false, false, false), obs({false, false}));
  // r_2 = s_1 = T, so a_2 = T scores 1.
  CHECK(u_model_general(h, det, b) == 1.0);
  CHECK(u_model(h, det, b) == 1.0);
}

TEST_CASE("observation-based utilities") {
  const auto q = envs::make_reward_channel();
  const auto rb = bind(UtilitySpec::reward("reward"), q);
  History h;
  h.push(q67_act(false, true, false, true), obs({false, true, true}));
  CHECK(u_rl(h, rb) == 1.0);
  h.push(q67_act(false, true, false, false), obs({false, false, false}));
  CHECK(u_rl(h, rb) == 0.0);

  // Goal: "o has been true twice". Reached at exactly one prefix.
  const GoalFn twice = [](const History& x) {
    int n = 0;
    for (const auto& s : x) n += s.obs[0];
    return n >= 2;
  };
  History g;
  std::vector<double> us;
  for (bool o : {true, false, true, true, false}) {
    g.push(act({false}), obs({o}));
    us.push_back(u_goal(g, twice));
  }
  CHECK(us == std::vector<double>{0, 0, 1, 0, 0});
}

TEST_CASE("prediction utility scores the most probable observation") {
  // o copies the hidden bit, which is true w.p. 3/4 initially and then sticks.
  const DbnProgram p({"x"}, {{"s", Expr::prev_state(0)}}, {{"o", Expr::cur_state(0)}},
                     InitDist{{{StateVec(1, 1), Fraction(3, 4)}, {StateVec(0, 1), Fraction(1, 4)}}});
  History h;
  h.push(act({false}), obs({true}));
  CHECK(u_predict(h, p) == 1.0);
  History miss;
  miss.push(act({false}), obs({false}));
  CHECK(u_predict(miss, p) == 0.0);
  // After seeing false the model predicts false.
  miss.push(act({true}), obs({false}));
  CHECK(u_predict(miss, p) == 1.0);
  CHECK(u_predict(History{}, p) == 0.0);
}

TEST_CASE("knowledge utility stays in the unit interval and grows with surprise") {
  const auto q = envs::make_q67(Fraction(99, 100));
  const double empty = u_knowledge(History{}, q);
  CHECK(empty == doctest::Approx(1.0 - std::exp2(-31.0)));
  History h;
  h.push(q67_act(false, false, false, false), obs({true, false}));
  const double one = u_knowledge(h, q);
  CHECK(one >= empty);
  CHECK(one <= 1.0);
}

TEST_CASE("utility objects agree with the free functions") {
  const auto q = learned_q67();
  const auto b = bind(UtilitySpec::unobserved_equals("a"), q);
  const auto u = make_utility(b, q);
  CHECK(u->memo_context() == 0);
  CHECK(u->name() == "unobserved-equals:a");
  const auto h = simulate(envs::make_q67(Fraction(99, 100)), [](const History& x) { return q67_act(x.size() % 2, x.size() % 5 == 0, true, false); }, 6, 3);
  Filter f(q);
  for (const auto& s : h) f.observe(s.action, s.obs);
  const NodeContext node{h, f, nullptr};
  CHECK(u->evaluate(node) == doctest::Approx(u_model(h, q, b)).epsilon(1e-15));

  const auto pred = make_utility(Binding{UtilitySpec::prediction_match(), -1, "", -1, -1}, q);
  CHECK(pred->memo_context() == 0);
  CHECK(pred->evaluate(node) == u_predict(h, q));
  const auto know = make_utility(Binding{UtilitySpec::knowledge_seeking(), -1, "", -1, -1}, q);
  CHECK(know->evaluate(node) == doctest::Approx(u_knowledge(h, q)).epsilon(1e-12));
  CHECK(make_utility(bind(UtilitySpec::observed_equals_prev("a", 2), envs::make_period4()), envs::make_period4())->memo_context() == 2);
}
