#include <cmath>
#include <functional>

#include "doctest.h"
#include "helpers.hpp"
#include "mbu/dbn/inference.hpp"
#include "mbu/dbn/simulate.hpp"
#include "mbu/envs/environments.hpp"
#include "mbu/envs/instance.hpp"
#include "mbu/errors.hpp"
#include "mbu/plan/planner.hpp"
#include "random_programs.hpp"

using namespace mbu;
using namespace mbu::dbn;
using namespace mbu::plan;
using testing_util::act;
using testing_util::obs;
using utility::UtilitySpec;

namespace {

class ConstantUtility final : public utility::Utility {
 public:
  explicit ConstantUtility(double c) : c_(c) {}
  double evaluate(const utility::NodeContext&) const override { return c_; }
  int memo_context() const override { return 0; }
  std::string name() const override { return "constant"; }

 private:
  double c_;
};

class AffineUtility final : public utility::Utility {
 public:
  AffineUtility(std::shared_ptr<const utility::Utility> inner, double scale, double shift)
      : inner_(std::move(inner)), scale_(scale), shift_(shift) {}
  double evaluate(const utility::NodeContext& n) const override { return scale_ * inner_->evaluate(n) + shift_; }
  int memo_context() const override { return inner_->memo_context(); }
  std::string name() const override { return "affine"; }

 private:
  std::shared_ptr<const utility::Utility> inner_;
  double scale_, shift_;
};

std::shared_ptr<const utility::Utility> utility_for(const UtilitySpec& spec, const DbnProgram& model) {
  return utility::make_utility(utility::bind(spec, model), model);
}

History observing_history(const DbnProgram& env, std::size_t steps, std::uint64_t seed) {
  Rng coin(seed + 100);
  return simulate(env, [&](const History&) { return act({coin.coin(), false, coin.coin(), coin.coin()}); }, steps, seed);
}

// Expectimax straight from the definition: every node refilters its whole
// history and evaluates the utility with the free functions.
using FreeUtility = std::function<double(const History&)>;

double brute_value(const DbnProgram& p, const FreeUtility& u, const Discount& w, History h, std::size_t epoch,
                   int depth) {
  double v = w.weight(h.size() - epoch) * u(h);
  if (depth == 0) return v;
  double best = -INFINITY;
  for (std::uint32_t a = 0; a < (1u << p.action_width()); ++a) {
    const ActionVec av(a, p.action_width());
    const auto pred = dbn::predictive(p, h, av);
    double sum = 0.0;
    for (std::uint32_t o = 0; o < pred.size(); ++o) {
      if (pred[o] == 0.0) continue;
      History next = h.extended(av, ObsVec(o, p.obs_width()));
      sum += pred[o] * brute_value(p, u, w, next, epoch, depth - 1);
    }
    best = std::max(best, sum);
  }
  return v + best;
}

}  // namespace

TEST_CASE("discount weights and tails") {
  const auto g = Discount::geometric(0.9);
  CHECK(g.weight(0) == 1.0);
  CHECK(g.weight(3) == doctest::Approx(0.729).epsilon(1e-14));
  double rest = 0.0;
  for (int k = 5; k < 2000; ++k) rest += g.weight(static_cast<std::size_t>(k));
  CHECK(g.tail(4) == doctest::Approx(rest).epsilon(1e-12));
  CHECK(g.tail(4) == doctest::Approx(std::pow(0.9, 5) / 0.1).epsilon(1e-14));

  const auto win = Discount::window(5);
  CHECK(win.weight(0) == 1.0);
  CHECK(win.weight(5) == 1.0);
  CHECK(win.weight(6) == 0.0);
  CHECK(win.tail(4) == 1.0);
  CHECK(win.tail(5) == 0.0);

  const auto del = Discount::delta(3);
  CHECK(del.weight(2) == 0.0);
  CHECK(del.weight(3) == 1.0);
  CHECK(del.tail(2) == 1.0);
  CHECK(del.tail(3) == 0.0);

  const auto dy = Discount::dyadic();
  CHECK(dy.weight(4) == 1.0 / 16);
  CHECK(dy.tail(4) == 1.0 / 16);

  for (const std::string text : {"geometric:0.9", "geometric:0.01", "window:5", "delta:3", "dyadic"})
    CHECK(Discount::parse(text).to_string() == text);
  for (const std::string bad : {"geometric", "geometric:1", "geometric:0", "window:-1", "dyadic:2", "hyperbolic:1", "window:x"})
    CHECK_THROWS_AS(Discount::parse(bad), ContractViolation);
}

TEST_CASE("predictive distributions") {
  const auto q = envs::make_q67(Fraction(99, 100));
  const History h = observing_history(q, 8, 2);
  const auto deluded = plan::predictive(q, h, act({false, true, true, false}));
  CHECK(deluded[obs({true, false}).bits()] == 1.0);

  // Two outcomes of the noisy s'; p' reads v' = r = the previous o in both.
  const bool r_t = h[6].obs[0], v_t = h[7].obs[1];
  const bool s_next = r_t != v_t;
  const auto honest = plan::predictive(q, h, act({false, false, false, false}));
  CHECK(honest[obs({s_next, r_t}).bits()] == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(honest[obs({!s_next, r_t}).bits()] == doctest::Approx(0.01).epsilon(1e-12));
  double total = 0.0;
  for (double x : honest) total += x;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("deterministic successor under the exact loop") {
  const auto det = envs::make_q67(Fraction(1, 1));
  const History h = observing_history(det, 6, 1);
  const bool r_t = h[4].obs[0], v_t = h[5].obs[1];
  const auto pd = plan::predictive(det, h, act({true, false, true, true}));
  CHECK(pd[obs({r_t != v_t, r_t}).bits()] == 1.0);
}

TEST_CASE("constant utility sums the discount weights") {
  const auto det = envs::make_q67(Fraction(1, 1));
  const auto u = std::make_shared<ConstantUtility>(0.7);
  const History h = observing_history(det, 5, 3);
  for (int H = 1; H <= 4; ++H) {
    double geo = 0.0;
    for (int k = 0; k <= H; ++k) geo += std::pow(0.9, k);
    CHECK(plan::value(h, h.size(), H, det, u, Discount::geometric(0.9)) == doctest::Approx(0.7 * geo).epsilon(1e-12));
    CHECK(plan::value(h, h.size(), H, det, u, Discount::window(2)) ==
          doctest::Approx(0.7 * std::min(H + 1, 3)).epsilon(1e-12));
  }
  // Probabilistic model: expectations of a constant stay constant.
  const auto q = envs::make_q67(Fraction(99, 100));
  CHECK(plan::value(h, h.size(), 3, q, u, Discount::dyadic()) == doctest::Approx(0.7 * 1.875).epsilon(1e-12));
}

TEST_CASE("depth zero is the weighted utility of the history itself") {
  const auto q = envs::make_q67(Fraction(99, 100));
  const auto spec = UtilitySpec::unobserved_equals("a");
  const auto u = utility_for(spec, q);
  const auto b = utility::bind(spec, q);
  const History h = observing_history(q, 9, 4);
  for (std::size_t epoch : {9u, 7u, 3u}) {
    const auto w = Discount::geometric(0.8);
    CHECK(plan::value(h, epoch, 0, q, u, w) == w.weight(9 - epoch) * utility::u_model(h, q, b));
  }
  CHECK_THROWS_AS(plan::value(h, 10, 0, q, u, Discount::dyadic()), ContractViolation);
}

TEST_CASE("looking one step past the choice, the honest copy beats every deluding action") {
  const auto q = envs::make_q67(Fraction(99, 100));
  const auto u = utility_for(UtilitySpec::unobserved_equals("a"), q);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const History h = observing_history(q, 20, seed);
    Filter f(q);
    for (const auto& s : h) f.observe(s.action, s.obs);
    const bool last_o = h.back().obs[0];
    const ActionVec copy = act({last_o, false, false, false});
    // The next utility compares with a state already seen, so delusion costs
    // nothing yet; it costs from the step after.
    const Planner now(q, u, PlanConfig{1, Discount::geometric(0.9), true});
    const Planner next(q, u, PlanConfig{2, Discount::geometric(0.9), true});
    const double honest_now = now.action_value(h, f, copy);
    const double honest_next = next.action_value(h, f, copy);
    CHECK(honest_now == doctest::Approx(0.9).epsilon(1e-12));
    for (std::uint32_t i = 0; i < 16; ++i) {
      const ActionVec a = lex_action(i, 4);
      CHECK(now.action_value(h, f, a) <= honest_now + 1e-12);
      if (a[1]) CHECK(next.action_value(h, f, a) < honest_next - 1e-6);
    }
    const auto d = next.act(h, f);
    CHECK(d.action == copy);
    CHECK(d.value == doctest::Approx(honest_next).epsilon(1e-15));
    REQUIRE(d.runner_up.has_value());
    // c and d do not matter under b=F, so the runner-up ties.
    CHECK(*d.runner_up == doctest::Approx(d.value).epsilon(1e-12));
  }
}

TEST_CASE("expectimax agrees with a brute-force tree up to depth 3") {
  testing_util::ProgramGenerator gen(2024, testing_util::ProgramShape{2, 2, 2, 2, 2});
  std::size_t checked = 0;
  const std::vector<Discount> discounts = {Discount::geometric(0.7), Discount::window(2), Discount::delta(2),
                                           Discount::dyadic()};
  for (int trial = 0; trial < 60; ++trial) {
    const DbnProgram p = gen.program();
    const History h = gen.history(p, 1 + static_cast<std::size_t>(trial % 3));
    if (!std::isfinite(log_likelihood(p, h))) continue;

    std::vector<std::pair<std::shared_ptr<const utility::Utility>, FreeUtility>> utilities;
    utilities.push_back({utility::make_utility(utility::Binding{UtilitySpec::prediction_match(), -1, "", -1, -1}, p),
                         [&](const History& x) { return utility::u_predict(x, p); }});
    utilities.push_back({utility::make_utility(utility::Binding{UtilitySpec::knowledge_seeking(), -1, "", -1, -1}, p),
                         [&](const History& x) { return utility::u_knowledge(x, p); }});
    for (const auto& spec : {UtilitySpec::unobserved_equals("a0"), UtilitySpec::observed_equals_prev("a0", 1)}) {
      try {
        const auto b = utility::bind(spec, p);
        utilities.push_back({utility::make_utility(b, p), [&p, b](const History& x) { return utility::u_model(x, p, b); }});
      } catch (const NoMatch&) {
      } catch (const Ambiguous&) {
      }
    }
    {
      const auto b = utility::bind(UtilitySpec::reward("o0"), p);
      utilities.push_back({utility::make_utility(b, p), [b](const History& x) { return utility::u_rl(x, b); }});
    }

    for (const auto& [u, free] : utilities)
      for (int depth = 0; depth <= 3; ++depth) {
        const auto& w = discounts[static_cast<std::size_t>(trial + depth) % discounts.size()];
        const std::size_t epoch = h.size() - static_cast<std::size_t>(trial % 2);
        const double expected = brute_value(p, free, w, h, epoch, depth);
        for (bool memo : {true, false}) {
          const Planner planner(p, u, PlanConfig{std::max(depth, 1), w, memo});
          CHECK(planner.value(h, epoch, depth) == doctest::Approx(expected).epsilon(1e-9));
        }
        ++checked;
      }
  }
  CHECK(checked > 200u);
}

TEST_CASE("positive affine changes of the utility leave the chosen action alone") {
  for (const auto& env : {envs::make_q67(Fraction(99, 100)), envs::make_period4()}) {
    const auto base = utility_for(env.state_width() == 3 && env.obs_width() == 2 && env.action_width() == 4
                                      ? UtilitySpec::unobserved_equals("a")
                                      : UtilitySpec::observed_equals_prev("a"),
                                  env);
    const auto scaled = std::make_shared<AffineUtility>(base, 3.5, -2.0);
    Rng coin(9);
    const History h = simulate(
        env, [&](const History&) { return ActionVec(static_cast<std::uint32_t>(coin.below(1u << env.action_width())), env.action_width()); },
        30, 9);
    for (std::size_t n = 1; n <= h.size(); n += 4) {
      const History prefix = h.prefix(n);
      const PlanConfig cfg{3, Discount::geometric(0.9), true};
      CHECK(Planner(env, base, cfg).act(prefix).action == Planner(env, scaled, cfg).act(prefix).action);
    }
  }
}

TEST_CASE("act is deterministic and memoization does not change decisions") {
  const auto q = envs::make_q67(Fraction(99, 100));
  const auto u = utility_for(UtilitySpec::unobserved_equals("a"), q);
  const History h = observing_history(q, 40, 5);
  const Planner memo(q, u, PlanConfig{});
  const Planner plain(q, u, PlanConfig{4, Discount::geometric(0.9), false});
  const auto d1 = memo.act(h), d2 = memo.act(h), d3 = plain.act(h);
  CHECK(d1.action == d2.action);
  CHECK(d1.value == d2.value);
  CHECK(d1.action == d3.action);
  CHECK(d1.value == doctest::Approx(d3.value).epsilon(1e-12));
  CHECK(d1.nodes < d3.nodes);
}

TEST_CASE("truncation error stays within the discount tail") {
  const auto q = envs::make_q67(Fraction(99, 100));
  const auto u = utility_for(UtilitySpec::unobserved_equals("a"), q);
  const History h = observing_history(q, 12, 6);
  const auto w = Discount::geometric(0.5);
  const double deep = plan::value(h, h.size(), 6, q, u, w);
  for (int H = 1; H <= 4; ++H) {
    const double shallow = plan::value(h, h.size(), H, q, u, w);
    CHECK(shallow <= deep + 1e-12);
    CHECK(deep - shallow <= w.tail(static_cast<std::size_t>(H)) + 1e-12);
  }
}

TEST_CASE("the model-based agent keeps observing honestly") {
  const auto q = envs::make_q67(Fraction(99, 100));
  const Planner p(q, utility_for(UtilitySpec::unobserved_equals("a"), q), PlanConfig{});
  envs::EnvInstance e(q, 31);
  Filter f(q);
  for (int t = 0; t < 200; ++t) {
    const auto d = e.history().empty() ? Decision{act({false, false, false, false}), 0.0, {}, 0} : p.act(e.history(), f);
    if (!e.history().empty()) CHECK(d.action == act({e.history().back().obs[0], false, false, false}));
    const auto o = e.act(d.action);
    f.observe(d.action, o);
  }
}

TEST_CASE("the reward maximizer deludes itself") {
  const auto env = envs::make_reward_channel();
  const Planner p(env, utility_for(UtilitySpec::reward("reward"), env), PlanConfig{4, Discount::window(5), true});
  envs::EnvInstance e(env, 8);
  Filter f(env);
  for (int t = 0; t < 50; ++t) {
    const auto d = p.act(e.history(), f);
    CHECK(d.action[env.action_index("b")]);
    CHECK(d.action[env.action_index("d")]);
    f.observe(d.action, e.act(d.action));
  }
}
