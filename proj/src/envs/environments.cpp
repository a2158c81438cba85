#include "mbu/envs/environments.hpp"

#include "mbu/errors.hpp"

namespace mbu::envs {

using dbn::Expr;
using dbn::Fraction;

namespace {

// State indices shared by both environments.
constexpr int S = 0, R = 1, V = 2;
constexpr int A = 0, B = 1, C = 2, D = 3;

Expr q67_s_rule(Fraction alpha) {
  Expr x = Expr::exclusive(Expr::prev_state(R), Expr::prev_state(V));
  if (alpha == Fraction(1, 1)) return x;
  return Expr::choice(alpha, x, Expr::negate(x));
}

}  // namespace

dbn::DbnProgram make_q67(Fraction alpha) {
  require(alpha.num() > 0, "alpha must be positive");
  return dbn::DbnProgram({"a", "b", "c", "d"},
                         {{"s", q67_s_rule(alpha)}, {"r", Expr::prev_state(S)}, {"v", Expr::prev_state(R)}},
                         {{"o", Expr::ite(Expr::action(B), Expr::action(C), Expr::cur_state(S))},
                          {"p", Expr::ite(Expr::action(B), Expr::action(D), Expr::cur_state(V))}});
}

dbn::DbnProgram make_period4(Fraction flip) {
  require(flip.is_proper(), "flip probability must lie strictly between 0 and 1");
  // (r, v) counts 00 -> 01 -> 10 -> 11 -> 00 with v the low bit; s may change
  // only on the step after the counter showed 11.
  Expr wrap = Expr::both(Expr::prev_state(R), Expr::prev_state(V));
  Expr s = Expr::ite(wrap, Expr::choice(flip, Expr::negate(Expr::prev_state(S)), Expr::prev_state(S)),
                     Expr::prev_state(S));
  return dbn::DbnProgram({"a", "b", "c"},
                         {{"s", s},
                          {"r", Expr::exclusive(Expr::prev_state(R), Expr::prev_state(V))},
                          {"v", Expr::negate(Expr::prev_state(V))}},
                         {{"o", Expr::ite(Expr::action(B), Expr::action(C), Expr::cur_state(S))}});
}

dbn::DbnProgram make_reward_channel(Fraction alpha) {
  require(alpha.num() > 0, "alpha must be positive");
  return dbn::DbnProgram({"a", "b", "c", "d"},
                         {{"s", q67_s_rule(alpha)}, {"r", Expr::prev_state(S)}, {"v", Expr::prev_state(R)}},
                         {{"o", Expr::ite(Expr::action(B), Expr::action(C), Expr::cur_state(S))},
                          {"p", Expr::ite(Expr::action(B), Expr::action(D), Expr::cur_state(V))},
                          {"reward", Expr::ite(Expr::action(B), Expr::action(D), Expr::cur_state(S))}});
}

dbn::DbnProgram make_environment(const std::string& name, const std::string& param) {
  // Accepts "99/100" as well as "alpha=99/100" / "flip=1/2".
  auto value = [&](const char* key, Fraction fallback) {
    if (param.empty()) return fallback;
    const auto eq = param.find('=');
    if (eq == std::string::npos) return Fraction::parse(param);
    if (param.substr(0, eq) != key) throw ContractViolation("environment '" + name + "' has no parameter '" + param.substr(0, eq) + "'");
    return Fraction::parse(param.substr(eq + 1));
  };
  if (name == "q67") return make_q67(value("alpha", Fraction(99, 100)));
  if (name == "period4") return make_period4(value("flip", Fraction(1, 2)));
  if (name == "q67-reward") return make_reward_channel(value("alpha", Fraction(99, 100)));
  throw ContractViolation("unknown environment '" + name + "'");
}

}  // namespace mbu::envs
