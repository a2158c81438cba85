#include "mbu/dbn/program.hpp"

#include <cmath>
#include <set>

#include "mbu/errors.hpp"

namespace mbu::dbn {

double DyadicPrior::value() const { return std::ldexp(1.0, -exponent); }
double DyadicPrior::log() const { return -exponent * std::log(2.0); }

DbnProgram::DbnProgram(std::vector<std::string> actions, std::vector<StateRule> states,
                       std::vector<ObsRule> observations, InitDist init)
    : actions_(std::move(actions)), states_(std::move(states)), obs_(std::move(observations)), init_(std::move(init)) {
  validate();
}

void DbnProgram::validate() const {
  if (states_.size() > kMaxVars || actions_.size() > kMaxVars || obs_.size() > kMaxVars)
    throw ContractViolation("too many variables");
  std::set<std::string> names;
  auto declare = [&](const std::string& n) {
    if (n.empty()) throw ContractViolation("empty variable name");
    if (!names.insert(n).second) throw ContractViolation("duplicate variable name '" + n + "'");
  };
  for (const auto& a : actions_) declare(a);
  for (const auto& s : states_) declare(s.name);
  for (const auto& o : obs_) declare(o.name);

  const int ns = state_width(), na = action_width();
  for (const auto& s : states_) {
    s.update.visit_refs([&](Op op, int idx) {
      if (op == Op::CurState) throw ContractViolation("state rule '" + s.name + "' reads a current-step state");
      if (op == Op::PrevState && idx >= ns) throw ContractViolation("state rule '" + s.name + "' reads undeclared state");
      if (op == Op::CurAction && idx >= na) throw ContractViolation("state rule '" + s.name + "' reads undeclared action");
    });
  }
  for (const auto& o : obs_) {
    o.output.visit_refs([&](Op op, int idx) {
      if (op == Op::PrevState) throw ContractViolation("observation rule '" + o.name + "' reads a previous state");
      if (op == Op::CurState && idx >= ns) throw ContractViolation("observation rule '" + o.name + "' reads undeclared state");
      if (op == Op::CurAction && idx >= na) throw ContractViolation("observation rule '" + o.name + "' reads undeclared action");
    });
  }
  if (!init_.uniform()) {
    std::set<std::uint32_t> seen;
    double total = 0.0;
    for (const auto& [s, w] : init_.weights) {
      if (s.width() != ns) throw ContractViolation("initial state width mismatch");
      if (!seen.insert(s.bits()).second) throw ContractViolation("initial state listed twice");
      total += w.value();
    }
    if (std::abs(total - 1.0) > 1e-12) throw ContractViolation("initial distribution does not sum to 1");
  }
}

std::optional<VarId> DbnProgram::find(const std::string& name) const {
  for (const auto& a : actions_)
    if (a == name) return VarId{name, VarKind::Action};
  for (const auto& s : states_)
    if (s.name == name) return VarId{name, VarKind::State};
  for (const auto& o : obs_)
    if (o.name == name) return VarId{name, VarKind::Observation};
  return std::nullopt;
}

int DbnProgram::state_index(const std::string& name) const {
  for (int i = 0; i < state_width(); ++i)
    if (states_[static_cast<std::size_t>(i)].name == name) return i;
  return -1;
}

int DbnProgram::action_index(const std::string& name) const {
  for (int i = 0; i < action_width(); ++i)
    if (actions_[static_cast<std::size_t>(i)] == name) return i;
  return -1;
}

int DbnProgram::obs_index(const std::string& name) const {
  for (int i = 0; i < obs_width(); ++i)
    if (obs_[static_cast<std::size_t>(i)].name == name) return i;
  return -1;
}

int DbnProgram::description_length() const {
  int total = 0;
  for (const auto& s : states_) total += s.update.description_length();
  for (const auto& o : obs_) total += o.output.description_length();
  return total;
}

int DbnProgram::choice_count() const {
  int total = 0;
  for (const auto& s : states_) total += s.update.choice_count();
  for (const auto& o : obs_) total += o.output.choice_count();
  return total;
}

DbnProgram DbnProgram::with_choice_probability(Fraction p) const {
  auto states = states_;
  auto obs = obs_;
  for (auto& s : states) s.update = s.update.with_choice_probability(p);
  for (auto& o : obs) o.output = o.output.with_choice_probability(p);
  return DbnProgram(actions_, std::move(states), std::move(obs), init_);
}

DbnProgram DbnProgram::without_choice() const {
  auto states = states_;
  auto obs = obs_;
  for (auto& s : states) s.update = s.update.without_choice();
  for (auto& o : obs) o.output = o.output.without_choice();
  return DbnProgram(actions_, std::move(states), std::move(obs), init_);
}

double DbnProgram::init_probability(StateVec s) const {
  check_state(s);
  if (init_.uniform()) return std::ldexp(1.0, -state_width());
  for (const auto& [st, w] : init_.weights)
    if (st == s) return w.value();
  return 0.0;
}

void DbnProgram::check_state(StateVec s) const {
  if (s.width() != state_width()) throw ContractViolation("state width mismatch");
}
void DbnProgram::check_action(ActionVec a) const {
  if (a.width() != action_width()) throw ContractViolation("action width mismatch");
}
void DbnProgram::check_obs(ObsVec o) const {
  if (o.width() != obs_width()) throw ContractViolation("observation width mismatch");
}

}  // namespace mbu::dbn
