#include "mbu/utility/utility.hpp"

#include <cmath>
#include <sstream>

#include "mbu/errors.hpp"

namespace mbu::utility {

using dbn::Belief;
using dbn::DbnProgram;
using dbn::History;

UtilitySpec UtilitySpec::unobserved_equals(std::string action_var) {
  UtilitySpec s;
  s.kind = SpecKind::UnobservedStateEqualsAction;
  s.var = std::move(action_var);
  return s;
}

UtilitySpec UtilitySpec::observed_equals_prev(std::string action_var, int lag) {
  require(lag >= 0, "lag must be non-negative");
  UtilitySpec s;
  s.kind = SpecKind::ObservedStateEqualsPrevAction;
  s.var = std::move(action_var);
  s.lag = lag;
  return s;
}

UtilitySpec UtilitySpec::reward(std::string obs_var) {
  UtilitySpec s;
  s.kind = SpecKind::RewardChannel;
  s.var = std::move(obs_var);
  return s;
}

UtilitySpec UtilitySpec::goal_reached(std::string name, GoalFn predicate) {
  require(static_cast<bool>(predicate), "goal predicate missing");
  UtilitySpec s;
  s.kind = SpecKind::GoalPredicate;
  s.goal = std::move(predicate);
  s.goal_name = std::move(name);
  return s;
}

UtilitySpec UtilitySpec::prediction_match() {
  UtilitySpec s;
  s.kind = SpecKind::PredictionMatch;
  return s;
}

UtilitySpec UtilitySpec::knowledge_seeking() {
  UtilitySpec s;
  s.kind = SpecKind::KnowledgeSeeking;
  return s;
}

UtilitySpec UtilitySpec::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.empty()) throw ParseError("empty utility spec");
  const std::string& kind = parts[0];
  auto arg = [&](std::size_t i) -> const std::string& {
    if (parts.size() <= i || parts[i].empty()) throw ParseError("utility spec '" + text + "' is missing a variable");
    return parts[i];
  };
  if (kind == "unobserved-equals" && parts.size() == 2) return unobserved_equals(arg(1));
  if (kind == "observed-equals-prev" && (parts.size() == 2 || parts.size() == 3)) {
    int lag = 0;
    if (parts.size() == 3) {
      try {
        lag = std::stoi(parts[2]);
      } catch (const std::exception&) {
        throw ParseError("bad lag in utility spec '" + text + "'");
      }
      if (lag < 0) throw ParseError("bad lag in utility spec '" + text + "'");
    }
    return observed_equals_prev(arg(1), lag);
  }
  if (kind == "reward" && parts.size() == 2) return reward(arg(1));
  if (kind == "prediction" && parts.size() == 1) return prediction_match();
  if (kind == "knowledge" && parts.size() == 1) return knowledge_seeking();
  throw ParseError("unknown utility spec '" + text + "'");
}

std::string UtilitySpec::to_string() const {
  switch (kind) {
    case SpecKind::UnobservedStateEqualsAction:
      return "unobserved-equals:" + var;
    case SpecKind::ObservedStateEqualsPrevAction:
      return "observed-equals-prev:" + var + (lag ? ":" + std::to_string(lag) : "");
    case SpecKind::RewardChannel:
      return "reward:" + var;
    case SpecKind::GoalPredicate:
      return "goal:" + goal_name;
    case SpecKind::PredictionMatch:
      return "prediction";
    case SpecKind::KnowledgeSeeking:
      return "knowledge";
  }
  return "";
}

std::vector<bool> observed_state_vars(const DbnProgram& program) {
  std::vector<bool> seen(static_cast<std::size_t>(program.state_width()), false);
  for (const auto& o : program.observations())
    o.output.visit_refs([&](dbn::Op op, int idx) {
      if (op == dbn::Op::CurState) seen[static_cast<std::size_t>(idx)] = true;
    });
  return seen;
}

Binding bind(const UtilitySpec& spec, const DbnProgram& program) {
  Binding b;
  b.spec = spec;
  if (spec.model_based()) {
    b.action_index = program.action_index(spec.var);
    if (b.action_index < 0) throw ContractViolation("utility refers to unknown action variable '" + spec.var + "'");
    const bool want_observed = spec.kind == SpecKind::ObservedStateEqualsPrevAction;
    auto observed = observed_state_vars(program);
    std::vector<int> hits;
    for (int i = 0; i < program.state_width(); ++i)
      if (observed[static_cast<std::size_t>(i)] == want_observed) hits.push_back(i);
    const std::string what = want_observed ? "observed" : "unobserved";
    if (hits.empty()) throw NoMatch("no " + what + " state variable in the model");
    if (hits.size() > 1) throw Ambiguous(std::to_string(hits.size()) + " " + what + " state variables in the model");
    b.target_state = hits[0];
    b.target_name = program.states()[static_cast<std::size_t>(hits[0])].name;
  } else if (spec.kind == SpecKind::RewardChannel) {
    b.obs_index = program.obs_index(spec.var);
    if (b.obs_index < 0) throw ContractViolation("no reward observation '" + spec.var + "'");
  }
  return b;
}

namespace {

// Index of the step whose action is compared with the target, or -1 if none.
long compared_step(const History& h, const Binding& b) {
  const long lag = b.spec.kind == SpecKind::ObservedStateEqualsPrevAction ? b.spec.lag : 0;
  const long t = static_cast<long>(h.size()) - 1 - lag;
  return t;
}

void require_model_based(const Binding& b) {
  require(b.spec.model_based() && b.target_state >= 0, "binding is not model-based");
}

}  // namespace

double u_model(const History& h, const Belief& belief, const Binding& binding) {
  require_model_based(binding);
  const long t = compared_step(h, binding);
  if (h.empty() || t < 0) return 0.0;
  const bool a = h[static_cast<std::size_t>(t)].action[binding.action_index];
  const double p_true = belief.marginal(binding.target_state);
  return a ? p_true : 1.0 - p_true;
}

double u_model(const History& h, const DbnProgram& program, const Binding& binding) {
  return u_model(h, dbn::filter(program, h), binding);
}

double u_model_general(const History& h, const DbnProgram& program, const Binding& binding, std::size_t horizon_bound) {
  require_model_based(binding);
  const long t = compared_step(h, binding);
  if (h.empty() || t < 0) return 0.0;
  const bool a = h[static_cast<std::size_t>(t)].action[binding.action_index];
  double mass = 0.0, total = 0.0;
  dbn::enumerate_state_histories(
      program, h,
      [&](const std::vector<dbn::StateVec>& z, double w) {
        total += w;
        if (z.back()[binding.target_state] == a) mass += w;
      },
      horizon_bound);
  if (!(total > 0.0)) throw ModelContradiction("history has probability zero under the model");
  return mass / total;
}

double u_rl(const History& h, const Binding& binding) {
  require(binding.spec.kind == SpecKind::RewardChannel && binding.obs_index >= 0, "binding has no reward channel");
  require(!h.empty(), "reward is undefined before the first step");
  return h.back().obs[binding.obs_index] ? 1.0 : 0.0;
}

double u_goal(const History& h, const GoalFn& predicate) {
  if (!predicate(h)) return 0.0;
  for (std::size_t n = 0; n < h.size(); ++n)
    if (predicate(h.prefix(n))) return 0.0;
  return 1.0;
}

namespace {

std::uint32_t argmax(const std::vector<double>& dist) {
  std::uint32_t best = 0;
  for (std::uint32_t o = 1; o < dist.size(); ++o)
    if (dist[o] > dist[best] + 1e-12) best = o;
  return best;
}

}  // namespace

double u_predict(const History& h, const DbnProgram& program) {
  if (h.empty()) return 0.0;
  auto pred = dbn::predictive(program, h.prefix(h.size() - 1), h.back().action);
  return argmax(pred) == h.back().obs.bits() ? 1.0 : 0.0;
}

double u_knowledge(const History& h, const DbnProgram& program) {
  const double ll = dbn::log_likelihood(program, h);
  return 1.0 - std::exp(ll + program.prior().log());
}

double realized(const Binding& binding, const History& h, std::size_t t, dbn::StateVec true_state) {
  require(t < h.size(), "realized utility of a step beyond the history");
  if (binding.spec.kind == SpecKind::RewardChannel) return h[t].obs[binding.obs_index] ? 1.0 : 0.0;
  require_model_based(binding);
  const long lag = binding.spec.kind == SpecKind::ObservedStateEqualsPrevAction ? binding.spec.lag : 0;
  const long src = static_cast<long>(t) - lag;
  if (src < 0) return 0.0;
  const bool a = h[static_cast<std::size_t>(src)].action[binding.action_index];
  return true_state[binding.target_state] == a ? 1.0 : 0.0;
}

namespace {

class ModelUtility final : public Utility {
 public:
  explicit ModelUtility(Binding b) : b_(std::move(b)) {}
  double evaluate(const NodeContext& n) const override { return u_model(n.history, n.filter.belief(), b_); }
  int memo_context() const override {
    return b_.spec.kind == SpecKind::ObservedStateEqualsPrevAction ? b_.spec.lag : 0;
  }
  std::string name() const override { return b_.spec.to_string(); }

 private:
  Binding b_;
};

class RewardUtility final : public Utility {
 public:
  explicit RewardUtility(Binding b) : b_(std::move(b)) {}
  double evaluate(const NodeContext& n) const override { return n.history.empty() ? 0.0 : u_rl(n.history, b_); }
  int memo_context() const override { return 0; }
  std::string name() const override { return b_.spec.to_string(); }

 private:
  Binding b_;
};

class GoalUtility final : public Utility {
 public:
  explicit GoalUtility(Binding b) : b_(std::move(b)) {}
  double evaluate(const NodeContext& n) const override { return u_goal(n.history, b_.spec.goal); }
  int memo_context() const override { return -1; }
  std::string name() const override { return b_.spec.to_string(); }

 private:
  Binding b_;
};

class PredictUtility final : public Utility {
 public:
  explicit PredictUtility(dbn::DbnProgram model) : model_(std::move(model)) {}
  double evaluate(const NodeContext& n) const override {
    if (n.history.empty()) return 0.0;
    if (!n.parent) return u_predict(n.history, model_);
    auto pred = n.parent->predict(n.history.back().action);
    return argmax(pred) == n.history.back().obs.bits() ? 1.0 : 0.0;
  }
  // A child reads its parent's belief, which is the memo key of the parent.
  int memo_context() const override { return 0; }
  std::string name() const override { return "prediction"; }

 private:
  dbn::DbnProgram model_;
};

class KnowledgeUtility final : public Utility {
 public:
  explicit KnowledgeUtility(dbn::DbnProgram model) : log_prior_(model.prior().log()) {}
  double evaluate(const NodeContext& n) const override {
    return 1.0 - std::exp(n.filter.log_likelihood() + log_prior_);
  }
  int memo_context() const override { return -1; }
  std::string name() const override { return "knowledge"; }

 private:
  double log_prior_;
};

}  // namespace

std::unique_ptr<Utility> make_utility(const Binding& binding, const DbnProgram& model) {
  switch (binding.spec.kind) {
    case SpecKind::UnobservedStateEqualsAction:
    case SpecKind::ObservedStateEqualsPrevAction:
      return std::make_unique<ModelUtility>(binding);
    case SpecKind::RewardChannel:
      return std::make_unique<RewardUtility>(binding);
    case SpecKind::GoalPredicate:
      return std::make_unique<GoalUtility>(binding);
    case SpecKind::PredictionMatch:
      return std::make_unique<PredictUtility>(model);
    case SpecKind::KnowledgeSeeking:
      return std::make_unique<KnowledgeUtility>(model);
  }
  throw ContractViolation("unknown utility kind");
}

}  // namespace mbu::utility
