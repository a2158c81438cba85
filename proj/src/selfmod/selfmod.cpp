#include "mbu/selfmod/selfmod.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mbu/dbn/simulate.hpp"
#include "mbu/errors.hpp"

namespace mbu::selfmod {

using dbn::ActionVec;
using dbn::Filter;
using dbn::History;
using dbn::ObsVec;

namespace {

constexpr double kTieTolerance = 1e-12;

std::uint64_t step_code(const dbn::Step& s) { return std::uint64_t{s.action.bits()} << 32 | s.obs.bits(); }

}  // namespace

Policy Policy::pi_star() {
  Policy p;
  p.name = kPiStar;
  p.kind = Kind::PiStar;
  return p;
}

Policy Policy::constant(std::string name, ActionVec a, std::string successor) {
  return lookup(std::move(name), 0, {}, PolicyChoice{a, std::move(successor)});
}

Policy Policy::lookup(std::string name, int suffix, std::map<std::vector<std::uint64_t>, PolicyChoice> table,
                      PolicyChoice fallback) {
  require(suffix >= 0, "negative lookup suffix");
  require(name != kPiStar, "pi-star can not be a lookup table");
  Policy p;
  p.name = std::move(name);
  p.kind = Kind::Table;
  p.suffix = suffix;
  p.table = std::move(table);
  p.fallback = std::move(fallback);
  return p;
}

Policy Policy::planning(std::string name, std::shared_ptr<const plan::Planner> planner) {
  require(planner != nullptr, "planning policy without a planner");
  require(name != kPiStar, "pi-star can not be a planning policy");
  Policy p;
  p.name = std::move(name);
  p.kind = Kind::Planning;
  p.planner = std::move(planner);
  return p;
}

Policy Policy::mirror(std::string name) {
  require(name != kPiStar, "a mirror needs its own name");
  Policy p;
  p.name = std::move(name);
  p.kind = Kind::Mirror;
  return p;
}

std::vector<std::uint64_t> Policy::suffix_key(const History& h, int suffix) {
  std::vector<std::uint64_t> key;
  const std::size_t n = std::min(static_cast<std::size_t>(suffix), h.size());
  for (std::size_t i = h.size() - n; i < h.size(); ++i) key.push_back(step_code(h[i]));
  return key;
}

PolicyChoice Policy::decide(const History& h, const Filter& filter) const {
  switch (kind) {
    case Kind::Table: {
      const auto it = table.find(suffix_key(h, suffix));
      return it == table.end() ? fallback : it->second;
    }
    case Kind::Planning:
      return PolicyChoice{planner->act(h, filter).action, name};
    case Kind::PiStar:
    case Kind::Mirror:
      break;
  }
  throw ContractViolation("policy '" + name + "' is decided by the evaluator");
}

PolicySpace PolicySpace::with_pi_star() {
  PolicySpace s;
  s.add(Policy::pi_star());
  return s;
}

void PolicySpace::add(Policy p) {
  require(!contains(p.name), "duplicate policy name '" + p.name + "'");
  policies_.push_back(std::move(p));
}

bool PolicySpace::contains(const std::string& name) const { return index_of(name) >= 0; }

int PolicySpace::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < policies_.size(); ++i)
    if (policies_[i].name == name) return static_cast<int>(i);
  return -1;
}

const Policy& PolicySpace::get(const std::string& name) const {
  const int i = index_of(name);
  require(i >= 0, "no policy named '" + name + "'");
  return policies_[static_cast<std::size_t>(i)];
}

void PolicySpace::validate() const {
  require(!policies_.empty(), "empty policy space");
  require(contains(kPiStar), "policy space without pi-star");
  for (const auto& p : policies_) {
    if (p.kind != Policy::Kind::Table) continue;
    require(contains(p.fallback.successor), "unknown successor '" + p.fallback.successor + "' of " + p.name);
    for (const auto& [k, c] : p.table) require(contains(c.successor), "unknown successor '" + c.successor + "' of " + p.name);
  }
}

Evaluator::Evaluator(std::shared_ptr<const dbn::CompiledModel> model, std::shared_ptr<const utility::Utility> utility,
                     PolicySpace space, SelfModConfig config)
    : model_(std::move(model)), utility_(std::move(utility)), space_(std::move(space)), config_(config) {
  require(model_ != nullptr && utility_ != nullptr, "evaluator needs a model and a utility");
  require(config_.gamma > 0.0 && config_.gamma < 1.0, "self-modification discount needs 0 < gamma < 1");
  require(config_.depth >= 1, "evaluation depth must be at least 1");
  space_.validate();
  context_ = utility_->memo_context();
  for (const auto& p : space_.policies()) {
    if (context_ < 0) break;
    if (p.kind == Policy::Kind::Table) context_ = std::max(context_, p.suffix);
    if (p.kind == Policy::Kind::Planning) {
      const int c = p.planner->utility().memo_context();
      context_ = c < 0 ? -1 : std::max(context_, c);
    }
  }
}

Evaluator::Evaluator(const dbn::DbnProgram& model, std::shared_ptr<const utility::Utility> utility, PolicySpace space,
                     SelfModConfig config)
    : Evaluator(std::make_shared<const dbn::CompiledModel>(model), std::move(utility), std::move(space), config) {}

Filter Evaluator::filter_of(const History& h) const {
  Filter f(model_);
  for (const auto& s : h) f.observe(s.action, s.obs);
  return f;
}

Evaluator::Key Evaluator::key(int policy, const Filter& f, int depth) const {
  return Key{policy, depth, f.steps() > 0, Policy::suffix_key(work_, context_), f.weights()};
}

// u(h) plus the discounted continuation; only the continuation is memoized,
// since u(h) may read more of h than its descendants do.
double Evaluator::value_at(int policy, const Filter& f, const Filter* parent, int depth) {
  ++nodes_;
  const double u = utility_->evaluate(utility::NodeContext{work_, f, parent});
  if (depth == 0) return u;
  const bool memo = context_ >= 0;
  Key k;
  if (memo) {
    k = key(policy, f, depth);
    if (auto it = values_.find(k); it != values_.end()) return u + it->second;
  }
  const Policy& p = space_.policies()[static_cast<std::size_t>(policy)];
  const PolicyChoice c =
      p.kind == Policy::Kind::PiStar || p.kind == Policy::Kind::Mirror ? star_at(f, depth - 1) : p.decide(work_, f);
  const double rest = config_.gamma * pair_at(c.action, space_.index_of(c.successor), f, depth - 1);
  if (memo) values_.emplace(std::move(k), rest);
  return u + rest;
}

double Evaluator::pair_at(ActionVec a, int policy, const Filter& f, int depth) {
  const auto pred = f.predict(a);
  const int width = model_->program().obs_width();
  double sum = 0.0;
  for (std::uint32_t o = 0; o < pred.size(); ++o) {
    if (pred[o] == 0.0) continue;
    Filter child = f;
    const ObsVec ov(o, width);
    child.observe(a, ov);
    work_.push(a, ov);
    sum += pred[o] * value_at(policy, child, &f, depth);
    work_.pop();
  }
  return sum;
}

std::vector<Evaluator::Ranked> Evaluator::rank_at(const Filter& f, int depth) {
  std::vector<Ranked> out;
  const int width = model_->program().action_width();
  for (std::uint32_t i = 0; i < model_->action_count(); ++i) {
    const ActionVec a = dbn::lex_action(i, width);
    for (std::size_t p = 0; p < space_.size(); ++p)
      out.push_back({PolicyChoice{a, space_.policies()[p].name}, pair_at(a, static_cast<int>(p), f, depth)});
  }
  return out;
}

PolicyChoice Evaluator::star_at(const Filter& f, int depth) {
  const bool memo = context_ >= 0;
  Key k;
  if (memo) {
    k = key(-1, f, depth);
    if (auto it = choices_.find(k); it != choices_.end()) return it->second;
  }
  const auto ranked = rank_at(f, depth);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : ranked) best = std::max(best, r.value);
  const double tol = kTieTolerance * std::max(1.0, std::abs(best));
  const Ranked* pick = nullptr;
  for (const auto& r : ranked) {
    if (r.value < best - tol) continue;
    if (r.choice.successor == kPiStar) {
      pick = &r;
      break;
    }
    if (!pick) pick = &r;
  }
  const PolicyChoice c = pick->choice;
  if (memo) choices_.emplace(std::move(k), c);
  return c;
}

double Evaluator::policy_value(const std::string& policy, const History& h, int depth) {
  require(depth >= 0, "negative evaluation depth");
  const int i = space_.index_of(policy);
  require(i >= 0, "no policy named '" + policy + "'");
  work_ = h;
  const Filter f = filter_of(h);
  return value_at(i, f, nullptr, depth);
}

double Evaluator::pair_value(ActionVec a, const std::string& policy, const History& h, int depth) {
  require(depth >= 0, "negative evaluation depth");
  model_->program().check_action(a);
  const int i = space_.index_of(policy);
  require(i >= 0, "no policy named '" + policy + "'");
  work_ = h;
  return pair_at(a, i, filter_of(h), depth);
}

PolicyChoice Evaluator::pi_star(const History& h) {
  work_ = h;
  return star_at(filter_of(h), config_.depth - 1);
}

std::vector<Evaluator::Ranked> Evaluator::rank(const History& h) {
  work_ = h;
  return rank_at(filter_of(h), config_.depth - 1);
}

double policy_value(const std::string& policy, const History& h, int depth, const dbn::DbnProgram& model,
                    std::shared_ptr<const utility::Utility> utility, const PolicySpace& space, double gamma) {
  Evaluator e(model, std::move(utility), space, SelfModConfig{gamma, std::max(depth, 1)});
  return e.policy_value(policy, h, depth);
}

PolicyChoice pi_star(const History& h, const PolicySpace& space, const SelfModConfig& config,
                     const dbn::DbnProgram& model, std::shared_ptr<const utility::Utility> utility) {
  Evaluator e(model, std::move(utility), space, config);
  return e.pi_star(h);
}

Policy delude_policy(const std::string& name, const dbn::DbnProgram& model, const std::string& action_var) {
  std::uint32_t bits = 1u << model.action_index(action_var);
  return Policy::constant(name, ActionVec(bits, model.action_width()), name);
}

Policy copy_policy(const std::string& name, const dbn::DbnProgram& model, const std::string& action_var,
                   const std::string& obs_var) {
  const int ai = model.action_index(action_var), oi = model.obs_index(obs_var);
  const int aw = model.action_width(), ow = model.obs_width();
  std::map<std::vector<std::uint64_t>, PolicyChoice> table;
  for (std::uint32_t a = 0; a < (1u << aw); ++a)
    for (std::uint32_t o = 0; o < (1u << ow); ++o) {
      const bool v = (o >> oi) & 1u;
      table[{step_code({ActionVec(a, aw), ObsVec(o, ow)})}] = PolicyChoice{ActionVec(v ? 1u << ai : 0u, aw), name};
    }
  return Policy::lookup(name, 1, std::move(table), PolicyChoice{ActionVec(0, aw), name});
}

Policy random_policy(const std::string& name, const dbn::DbnProgram& model, dbn::Rng& rng,
                     const std::vector<std::string>& successors) {
  require(!successors.empty(), "random policy needs successors");
  const int aw = model.action_width(), ow = model.obs_width();
  auto draw = [&] {
    return PolicyChoice{ActionVec(static_cast<std::uint32_t>(rng.below(1u << aw)), aw),
                        successors[static_cast<std::size_t>(rng.below(successors.size()))]};
  };
  std::map<std::vector<std::uint64_t>, PolicyChoice> table;
  for (std::uint32_t a = 0; a < (1u << aw); ++a)
    for (std::uint32_t o = 0; o < (1u << ow); ++o) table[{step_code({ActionVec(a, aw), ObsVec(o, ow)})}] = draw();
  const PolicyChoice fallback = draw();
  return Policy::lookup(name, 1, std::move(table), fallback);
}

HarnessReport prop4_harness(const dbn::DbnProgram& env, const utility::UtilitySpec& spec,
                          const utility::UtilitySpec& rewrite, const HarnessConfig& config) {
  require(config.trials >= 1, "harness needs at least one trial");
  require(config.max_policies >= 1, "harness spaces hold at least pi-star");
  require(config.min_history >= 1 && config.min_history <= config.max_history, "bad history length range");
  const auto model = std::make_shared<const dbn::CompiledModel>(env);
  const std::shared_ptr<const utility::Utility> u = utility::make_utility(utility::bind(spec, env), env);
  const std::shared_ptr<const utility::Utility> other = utility::make_utility(utility::bind(rewrite, env), env);
  const auto rewriter = std::make_shared<const plan::Planner>(
      model, other, plan::PlanConfig{2, plan::Discount::geometric(config.selfmod.gamma), true});
  const std::string deluding_var = env.actions().size() > 1 ? env.actions()[1] : env.actions()[0];

  HarnessReport report;
  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    const std::uint64_t seed = dbn::mix_seed(config.seed, "selfmod-trial", trial);
    dbn::Rng rng(seed);

    // Pick the members first so that random tables can name any of them.
    std::vector<int> kinds;
    if (config.delude_and_rewrite && config.max_policies >= 3) kinds = {0, 3};
    const std::size_t extra = static_cast<std::size_t>(rng.below(config.max_policies - kinds.size()));
    for (std::size_t i = 0; i < extra; ++i) kinds.push_back(static_cast<int>(rng.below(5)));
    std::vector<std::pair<int, std::string>> members;
    std::vector<std::string> names = {kPiStar};
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      static const char* const prefix[] = {"delude", "copy", "random", "rewriter", "mirror"};
      members.push_back({kinds[i], std::string(prefix[kinds[i]]) + "-" + std::to_string(i)});
      names.push_back(members.back().second);
    }
    PolicySpace space = PolicySpace::with_pi_star();
    for (const auto& [kind, name] : members) {
      switch (kind) {
        case 0:
          space.add(delude_policy(name, env, deluding_var));
          break;
        case 1:
          space.add(copy_policy(name, env, env.actions()[0], env.observations()[0].name));
          break;
        case 2:
          space.add(random_policy(name, env, rng, names));
          break;
        case 3:
          space.add(Policy::planning(name, rewriter));
          break;
        default:
          space.add(Policy::mirror(name));
          break;
      }
    }

    const std::size_t length =
        config.min_history + static_cast<std::size_t>(rng.below(config.max_history - config.min_history + 1));
    dbn::Rng actions = dbn::Rng::substream(seed, "actions");
    const History h = dbn::simulate(
        env,
        [&](const History&) {
          return ActionVec(static_cast<std::uint32_t>(actions.below(1u << env.action_width())), env.action_width());
        },
        length, seed);

    Evaluator ev(model, u, space, config.selfmod);
    const PolicyChoice choice = ev.pi_star(h);
    TrialRecord rec;
    rec.seed = seed;
    rec.space = names;
    rec.history_length = length;
    rec.successor = choice.successor;
    rec.action = choice.action.to_string();
    rec.best_keep = rec.best_switch = -std::numeric_limits<double>::infinity();
    for (const auto& r : ev.rank(h)) {
      double& slot = r.choice.successor == kPiStar ? rec.best_keep : rec.best_switch;
      slot = std::max(slot, r.value);
    }
    ++report.evaluations;
    if (choice.successor != kPiStar) ++report.self_modifications;
    report.records.push_back(std::move(rec));
  }
  report.trials = config.trials;
  return report;
}

}  // namespace mbu::selfmod
