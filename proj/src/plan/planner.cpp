#include "mbu/plan/planner.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "mbu/errors.hpp"

namespace mbu::plan {

using dbn::ActionVec;
using dbn::CompiledModel;
using dbn::Filter;
using dbn::History;
using dbn::ObsVec;

Discount Discount::geometric(double gamma) {
  require(gamma > 0.0 && gamma < 1.0, "geometric discount needs 0 < gamma < 1");
  return Discount(Kind::Geometric, gamma, 0);
}

Discount Discount::window(int m) {
  require(m >= 0, "window length must be non-negative");
  return Discount(Kind::Window, 0.0, m);
}

Discount Discount::delta(int m) {
  require(m >= 0, "delta offset must be non-negative");
  return Discount(Kind::Delta, 0.0, m);
}

Discount Discount::dyadic() { return Discount(Kind::Dyadic, 0.5, 0); }

Discount Discount::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  try {
    if (kind == "geometric" && !arg.empty()) return geometric(std::stod(arg));
    if (kind == "window" && !arg.empty()) return window(std::stoi(arg));
    if (kind == "delta" && !arg.empty()) return delta(std::stoi(arg));
    if (kind == "dyadic" && arg.empty()) return dyadic();
  } catch (const std::invalid_argument&) {
  } catch (const std::out_of_range&) {
  }
  throw ContractViolation("bad discount '" + text + "'");
}

double Discount::weight(std::size_t k) const {
  switch (kind_) {
    case Kind::Geometric:
    case Kind::Dyadic:
      return std::pow(gamma_, static_cast<double>(k));
    case Kind::Window:
      return k <= static_cast<std::size_t>(m_) ? 1.0 : 0.0;
    case Kind::Delta:
      return k == static_cast<std::size_t>(m_) ? 1.0 : 0.0;
  }
  return 0.0;
}

double Discount::tail(std::size_t horizon) const {
  const auto m = static_cast<std::size_t>(m_);
  switch (kind_) {
    case Kind::Geometric:
    case Kind::Dyadic:
      return std::pow(gamma_, static_cast<double>(horizon + 1)) / (1.0 - gamma_);
    case Kind::Window:
      return m > horizon ? static_cast<double>(m - horizon) : 0.0;
    case Kind::Delta:
      return m > horizon ? 1.0 : 0.0;
  }
  return 0.0;
}

std::string Discount::to_string() const {
  switch (kind_) {
    case Kind::Geometric: {
      std::string g = std::to_string(gamma_);
      while (g.size() > 1 && g.back() == '0') g.pop_back();
      if (g.back() == '.') g.pop_back();
      return "geometric:" + g;
    }
    case Kind::Window:
      return "window:" + std::to_string(m_);
    case Kind::Delta:
      return "delta:" + std::to_string(m_);
    case Kind::Dyadic:
      return "dyadic";
  }
  return "";
}

namespace {

struct MemoKey {
  std::vector<double> belief;
  bool started;
  std::vector<std::uint64_t> context;
  int depth;
  friend bool operator<(const MemoKey& a, const MemoKey& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    if (a.started != b.started) return a.started < b.started;
    if (a.context != b.context) return a.context < b.context;
    return a.belief < b.belief;
  }
};

// One depth-first search. The history is extended in place and restored on return.
class Search {
 public:
  Search(const CompiledModel& model, const utility::Utility& u, const Discount& w, std::size_t epoch, bool memoize,
         History& h)
      : model_(model), u_(u), w_(w), epoch_(epoch), context_(memoize ? u.memo_context() : -1), h_(h) {}

  double node(const Filter& f, const Filter* parent, int depth) {
    ++nodes;
    double v = 0.0;
    const double wk = w_.weight(h_.size() - epoch_);
    if (wk != 0.0) v = wk * u_.evaluate(utility::NodeContext{h_, f, parent});
    if (depth > 0) v += future(f, depth);
    return v;
  }

  double expect(const Filter& f, ActionVec a, int depth) {
    const auto pred = f.predict(a);
    const int width = model_.program().obs_width();
    double sum = 0.0;
    for (std::uint32_t o = 0; o < pred.size(); ++o) {
      if (pred[o] == 0.0) continue;
      Filter child = f;
      const ObsVec ov(o, width);
      child.observe(a, ov);
      h_.push(a, ov);
      sum += pred[o] * node(child, &f, depth - 1);
      h_.pop();
    }
    return sum;
  }

  std::size_t nodes = 0;

 private:
  double future(const Filter& f, int depth) {
    MemoKey key;
    const bool memo = context_ >= 0;
    if (memo) {
      key.belief = f.weights();
      key.started = f.steps() > 0;
      key.depth = depth;
      const std::size_t n = std::min(static_cast<std::size_t>(context_), h_.size());
      for (std::size_t i = h_.size() - n; i < h_.size(); ++i)
        key.context.push_back(std::uint64_t{h_[i].action.bits()} << 32 | h_[i].obs.bits());
      if (auto it = table_.find(key); it != table_.end()) return it->second;
    }
    const int width = model_.program().action_width();
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint32_t i = 0; i < model_.action_count(); ++i)
      best = std::max(best, expect(f, dbn::lex_action(i, width), depth));
    if (memo) table_.emplace(std::move(key), best);
    return best;
  }

  const CompiledModel& model_;
  const utility::Utility& u_;
  const Discount& w_;
  std::size_t epoch_;
  int context_;
  History& h_;
  std::map<MemoKey, double> table_;
};

Filter filter_of(std::shared_ptr<const CompiledModel> model, const History& h) {
  Filter f(std::move(model));
  for (const auto& s : h) f.observe(s.action, s.obs);
  return f;
}

}  // namespace

Planner::Planner(std::shared_ptr<const CompiledModel> model, std::shared_ptr<const utility::Utility> utility,
                 PlanConfig config)
    : model_(std::move(model)), utility_(std::move(utility)), config_(config) {
  require(model_ != nullptr && utility_ != nullptr, "planner needs a model and a utility");
  require(config_.horizon >= 1, "planning horizon must be at least 1");
}

Planner::Planner(const dbn::DbnProgram& model, std::shared_ptr<const utility::Utility> utility, PlanConfig config)
    : Planner(std::make_shared<const CompiledModel>(model), std::move(utility), config) {}

double Planner::value(const History& h, const Filter& filter, std::size_t epoch, int depth) const {
  require(depth >= 0, "negative planning depth");
  require(epoch <= h.size(), "planning epoch beyond the history");
  History work = h;
  Search s(*model_, *utility_, config_.discount, epoch, config_.memoize, work);
  return s.node(filter, nullptr, depth);
}

double Planner::value(const History& h, std::size_t epoch, int depth) const {
  return value(h, filter_of(model_, h), epoch, depth);
}

double Planner::action_value(const History& h, const Filter& filter, ActionVec a) const {
  model_->program().check_action(a);
  History work = h;
  Search s(*model_, *utility_, config_.discount, h.size(), config_.memoize, work);
  return s.expect(filter, a, config_.horizon);
}

Decision Planner::act(const History& h, const Filter& filter) const {
  History work = h;
  Search s(*model_, *utility_, config_.discount, h.size(), config_.memoize, work);
  const int width = model_->program().action_width();
  Decision d;
  bool have = false;
  for (std::uint32_t i = 0; i < model_->action_count(); ++i) {
    const ActionVec a = dbn::lex_action(i, width);
    const double q = s.expect(filter, a, config_.horizon);
    const double tol = 1e-12 * std::max(1.0, std::abs(d.value));
    if (!have || q > d.value + tol) {
      if (have) d.runner_up = d.runner_up ? std::max(*d.runner_up, d.value) : d.value;
      d.action = a;
      d.value = q;
      have = true;
    } else {
      d.runner_up = d.runner_up ? std::max(*d.runner_up, q) : q;
    }
  }
  d.nodes = s.nodes;
  return d;
}

Decision Planner::act(const History& h) const { return act(h, filter_of(model_, h)); }

std::vector<double> predictive(const dbn::DbnProgram& model, const History& h, ActionVec a) {
  return dbn::predictive(model, h, a);
}

double value(const History& h, std::size_t epoch, int depth, const dbn::DbnProgram& model,
             std::shared_ptr<const utility::Utility> utility, const Discount& discount) {
  const Planner p(model, std::move(utility), PlanConfig{std::max(depth, 1), discount, true});
  return p.value(h, epoch, depth);
}

ActionVec act(const History& h, const dbn::DbnProgram& model, std::shared_ptr<const utility::Utility> utility,
              const PlanConfig& config) {
  return Planner(model, std::move(utility), config).act(h).action;
}

}  // namespace mbu::plan
