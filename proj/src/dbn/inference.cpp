#include "mbu/dbn/inference.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "mbu/errors.hpp"

namespace mbu::dbn {

Belief::Belief(std::vector<double> weights, int width) : weights_(std::move(weights)), width_(width) {
  require(weights_.size() == (std::size_t{1} << width), "belief size does not match state width");
}

double Belief::probability(StateVec s) const {
  require(s.width() == width_, "belief queried with wrong state width");
  return weights_[s.bits()];
}

double Belief::marginal(int var) const {
  require(var >= 0 && var < width_, "belief marginal of undeclared variable");
  double p = 0.0;
  for (std::size_t z = 0; z < weights_.size(); ++z)
    if ((z >> var) & 1u) p += weights_[z];
  return p;
}

Belief Belief::uniform(int width) {
  std::size_t n = std::size_t{1} << width;
  return Belief(std::vector<double>(n, 1.0 / static_cast<double>(n)), width);
}

namespace {

constexpr std::size_t kMaxTableEntries = std::size_t{1} << 24;

bool reads_actions(const DbnProgram& p) {
  bool found = false;
  for (const auto& s : p.states())
    s.update.visit_refs([&](Op op, int) { found = found || op == Op::CurAction; });
  return found;
}

}  // namespace

CompiledModel::CompiledModel(DbnProgram program) : program_(std::move(program)) {
  const int k = program_.state_width();
  const int m = program_.obs_width();
  const int na = program_.action_width();
  const std::size_t S = state_count(), O = obs_count(), A = action_count();
  action_dependent_ = reads_actions(program_);
  const std::size_t tables = action_dependent_ ? A : 1;
  if (tables * S * S + A * S * O > kMaxTableEntries) throw ContractViolation("program too large to tabulate");

  trans_.assign(tables * S * S, 0.0);
  std::vector<double> bit(static_cast<std::size_t>(std::max(k, m))), off(bit.size());
  for (std::size_t a = 0; a < tables; ++a) {
    for (std::size_t prev = 0; prev < S; ++prev) {
      EvalInputs in{StateVec(static_cast<std::uint32_t>(prev), k), StateVec(0, k),
                    ActionVec(static_cast<std::uint32_t>(a), na)};
      for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i)
        std::tie(bit[i], off[i]) = program_.states()[i].update.truth(in);
      double* row = &trans_[a * S * S + prev * S];
      for (std::size_t next = 0; next < S; ++next) {
        double p = 1.0;
        for (int i = 0; i < k; ++i) p *= ((next >> i) & 1u) ? bit[static_cast<std::size_t>(i)] : off[static_cast<std::size_t>(i)];
        row[next] = p;
      }
    }
  }

  obs_.assign(A * S * O, 0.0);
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t z = 0; z < S; ++z) {
      EvalInputs in{StateVec(0, k), StateVec(static_cast<std::uint32_t>(z), k), ActionVec(static_cast<std::uint32_t>(a), na)};
      for (std::size_t j = 0; j < static_cast<std::size_t>(m); ++j)
        std::tie(bit[j], off[j]) = program_.observations()[j].output.truth(in);
      double* row = &obs_[(a * S + z) * O];
      for (std::size_t o = 0; o < O; ++o) {
        double p = 1.0;
        for (int j = 0; j < m; ++j) p *= ((o >> j) & 1u) ? bit[static_cast<std::size_t>(j)] : off[static_cast<std::size_t>(j)];
        row[o] = p;
      }
    }
  }

  init_.assign(S, 0.0);
  for (std::size_t z = 0; z < S; ++z) init_[z] = program_.init_probability(StateVec(static_cast<std::uint32_t>(z), k));
}

Filter::Filter(std::shared_ptr<const CompiledModel> model) : model_(std::move(model)) {
  require(model_ != nullptr, "filter needs a model");
  weights_ = model_->init();
}

Filter::Filter(const DbnProgram& program) : Filter(std::make_shared<const CompiledModel>(program)) {}

std::vector<double> Filter::next_state_prior(ActionVec a) const {
  model_->program().check_action(a);
  if (steps_ == 0) return weights_;
  const std::size_t S = model_->state_count();
  std::vector<double> out(S, 0.0);
  for (std::size_t prev = 0; prev < S; ++prev) {
    const double w = weights_[prev];
    if (w == 0.0) continue;
    for (std::size_t next = 0; next < S; ++next)
      out[next] += w * model_->transition(static_cast<std::uint32_t>(prev), a.bits(), static_cast<std::uint32_t>(next));
  }
  return out;
}

std::vector<double> Filter::predict(ActionVec a) const {
  const auto prior = next_state_prior(a);
  const std::size_t S = model_->state_count(), O = model_->obs_count();
  std::vector<double> out(O, 0.0);
  for (std::size_t z = 0; z < S; ++z) {
    if (prior[z] == 0.0) continue;
    for (std::size_t o = 0; o < O; ++o)
      out[o] += prior[z] * model_->output(static_cast<std::uint32_t>(z), a.bits(), static_cast<std::uint32_t>(o));
  }
  return out;
}

double Filter::observe(ActionVec a, ObsVec o) {
  model_->program().check_obs(o);
  auto post = next_state_prior(a);
  double total = 0.0;
  for (std::size_t z = 0; z < post.size(); ++z) {
    post[z] *= model_->output(static_cast<std::uint32_t>(z), a.bits(), o.bits());
    total += post[z];
  }
  if (!(total > 0.0)) throw ModelContradiction("model assigns probability zero to observation " + o.to_string());
  for (double& w : post) w /= total;
  weights_ = std::move(post);
  log_likelihood_ += std::log(total);
  ++steps_;
  return total;
}

double likelihood(const DbnProgram& program, const History& h) {
  Filter f(program);
  double p = 1.0;
  for (const auto& st : h) {
    program.check_action(st.action);
    program.check_obs(st.obs);
    double q = f.predict(st.action)[st.obs.bits()];
    if (q == 0.0) return 0.0;
    f.observe(st.action, st.obs);
    p *= q;
  }
  return p;
}

double log_likelihood(const DbnProgram& program, const History& h) {
  Filter f(program);
  for (const auto& st : h) {
    program.check_obs(st.obs);
    if (f.predict(st.action)[st.obs.bits()] == 0.0) return -std::numeric_limits<double>::infinity();
    f.observe(st.action, st.obs);
  }
  return f.log_likelihood();
}

Belief filter(const DbnProgram& program, const History& h) {
  Filter f(program);
  for (const auto& st : h) f.observe(st.action, st.obs);
  return f.belief();
}

std::vector<double> predictive(const DbnProgram& program, const History& h, ActionVec a) {
  Filter f(program);
  for (const auto& st : h) f.observe(st.action, st.obs);
  return f.predict(a);
}

namespace {

// Joint distribution of a rule list's outputs with every Choice draw in every
// rule enumerated explicitly. Entry b is the probability that the rule outputs
// form bit pattern b.
template <class Rules, class Get>
std::vector<double> enumerate_rules(const Rules& rules, Get get, const EvalInputs& in) {
  std::vector<std::vector<Fraction>> probs;
  std::size_t total_choices = 0;
  for (const auto& r : rules) {
    probs.push_back(get(r).choice_probabilities());
    total_choices += probs.back().size();
  }
  if (total_choices > 20) throw OracleBoundExceeded("too many Choice nodes for exhaustive enumeration");
  std::vector<double> out(std::size_t{1} << rules.size(), 0.0);
  for (std::uint64_t picks = 0; picks < (std::uint64_t{1} << total_choices); ++picks) {
    double w = 1.0;
    std::uint32_t pattern = 0;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < rules.size(); ++i) {
      const auto& ps = probs[i];
      for (std::size_t c = 0; c < ps.size(); ++c)
        w *= ((picks >> (offset + c)) & 1u) ? ps[c].value() : 1.0 - ps[c].value();
      const std::size_t base = offset;
      bool v = get(rules[i]).eval_with(in, [&](int ord) { return ((picks >> (base + static_cast<std::size_t>(ord))) & 1u) != 0; });
      if (v) pattern |= 1u << i;
      offset += ps.size();
    }
    out[pattern] += w;
  }
  return out;
}

}  // namespace

void enumerate_state_histories(const DbnProgram& program, const History& h,
                               const std::function<void(const std::vector<StateVec>&, double)>& visit,
                               std::size_t bound) {
  if (h.size() > bound)
    throw OracleBoundExceeded("history of length " + std::to_string(h.size()) + " exceeds oracle bound " +
                              std::to_string(bound));
  const int k = program.state_width();
  const std::size_t S = std::size_t{1} << k;
  for (const auto& st : h) {
    program.check_action(st.action);
    program.check_obs(st.obs);
  }

  // Tables are built per (action, state) on demand, only for actions that occur in h.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<double>> trans_cache, obs_cache;
  auto trans_row = [&](std::uint32_t prev, ActionVec a) -> const std::vector<double>& {
    auto key = std::make_pair(a.bits(), prev);
    auto it = trans_cache.find(key);
    if (it != trans_cache.end()) return it->second;
    EvalInputs in{StateVec(prev, k), StateVec(0, k), a};
    auto row = enumerate_rules(program.states(), [](const StateRule& r) -> const Expr& { return r.update; }, in);
    return trans_cache.emplace(key, std::move(row)).first->second;
  };
  auto obs_row = [&](std::uint32_t z, ActionVec a) -> const std::vector<double>& {
    auto key = std::make_pair(a.bits(), z);
    auto it = obs_cache.find(key);
    if (it != obs_cache.end()) return it->second;
    EvalInputs in{StateVec(0, k), StateVec(z, k), a};
    auto row = enumerate_rules(program.observations(), [](const ObsRule& r) -> const Expr& { return r.output; }, in);
    return obs_cache.emplace(key, std::move(row)).first->second;
  };

  std::vector<StateVec> path;
  if (h.empty()) {
    for (std::size_t z = 0; z < S; ++z) {
      double w = program.init_probability(StateVec(static_cast<std::uint32_t>(z), k));
      if (w == 0.0) continue;
      path = {StateVec(static_cast<std::uint32_t>(z), k)};
      visit(path, w);
    }
    return;
  }

  std::function<void(std::size_t, double)> dfs = [&](std::size_t t, double w) {
    if (t == h.size()) {
      visit(path, w);
      return;
    }
    const Step& st = h[t];
    for (std::size_t z = 0; z < S; ++z) {
      double p = t == 0 ? program.init_probability(StateVec(static_cast<std::uint32_t>(z), k))
                        : trans_row(path.back().bits(), st.action)[z];
      if (p == 0.0) continue;
      double q = obs_row(static_cast<std::uint32_t>(z), st.action)[st.obs.bits()];
      if (q == 0.0) continue;
      path.push_back(StateVec(static_cast<std::uint32_t>(z), k));
      dfs(t + 1, w * p * q);
      path.pop_back();
    }
  };
  dfs(0, 1.0);
}

StateHistoryDistribution state_history_distribution(const DbnProgram& program, const History& h, std::size_t bound) {
  StateHistoryDistribution out;
  enumerate_state_histories(
      program, h,
      [&](const std::vector<StateVec>& z, double w) {
        out.weights[z] += w;
        out.evidence += w;
      },
      bound);
  if (!(out.evidence > 0.0)) throw ModelContradiction("history has probability zero under the model");
  for (auto& [z, w] : out.weights) w /= out.evidence;
  return out;
}

}  // namespace mbu::dbn
