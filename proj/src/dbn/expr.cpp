#include "mbu/dbn/expr.hpp"

#include "mbu/errors.hpp"

namespace mbu::dbn {

Expr Expr::make(Node n) { return Expr(std::make_shared<const Node>(std::move(n))); }

Expr Expr::constant(bool value) {
  Node n;
  n.op = Op::Const;
  n.value = value;
  return make(std::move(n));
}

namespace {

void check_index(int index) {
  if (index < 0 || index >= kMaxVars) throw ContractViolation("variable index out of range");
}

}  // namespace

Expr Expr::prev_state(int index) {
  check_index(index);
  Node n;
  n.op = Op::PrevState;
  n.index = index;
  return make(std::move(n));
}

Expr Expr::cur_state(int index) {
  check_index(index);
  Node n;
  n.op = Op::CurState;
  n.index = index;
  return make(std::move(n));
}

Expr Expr::action(int index) {
  check_index(index);
  Node n;
  n.op = Op::CurAction;
  n.index = index;
  return make(std::move(n));
}

Expr Expr::negate(Expr e) {
  Node n;
  n.op = Op::Not;
  n.children = {std::move(e)};
  return make(std::move(n));
}

Expr Expr::both(Expr a, Expr b) {
  Node n;
  n.op = Op::And;
  n.children = {std::move(a), std::move(b)};
  return make(std::move(n));
}

Expr Expr::either(Expr a, Expr b) {
  Node n;
  n.op = Op::Or;
  n.children = {std::move(a), std::move(b)};
  return make(std::move(n));
}

Expr Expr::exclusive(Expr a, Expr b) {
  Node n;
  n.op = Op::Xor;
  n.children = {std::move(a), std::move(b)};
  return make(std::move(n));
}

Expr Expr::ite(Expr cond, Expr then_e, Expr else_e) {
  Node n;
  n.op = Op::Ite;
  n.children = {std::move(cond), std::move(then_e), std::move(else_e)};
  return make(std::move(n));
}

Expr Expr::choice(Fraction p, Expr then_e, Expr else_e) {
  if (!p.is_proper()) throw ContractViolation("Choice probability must lie strictly between 0 and 1");
  Node n;
  n.op = Op::Choice;
  n.prob = p;
  n.children = {std::move(then_e), std::move(else_e)};
  return make(std::move(n));
}

double Expr::prob_true(const EvalInputs& in) const { return truth(in).first; }

std::pair<double, double> Expr::truth(const EvalInputs& in) const {
  const Node& n = *node_;
  auto bit = [](bool v) { return v ? std::pair{1.0, 0.0} : std::pair{0.0, 1.0}; };
  switch (n.op) {
    case Op::Const:
      return bit(n.value);
    case Op::PrevState:
      return bit(in.prev[n.index]);
    case Op::CurState:
      return bit(in.cur[n.index]);
    case Op::CurAction:
      return bit(in.action[n.index]);
    case Op::Not: {
      const auto [t, f] = n.children[0].truth(in);
      return {f, t};
    }
    case Op::And: {
      const auto [at, af] = n.children[0].truth(in);
      const auto [bt, bf] = n.children[1].truth(in);
      return {at * bt, af + at * bf};
    }
    case Op::Or: {
      const auto [at, af] = n.children[0].truth(in);
      const auto [bt, bf] = n.children[1].truth(in);
      return {at + af * bt, af * bf};
    }
    case Op::Xor: {
      const auto [at, af] = n.children[0].truth(in);
      const auto [bt, bf] = n.children[1].truth(in);
      return {at * bf + af * bt, at * bt + af * bf};
    }
    case Op::Ite: {
      const auto [ct, cf] = n.children[0].truth(in);
      const auto [tt, tf] = n.children[1].truth(in);
      const auto [et, ef] = n.children[2].truth(in);
      return {ct * tt + cf * et, ct * tf + cf * ef};
    }
    case Op::Choice: {
      const double p = n.prob.value(), q = n.prob.complement().value();
      const auto [at, af] = n.children[0].truth(in);
      const auto [bt, bf] = n.children[1].truth(in);
      return {p * at + q * bt, p * af + q * bf};
    }
  }
  return {0.0, 1.0};
}

bool Expr::sample(const EvalInputs& in, Rng& rng) const {
  const Node& n = *node_;
  switch (n.op) {
    case Op::Const:
    case Op::PrevState:
    case Op::CurState:
    case Op::CurAction:
      return prob_true(in) > 0.5;
    case Op::Not:
      return !n.children[0].sample(in, rng);
    case Op::And: {
      bool a = n.children[0].sample(in, rng);
      bool b = n.children[1].sample(in, rng);
      return a && b;
    }
    case Op::Or: {
      bool a = n.children[0].sample(in, rng);
      bool b = n.children[1].sample(in, rng);
      return a || b;
    }
    case Op::Xor: {
      bool a = n.children[0].sample(in, rng);
      bool b = n.children[1].sample(in, rng);
      return a != b;
    }
    case Op::Ite: {
      bool c = n.children[0].sample(in, rng);
      return c ? n.children[1].sample(in, rng) : n.children[2].sample(in, rng);
    }
    case Op::Choice:
      return rng.bernoulli(n.prob) ? n.children[0].sample(in, rng) : n.children[1].sample(in, rng);
  }
  return false;
}

bool Expr::eval_impl(const EvalInputs& in, const std::function<bool(int)>& pick, int& ordinal) const {
  const Node& n = *node_;
  switch (n.op) {
    case Op::Const:
      return n.value;
    case Op::PrevState:
      return in.prev[n.index];
    case Op::CurState:
      return in.cur[n.index];
    case Op::CurAction:
      return in.action[n.index];
    case Op::Not:
      return !n.children[0].eval_impl(in, pick, ordinal);
    case Op::And: {
      bool a = n.children[0].eval_impl(in, pick, ordinal);
      bool b = n.children[1].eval_impl(in, pick, ordinal);
      return a && b;
    }
    case Op::Or: {
      bool a = n.children[0].eval_impl(in, pick, ordinal);
      bool b = n.children[1].eval_impl(in, pick, ordinal);
      return a || b;
    }
    case Op::Xor: {
      bool a = n.children[0].eval_impl(in, pick, ordinal);
      bool b = n.children[1].eval_impl(in, pick, ordinal);
      return a != b;
    }
    case Op::Ite: {
      // All three subtrees are walked so Choice ordinals do not depend on the condition.
      bool c = n.children[0].eval_impl(in, pick, ordinal);
      bool t = n.children[1].eval_impl(in, pick, ordinal);
      bool e = n.children[2].eval_impl(in, pick, ordinal);
      return c ? t : e;
    }
    case Op::Choice: {
      bool take_then = pick(ordinal++);
      bool t = n.children[0].eval_impl(in, pick, ordinal);
      bool e = n.children[1].eval_impl(in, pick, ordinal);
      return take_then ? t : e;
    }
  }
  return false;
}

bool Expr::eval_with(const EvalInputs& in, const std::function<bool(int)>& pick) const {
  int ordinal = 0;
  return eval_impl(in, pick, ordinal);
}

int Expr::choice_count() const {
  int c = node_->op == Op::Choice ? 1 : 0;
  for (const auto& ch : node_->children) c += ch.choice_count();
  return c;
}

void Expr::collect_choices(std::vector<Fraction>& out) const {
  if (node_->op == Op::Choice) out.push_back(node_->prob);
  for (const auto& ch : node_->children) ch.collect_choices(out);
}

std::vector<Fraction> Expr::choice_probabilities() const {
  std::vector<Fraction> out;
  collect_choices(out);
  return out;
}

int Expr::description_length() const {
  const Node& n = *node_;
  switch (n.op) {
    case Op::Const:
    case Op::PrevState:
    case Op::CurState:
    case Op::CurAction:
      return 1;
    case Op::Not:
      return 1 + n.children[0].description_length();
    case Op::And:
    case Op::Or:
    case Op::Xor:
      return 1 + n.children[0].description_length() + n.children[1].description_length();
    case Op::Ite: {
      // (c & t) | (!c & e)
      int c = n.children[0].description_length();
      return 4 + 2 * c + n.children[1].description_length() + n.children[2].description_length();
    }
    case Op::Choice:
      return 1 + n.prob.digit_count() + n.children[0].description_length() +
             n.children[1].description_length();
  }
  return 0;
}

void Expr::visit_refs(const std::function<void(Op, int)>& f) const {
  const Node& n = *node_;
  if (n.op == Op::PrevState || n.op == Op::CurState || n.op == Op::CurAction) f(n.op, n.index);
  for (const auto& ch : n.children) ch.visit_refs(f);
}

Expr Expr::with_choice_probability(Fraction p) const {
  const Node& n = *node_;
  if (n.children.empty()) return *this;
  Node copy = n;
  for (auto& ch : copy.children) ch = ch.with_choice_probability(p);
  if (copy.op == Op::Choice) {
    if (!p.is_proper()) throw ContractViolation("Choice probability must lie strictly between 0 and 1");
    copy.prob = p;
  }
  return make(std::move(copy));
}

Expr Expr::without_choice() const {
  const Node& n = *node_;
  if (n.op == Op::Choice) return n.children[0].without_choice();
  if (n.children.empty()) return *this;
  Node copy = n;
  for (auto& ch : copy.children) ch = ch.without_choice();
  return make(std::move(copy));
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  if (!a.node_ || !b.node_) return false;
  const auto& x = *a.node_;
  const auto& y = *b.node_;
  if (x.op != y.op || x.children.size() != y.children.size()) return false;
  switch (x.op) {
    case Op::Const:
      if (x.value != y.value) return false;
      break;
    case Op::PrevState:
    case Op::CurState:
    case Op::CurAction:
      if (x.index != y.index) return false;
      break;
    case Op::Choice:
      if (!(x.prob == y.prob)) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < x.children.size(); ++i)
    if (!(x.children[i] == y.children[i])) return false;
  return true;
}

}  // namespace mbu::dbn
