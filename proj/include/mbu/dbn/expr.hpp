#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "mbu/dbn/bits.hpp"
#include "mbu/dbn/fraction.hpp"
#include "mbu/dbn/rng.hpp"

namespace mbu::dbn {

enum class Op : std::uint8_t { Const, PrevState, CurState, CurAction, Not, And, Or, Xor, Ite, Choice };

/// Values an expression may read during one time step.
struct EvalInputs {
  StateVec prev;
  StateVec cur;
  ActionVec action;
};

/// Immutable Boolean expression over the variables of a DBN program. Variables
/// are referenced by their index in the program's declaration lists.
class Expr {
 public:
  /// Placeholder; only assignment and comparison are valid on it.
  Expr() = default;

  static Expr constant(bool value);
  static Expr prev_state(int index);
  static Expr cur_state(int index);
  static Expr action(int index);
  static Expr negate(Expr e);
  static Expr both(Expr a, Expr b);
  static Expr either(Expr a, Expr b);
  static Expr exclusive(Expr a, Expr b);
  static Expr ite(Expr cond, Expr then_e, Expr else_e);
  /// `then_e` with probability p, `else_e` with probability 1-p.
  static Expr choice(Fraction p, Expr then_e, Expr else_e);

  Op op() const { return node_->op; }
  bool const_value() const { return node_->value; }
  int var_index() const { return node_->index; }
  const Fraction& probability() const { return node_->prob; }
  int arity() const { return static_cast<int>(node_->children.size()); }
  const Expr& child(int i) const { return node_->children[static_cast<std::size_t>(i)]; }

  /// Probability that the expression is true. Distinct Choice nodes draw independently.
  double prob_true(const EvalInputs& in) const;
  /// (P(true), P(false)), computed side by side so that an impossible value
  /// gets exactly 0 rather than a rounding residue of 1 - p.
  std::pair<double, double> truth(const EvalInputs& in) const;

  /// One stochastic evaluation; Choice draws consume `rng` in pre-order, and only
  /// the selected branch of a Choice is evaluated.
  bool sample(const EvalInputs& in, Rng& rng) const;

  /// Evaluation with every Choice resolved by `pick(node_ordinal)`; used by the
  /// brute-force enumerators. Ordinals count Choice nodes in pre-order.
  bool eval_with(const EvalInputs& in, const std::function<bool(int)>& pick) const;

  int choice_count() const;
  /// Probabilities of the Choice nodes, indexed by the ordinals used by eval_with.
  std::vector<Fraction> choice_probabilities() const;
  bool is_deterministic() const { return choice_count() == 0; }

  /// |e| under the description-length metric: one per node, a Choice adds the
  /// digit count of its reduced fraction, and Ite is charged as (c & t) | (!c & e).
  int description_length() const;

  /// Calls f on every variable reference in the tree.
  void visit_refs(const std::function<void(Op, int)>& f) const;

  /// Returns a copy with every Choice probability replaced by `p`.
  Expr with_choice_probability(Fraction p) const;
  /// Returns a copy with every Choice replaced by its `then` branch.
  Expr without_choice() const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  struct Node {
    Op op = Op::Const;
    bool value = false;
    int index = -1;
    Fraction prob;
    std::vector<Expr> children;
  };

  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  static Expr make(Node n);
  void collect_choices(std::vector<Fraction>& out) const;
  bool eval_impl(const EvalInputs& in, const std::function<bool(int)>& pick, int& ordinal) const;

  std::shared_ptr<const Node> node_;
};

}  // namespace mbu::dbn
