#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mbu/dbn/history.hpp"
#include "mbu/dbn/inference.hpp"
#include "mbu/dbn/program.hpp"
#include "mbu/dbn/rng.hpp"
#include "mbu/plan/planner.hpp"
#include "mbu/utility/utility.hpp"

namespace mbu::selfmod {

inline constexpr const char* kPiStar = "pi-star";

/// An action together with the policy that chooses the next one.
struct PolicyChoice {
  dbn::ActionVec action;
  std::string successor;
  friend bool operator==(const PolicyChoice&, const PolicyChoice&) = default;
};

/// A member of a policy space. Table policies look at the last `suffix` steps
/// only; planning policies maximize their own utility and keep themselves;
/// a mirror acts exactly like pi-star under another name.
struct Policy {
  enum class Kind { PiStar, Table, Planning, Mirror };

  std::string name;
  Kind kind = Kind::Table;
  int suffix = 0;
  std::map<std::vector<std::uint64_t>, PolicyChoice> table;
  PolicyChoice fallback;
  std::shared_ptr<const plan::Planner> planner;

  static Policy pi_star();
  static Policy constant(std::string name, dbn::ActionVec a, std::string successor);
  static Policy lookup(std::string name, int suffix, std::map<std::vector<std::uint64_t>, PolicyChoice> table,
                       PolicyChoice fallback);
  static Policy planning(std::string name, std::shared_ptr<const plan::Planner> planner);
  static Policy mirror(std::string name);

  /// Key of the last `suffix` steps of h (fewer when h is shorter).
  static std::vector<std::uint64_t> suffix_key(const dbn::History& h, int suffix);
  /// Choice of a non-pi-star policy after h; `filter` is conditioned on h.
  PolicyChoice decide(const dbn::History& h, const dbn::Filter& filter) const;
};

class PolicySpace {
 public:
  PolicySpace() = default;
  /// Space holding only pi-star.
  static PolicySpace with_pi_star();

  void add(Policy p);
  bool contains(const std::string& name) const;
  const Policy& get(const std::string& name) const;
  int index_of(const std::string& name) const;
  const std::vector<Policy>& policies() const { return policies_; }
  std::size_t size() const { return policies_.size(); }
  /// Throws ContractViolation unless pi-star is present and every successor resolves.
  void validate() const;

 private:
  std::vector<Policy> policies_;
};

struct SelfModConfig {
  double gamma = 0.9;
  int depth = 4;
};

/// Policy values under one model and one utility, with a memo shared across calls.
class Evaluator {
 public:
  Evaluator(std::shared_ptr<const dbn::CompiledModel> model, std::shared_ptr<const utility::Utility> utility,
            PolicySpace space, SelfModConfig config);
  Evaluator(const dbn::DbnProgram& model, std::shared_ptr<const utility::Utility> utility, PolicySpace space,
            SelfModConfig config);

  /// v(pi, h) = u(h) + gamma v(pi', h a') where (a', pi') = pi(h), with
  /// v(pi, ha) = sum_o P(o | ha) v(pi, hao); only u(h) remains at depth 0.
  double policy_value(const std::string& policy, const dbn::History& h, int depth);
  /// v(pi, ha) with `depth` steps left after a.
  double pair_value(dbn::ActionVec a, const std::string& policy, const dbn::History& h, int depth);
  /// argmax over (action, policy) of v(pi, ha) with config.depth - 1 steps after a.
  /// Among maximizers a pair that keeps pi-star wins, then the smallest action.
  PolicyChoice pi_star(const dbn::History& h);

  struct Ranked {
    PolicyChoice choice;
    double value;
  };
  /// All (action, policy) pairs with their values as used by pi_star.
  std::vector<Ranked> rank(const dbn::History& h);

  const PolicySpace& space() const { return space_; }
  const SelfModConfig& config() const { return config_; }
  std::size_t nodes() const { return nodes_; }

 private:
  struct Key {
    int policy;
    int depth;
    bool started;
    std::vector<std::uint64_t> context;
    std::vector<double> belief;
    friend auto operator<=>(const Key&, const Key&) = default;
  };

  double value_at(int policy, const dbn::Filter& f, const dbn::Filter* parent, int depth);
  double pair_at(dbn::ActionVec a, int policy, const dbn::Filter& f, int depth);
  PolicyChoice star_at(const dbn::Filter& f, int depth);
  std::vector<Ranked> rank_at(const dbn::Filter& f, int depth);
  Key key(int policy, const dbn::Filter& f, int depth) const;
  dbn::Filter filter_of(const dbn::History& h) const;

  std::shared_ptr<const dbn::CompiledModel> model_;
  std::shared_ptr<const utility::Utility> utility_;
  PolicySpace space_;
  SelfModConfig config_;
  int context_ = 0;  // -1 disables the memo
  dbn::History work_;
  std::map<Key, double> values_;
  std::map<Key, PolicyChoice> choices_;
  std::size_t nodes_ = 0;
};

double policy_value(const std::string& policy, const dbn::History& h, int depth, const dbn::DbnProgram& model,
                    std::shared_ptr<const utility::Utility> utility, const PolicySpace& space, double gamma);
PolicyChoice pi_star(const dbn::History& h, const PolicySpace& space, const SelfModConfig& config,
                     const dbn::DbnProgram& model, std::shared_ptr<const utility::Utility> utility);

/// Always sets the named deluding action variable, everything else false; keeps itself.
Policy delude_policy(const std::string& name, const dbn::DbnProgram& model, const std::string& action_var);
/// Copies the last value of `obs_var` into `action_var`, everything else false; keeps itself.
Policy copy_policy(const std::string& name, const dbn::DbnProgram& model, const std::string& action_var,
                   const std::string& obs_var);
/// Random action for every possible last step; successors drawn from `successors`.
Policy random_policy(const std::string& name, const dbn::DbnProgram& model, dbn::Rng& rng,
                     const std::vector<std::string>& successors);

struct TrialRecord {
  std::uint64_t seed = 0;
  std::vector<std::string> space;
  std::size_t history_length = 0;
  std::string successor;
  std::string action;
  double best_keep = 0.0;    // best value of a pair keeping pi-star
  double best_switch = 0.0;  // best value of a pair switching away (-inf if none)
  double gap() const { return best_keep - best_switch; }
};

struct HarnessReport {
  std::size_t trials = 0;
  std::size_t evaluations = 0;
  std::size_t self_modifications = 0;
  std::vector<TrialRecord> records;
};

struct HarnessConfig {
  SelfModConfig selfmod;
  std::size_t trials = 100;
  std::size_t max_policies = 5;  // including pi-star
  bool delude_and_rewrite = true;  // every space holds a deluding and a rewriting policy
  std::uint64_t seed = 0;
  std::size_t min_history = 4;
  std::size_t max_history = 40;
};

/// Random spaces that always contain pi-star, evaluated on seeded histories of
/// `env` with the environment itself as the model and `spec` as the utility.
/// Utility rewriters plan for `rewrite` instead.
HarnessReport prop4_harness(const dbn::DbnProgram& env, const utility::UtilitySpec& spec,
                          const utility::UtilitySpec& rewrite, const HarnessConfig& config);

}  // namespace mbu::selfmod
