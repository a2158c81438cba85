#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mbu/dbn/history.hpp"
#include "mbu/dbn/inference.hpp"
#include "mbu/dbn/program.hpp"
#include "mbu/utility/utility.hpp"

namespace mbu::plan {

/// Temporal weight w(k) of the utility k steps after the planning epoch.
class Discount {
 public:
  enum class Kind { Geometric, Window, Delta, Dyadic };

  static Discount geometric(double gamma);
  static Discount window(int m);
  static Discount delta(int m);
  static Discount dyadic();
  /// "geometric:0.9", "window:5", "delta:3" or "dyadic".
  static Discount parse(const std::string& text);

  Kind kind() const { return kind_; }
  double gamma() const { return gamma_; }
  int m() const { return m_; }

  double weight(std::size_t k) const;
  /// Sum of w(k) over k > horizon.
  double tail(std::size_t horizon) const;
  std::string to_string() const;

 private:
  Discount(Kind kind, double gamma, int m) : kind_(kind), gamma_(gamma), m_(m) {}
  Kind kind_;
  double gamma_;
  int m_;
};

struct PlanConfig {
  int horizon = 4;
  Discount discount = Discount::geometric(0.9);
  bool memoize = true;
};

struct Decision {
  dbn::ActionVec action;
  double value = 0.0;                  // expected value of the chosen action
  std::optional<double> runner_up;     // best value among the other actions
  std::size_t nodes = 0;               // history nodes expanded
};

/// Expectimax over a frozen model. Each act() call uses its own memo table.
class Planner {
 public:
  Planner(std::shared_ptr<const dbn::CompiledModel> model, std::shared_ptr<const utility::Utility> utility,
          PlanConfig config);
  Planner(const dbn::DbnProgram& model, std::shared_ptr<const utility::Utility> utility, PlanConfig config);

  const PlanConfig& config() const { return config_; }
  const dbn::CompiledModel& model() const { return *model_; }
  const utility::Utility& utility() const { return *utility_; }

  /// v(h) = w(|h| - epoch) u(h) + max_a sum_o P(o | h, a) v(hao), cut off after
  /// `depth` more steps. `filter` must be conditioned on all of h.
  double value(const dbn::History& h, const dbn::Filter& filter, std::size_t epoch, int depth) const;
  double value(const dbn::History& h, std::size_t epoch, int depth) const;

  /// Expected value of taking `a` after h, with epoch |h| and the configured horizon.
  double action_value(const dbn::History& h, const dbn::Filter& filter, dbn::ActionVec a) const;

  /// Best action after h; ties go to the lexicographically smallest action.
  Decision act(const dbn::History& h, const dbn::Filter& filter) const;
  Decision act(const dbn::History& h) const;

 private:
  std::shared_ptr<const dbn::CompiledModel> model_;
  std::shared_ptr<const utility::Utility> utility_;
  PlanConfig config_;
};

/// P(o | h, a) under the model, indexed by ObsVec::bits().
std::vector<double> predictive(const dbn::DbnProgram& model, const dbn::History& h, dbn::ActionVec a);

double value(const dbn::History& h, std::size_t epoch, int depth, const dbn::DbnProgram& model,
             std::shared_ptr<const utility::Utility> utility, const Discount& discount);

dbn::ActionVec act(const dbn::History& h, const dbn::DbnProgram& model, std::shared_ptr<const utility::Utility> utility,
                   const PlanConfig& config);

}  // namespace mbu::plan
