#pragma once

#include <cstddef>
#include <vector>

#include "mbu/dbn/bits.hpp"
#include "mbu/errors.hpp"

namespace mbu::dbn {

struct Step {
  ActionVec action;
  ObsVec obs;
  friend bool operator==(const Step&, const Step&) = default;
};

/// Alternating actions and observations (a_1, o_1, ..., a_t, o_t).
class History {
 public:
  History() = default;
  explicit History(std::vector<Step> steps) : steps_(std::move(steps)) {}

  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  const Step& operator[](std::size_t i) const { return steps_[i]; }
  const Step& back() const {
    require(!steps_.empty(), "back() of empty history");
    return steps_.back();
  }
  const std::vector<Step>& steps() const { return steps_; }
  auto begin() const { return steps_.begin(); }
  auto end() const { return steps_.end(); }

  void push(ActionVec a, ObsVec o) { steps_.push_back({a, o}); }
  void pop() {
    require(!steps_.empty(), "pop() of empty history");
    steps_.pop_back();
  }
  History prefix(std::size_t n) const {
    require(n <= steps_.size(), "prefix longer than history");
    return History(std::vector<Step>(steps_.begin(), steps_.begin() + static_cast<std::ptrdiff_t>(n)));
  }
  History extended(ActionVec a, ObsVec o) const {
    History h = *this;
    h.push(a, o);
    return h;
  }

  friend bool operator==(const History&, const History&) = default;

 private:
  std::vector<Step> steps_;
};

}  // namespace mbu::dbn
