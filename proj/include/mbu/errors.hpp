#pragma once

#include <stdexcept>
#include <string>

namespace mbu {

/// Precondition or invariant broken by the caller (width mismatch, bad parameter, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The model assigns probability zero to the observed history.
class ModelContradiction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exhaustive enumeration was asked for a history longer than its bound.
class OracleBoundExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No candidate in the search space explains the history.
class NoExplanation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A utility specification matched no structure of the model.
class NoMatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A utility specification matched more than one structure of the model.
class Ambiguous : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed canonical text or configuration.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace mbu
