#pragma once

#include <string>

#include "mbu/dbn/program.hpp"

namespace mbu::dbn {

// Canonical text form, one declaration per line:
//
//   action a b c d
//   state s := (choice 99/100 (xor r v) (not (xor r v)))
//   state r := s
//   obs o := (ite b c s)
//   init uniform            (or: init 100:1/2 011:1/2)
//
// A state name inside a state rule means its previous value; inside an output
// rule it means its current value. '#' starts a comment.

std::string to_text(const DbnProgram& program);
std::string expr_to_text(const Expr& e, const DbnProgram& program);
DbnProgram parse_program(const std::string& text);

}  // namespace mbu::dbn
