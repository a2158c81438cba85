#include "mbu/dbn/text_format.hpp"

#include <map>
#include <sstream>
#include <vector>

#include "mbu/errors.hpp"

namespace mbu::dbn {

namespace {

const char* op_name(Op op) {
  switch (op) {
    case Op::Not: return "not";
    case Op::And: return "and";
    case Op::Or: return "or";
    case Op::Xor: return "xor";
    case Op::Ite: return "ite";
    case Op::Choice: return "choice";
    default: return "";
  }
}

void print(const Expr& e, const DbnProgram& p, std::string& out) {
  switch (e.op()) {
    case Op::Const:
      out += e.const_value() ? "true" : "false";
      return;
    case Op::PrevState:
    case Op::CurState:
      out += p.states()[static_cast<std::size_t>(e.var_index())].name;
      return;
    case Op::CurAction:
      out += p.actions()[static_cast<std::size_t>(e.var_index())];
      return;
    default:
      break;
  }
  out += '(';
  out += op_name(e.op());
  if (e.op() == Op::Choice) out += ' ' + e.probability().to_string();
  for (int i = 0; i < e.arity(); ++i) {
    out += ' ';
    print(e.child(i), p, out);
  }
  out += ')';
}

std::vector<std::string> tokenize(const std::string& s) {
  std::vector<std::string> toks;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) toks.push_back(cur);
    cur.clear();
  };
  for (char c : s) {
    if (c == '(' || c == ')') {
      flush();
      toks.emplace_back(1, c);
    } else if (c == ' ' || c == '\t' || c == '\r') {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return toks;
}

struct ExprParser {
  const std::vector<std::string>& toks;
  std::size_t pos = 0;
  const std::map<std::string, int>& states;
  const std::map<std::string, int>& actions;
  bool output_rule;
  int line;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("line " + std::to_string(line) + ": " + what);
  }

  const std::string& next() {
    if (pos >= toks.size()) fail("unexpected end of expression");
    return toks[pos++];
  }

  Expr parse() {
    const std::string& t = next();
    if (t == ")") fail("unexpected ')'");
    if (t != "(") return atom(t);
    const std::string op = next();
    Expr result;
    if (op == "not") {
      result = Expr::negate(parse());
    } else if (op == "and" || op == "or" || op == "xor") {
      Expr a = parse();
      Expr b = parse();
      result = op == "and" ? Expr::both(a, b) : op == "or" ? Expr::either(a, b) : Expr::exclusive(a, b);
    } else if (op == "ite") {
      Expr c = parse();
      Expr a = parse();
      Expr b = parse();
      result = Expr::ite(c, a, b);
    } else if (op == "choice") {
      Fraction f = Fraction::parse(next());
      if (!f.is_proper()) fail("choice probability must lie strictly between 0 and 1");
      Expr a = parse();
      Expr b = parse();
      result = Expr::choice(f, a, b);
    } else {
      fail("unknown operator '" + op + "'");
    }
    if (next() != ")") fail("expected ')' after " + op);
    return result;
  }

  Expr atom(const std::string& t) {
    if (t == "true") return Expr::constant(true);
    if (t == "false") return Expr::constant(false);
    if (auto it = states.find(t); it != states.end())
      return output_rule ? Expr::cur_state(it->second) : Expr::prev_state(it->second);
    if (auto it = actions.find(t); it != actions.end()) return Expr::action(it->second);
    fail("unknown or unreadable variable '" + t + "'");
  }
};

std::string strip(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string expr_to_text(const Expr& e, const DbnProgram& program) {
  std::string out;
  print(e, program, out);
  return out;
}

std::string to_text(const DbnProgram& program) {
  std::string out = "action";
  for (const auto& a : program.actions()) out += ' ' + a;
  out += '\n';
  for (const auto& s : program.states()) out += "state " + s.name + " := " + expr_to_text(s.update, program) + '\n';
  for (const auto& o : program.observations()) out += "obs " + o.name + " := " + expr_to_text(o.output, program) + '\n';
  if (program.init().uniform()) {
    out += "init uniform\n";
  } else {
    out += "init";
    for (const auto& [s, w] : program.init().weights) out += ' ' + s.to_string() + ':' + w.to_string();
    out += '\n';
  }
  return out;
}

DbnProgram parse_program(const std::string& text) {
  struct Line {
    int number;
    std::string kind, name, body;
  };
  std::vector<Line> rules;
  std::vector<std::string> actions;
  std::string init_text;
  int init_line = 0;
  bool seen_action = false;

  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::string line = strip(raw);
    if (line.empty()) continue;
    auto sp = line.find(' ');
    std::string kw = line.substr(0, sp);
    std::string rest = sp == std::string::npos ? "" : strip(line.substr(sp + 1));
    if (kw == "action") {
      if (seen_action) throw ParseError("line " + std::to_string(number) + ": duplicate action line");
      seen_action = true;
      std::istringstream names(rest);
      std::string n;
      while (names >> n) actions.push_back(n);
    } else if (kw == "state" || kw == "obs") {
      auto def = rest.find(":=");
      if (def == std::string::npos) throw ParseError("line " + std::to_string(number) + ": expected ':='");
      rules.push_back({number, kw, strip(rest.substr(0, def)), strip(rest.substr(def + 2))});
      if (rules.back().name.empty() || rules.back().name.find(' ') != std::string::npos)
        throw ParseError("line " + std::to_string(number) + ": bad variable name");
    } else if (kw == "init") {
      if (init_line) throw ParseError("line " + std::to_string(number) + ": duplicate init line");
      init_text = rest;
      init_line = number;
    } else {
      throw ParseError("line " + std::to_string(number) + ": unknown declaration '" + kw + "'");
    }
  }

  std::map<std::string, int> state_ix, action_ix;
  for (std::size_t i = 0; i < actions.size(); ++i) action_ix[actions[i]] = static_cast<int>(i);
  int ns = 0;
  for (const auto& r : rules)
    if (r.kind == "state") state_ix[r.name] = ns++;

  std::vector<StateRule> states;
  std::vector<ObsRule> obs;
  for (const auto& r : rules) {
    auto toks = tokenize(r.body);
    ExprParser p{toks, 0, state_ix, action_ix, r.kind == "obs", r.number};
    Expr e = p.parse();
    if (p.pos != toks.size()) throw ParseError("line " + std::to_string(r.number) + ": trailing tokens");
    if (r.kind == "state")
      states.push_back({r.name, e});
    else
      obs.push_back({r.name, e});
  }

  InitDist init;
  if (!init_text.empty() && init_text != "uniform") {
    std::istringstream items(init_text);
    std::string item;
    while (items >> item) {
      auto colon = item.find(':');
      if (colon == std::string::npos) throw ParseError("line " + std::to_string(init_line) + ": expected state:n/d");
      StateVec s = StateVec::parse(item.substr(0, colon));
      if (s.width() != ns) throw ParseError("line " + std::to_string(init_line) + ": initial state width mismatch");
      init.weights.emplace_back(s, Fraction::parse(item.substr(colon + 1)));
    }
  }
  try {
    return DbnProgram(std::move(actions), std::move(states), std::move(obs), std::move(init));
  } catch (const ContractViolation& e) {
    throw ParseError(e.what());
  }
}

}  // namespace mbu::dbn
