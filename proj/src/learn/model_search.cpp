#include "mbu/learn/model_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>

#include "mbu/dbn/inference.hpp"
#include "mbu/errors.hpp"

namespace mbu::learn {

using dbn::Expr;
using dbn::Fraction;
using dbn::History;

std::vector<Fraction> fraction_grid(std::uint32_t denominator) {
  require(denominator >= 2, "fraction grid needs a denominator of at least 2");
  std::vector<Fraction> out;
  for (std::uint32_t k = 1; k < denominator; ++k) {
    Fraction f(k, denominator);
    if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
  }
  return out;
}

namespace {

constexpr double kLn2 = 0.69314718055994530942;
constexpr double kTieTolerance = 1e-9;

// ---------------------------------------------------------------------------
// Deterministic expressions deduplicated by truth table.

struct TableExpr {
  std::uint32_t table = 0;  // bit z = value on input assignment z
  Expr expr;
  int dl = 0;
};

std::uint32_t full_mask(int states) { return states >= 32 ? ~0u : ((1u << states) - 1u); }

// Minimal-size expression for every truth table reachable with at most
// `max_nodes` nodes over `n` variables. Children of a minimal expression can be
// taken minimal themselves, so each size level only combines new tables.
std::vector<TableExpr> minimal_tables(int n, int max_nodes, bool current) {
  const int S = 1 << n;
  const std::uint32_t all = full_mask(S);
  std::map<std::uint32_t, int> seen;
  std::vector<std::vector<TableExpr>> level(static_cast<std::size_t>(max_nodes) + 1);
  auto add = [&](int size, std::uint32_t table, Expr e) {
    if (seen.count(table)) return;
    seen[table] = size;
    level[static_cast<std::size_t>(size)].push_back({table, std::move(e), size});
  };
  if (max_nodes >= 1) {
    add(1, 0, Expr::constant(false));
    add(1, all, Expr::constant(true));
    for (int i = 0; i < n; ++i) {
      std::uint32_t t = 0;
      for (int z = 0; z < S; ++z)
        if ((z >> i) & 1) t |= 1u << z;
      add(1, t, current ? Expr::cur_state(i) : Expr::prev_state(i));
    }
  }
  for (int size = 2; size <= max_nodes; ++size) {
    for (const auto& c : level[static_cast<std::size_t>(size - 1)]) add(size, ~c.table & all, Expr::negate(c.expr));
    for (int op = 0; op < 3; ++op) {
      for (int ls = 1; ls <= size - 2; ++ls) {
        const int rs = size - 1 - ls;
        for (const auto& l : level[static_cast<std::size_t>(ls)])
          for (const auto& r : level[static_cast<std::size_t>(rs)]) {
            if (op == 0) add(size, l.table & r.table, Expr::both(l.expr, r.expr));
            if (op == 1) add(size, l.table | r.table, Expr::either(l.expr, r.expr));
            if (op == 2) add(size, l.table ^ r.table, Expr::exclusive(l.expr, r.expr));
          }
      }
    }
  }
  std::vector<TableExpr> out;
  for (auto& lv : level)
    for (auto& t : lv) out.push_back(std::move(t));
  return out;
}

bool table_bit(std::uint32_t table, std::uint32_t z) { return (table >> z) & 1u; }

// Input bits a table actually depends on.
std::uint32_t support(std::uint32_t table, int n) {
  std::uint32_t dep = 0;
  const std::uint32_t S = 1u << n;
  for (int i = 0; i < n; ++i)
    for (std::uint32_t z = 0; z < S; ++z)
      if (table_bit(table, z) != table_bit(table, z ^ (1u << i))) {
        dep |= 1u << i;
        break;
      }
  return dep;
}

// ---------------------------------------------------------------------------
// Output options.

struct ObsOption {
  Expr expr;
  int dl = 0;
  int reads_state = -1;
  std::vector<std::uint32_t> truth;  // per action: states where the output is true
  std::vector<std::uint32_t> masks;  // per step: states consistent with the observed bit
};

struct Data {
  std::vector<std::uint32_t> actions;
  std::vector<std::uint32_t> obs;
  int action_width = 0;
  int obs_width = 0;
  std::size_t T = 0;
};

std::vector<Expr> plain_outputs(int n, int action_width) {
  std::vector<Expr> out = {Expr::constant(false), Expr::constant(true)};
  for (int k = 0; k < n; ++k) out.push_back(Expr::cur_state(k));
  for (int k = 0; k < n; ++k) out.push_back(Expr::negate(Expr::cur_state(k)));
  for (int a = 0; a < action_width; ++a) out.push_back(Expr::action(a));
  return out;
}

int state_read(const Expr& e) {
  int k = -1;
  e.visit_refs([&](dbn::Op op, int idx) {
    if (op == dbn::Op::CurState) k = idx;
  });
  return k;
}

std::vector<ObsOption> output_options(int n, int j, const Data& d, const CandidateSpace& space) {
  std::vector<Expr> candidates = plain_outputs(n, d.action_width);
  if (space.action_gates) {
    std::vector<Expr> first = {Expr::constant(false), Expr::constant(true)};
    for (int a = 0; a < d.action_width; ++a) first.push_back(Expr::action(a));
    auto plain = plain_outputs(n, d.action_width);
    for (int g = 0; g < d.action_width; ++g)
      for (const auto& x : first)
        for (const auto& y : plain) {
          if (x == y) continue;
          candidates.push_back(Expr::ite(Expr::action(g), x, y));
        }
  }
  const std::uint32_t S = 1u << n;
  const std::uint32_t A = 1u << d.action_width;
  std::vector<ObsOption> out;
  for (const auto& e : candidates) {
    // value[a] = set of states where the output is true under action a.
    std::vector<std::uint32_t> truth(A, 0);
    for (std::uint32_t a = 0; a < A; ++a)
      for (std::uint32_t z = 0; z < S; ++z) {
        dbn::EvalInputs in{dbn::StateVec(0, n), dbn::StateVec(z, n), dbn::ActionVec(a, d.action_width)};
        if (e.prob_true(in) > 0.5) truth[a] |= 1u << z;
      }
    ObsOption opt{e, e.description_length(), state_read(e), truth, {}};
    opt.masks.resize(d.T);
    bool alive = true;
    for (std::size_t t = 0; t < d.T && alive; ++t) {
      const std::uint32_t tr = truth[d.actions[t]];
      const std::uint32_t m = ((d.obs[t] >> j) & 1u) ? tr : (~tr & full_mask(static_cast<int>(S)));
      opt.masks[t] = m;
      alive = m != 0;
    }
    if (alive) out.push_back(std::move(opt));
  }
  return out;
}

// ---------------------------------------------------------------------------
// State structures.

enum class Noise { None, Flip, Hold };

struct Structure {
  int n = 0;
  std::vector<int> rules;  // index into the deterministic table list, per variable
  int noisy = -1;
  Noise form = Noise::None;
  int core = -1;  // index into the core table list
};

struct Transitions {
  std::vector<std::uint32_t> succ1, succ2;  // succ2 == succ1 when deterministic
  std::vector<std::uint32_t> image;         // image of every state set (S <= 8), else empty
};

Transitions build_transitions(const Structure& s, const std::vector<TableExpr>& det, const std::vector<TableExpr>& cores) {
  const std::uint32_t S = 1u << s.n;
  Transitions tr;
  tr.succ1.assign(S, 0);
  tr.succ2.assign(S, 0);
  for (std::uint32_t z = 0; z < S; ++z) {
    std::uint32_t a = 0, b = 0;
    for (int i = 0; i < s.n; ++i) {
      bool v1, v2;
      if (i == s.noisy) {
        v1 = table_bit(cores[static_cast<std::size_t>(s.core)].table, z);
        v2 = s.form == Noise::Flip ? !v1 : ((z >> i) & 1u) != 0;
      } else {
        v1 = v2 = table_bit(det[static_cast<std::size_t>(s.rules[static_cast<std::size_t>(i)])].table, z);
      }
      if (v1) a |= 1u << i;
      if (v2) b |= 1u << i;
    }
    tr.succ1[z] = a;
    tr.succ2[z] = b;
  }
  if (S <= 8) {
    const std::uint32_t M = 1u << S;
    tr.image.assign(M, 0);
    for (std::uint32_t m = 1; m < M; ++m) {
      const std::uint32_t low = static_cast<std::uint32_t>(__builtin_ctz(m));
      tr.image[m] = tr.image[m & (m - 1)] | (1u << tr.succ1[low]) | (1u << tr.succ2[low]);
    }
  }
  return tr;
}

std::uint32_t image_of(const Transitions& tr, std::uint32_t m) {
  if (!tr.image.empty()) return tr.image[m];
  std::uint32_t out = 0;
  while (m) {
    const std::uint32_t z = static_cast<std::uint32_t>(__builtin_ctz(m));
    out |= (1u << tr.succ1[z]) | (1u << tr.succ2[z]);
    m &= m - 1;
  }
  return out;
}

// Feasibility ignoring probabilities: is some state path consistent with every mask?
template <class MaskAt>
bool feasible(const Transitions& tr, std::size_t T, std::uint32_t all, MaskAt mask_at) {
  if (T == 0) return true;
  std::uint32_t reach = all & mask_at(0);
  for (std::size_t t = 1; t < T && reach; ++t) reach = image_of(tr, reach) & mask_at(t);
  return reach != 0;
}

// Variables that can influence the given set through the transition rules.
std::uint32_t cone(const Structure& s, const std::vector<TableExpr>& det, const std::vector<TableExpr>& cores,
                   std::uint32_t seeds) {
  std::vector<std::uint32_t> deps(static_cast<std::size_t>(s.n));
  for (int i = 0; i < s.n; ++i) {
    if (i == s.noisy)
      deps[static_cast<std::size_t>(i)] =
          support(cores[static_cast<std::size_t>(s.core)].table, s.n) | (s.form == Noise::Hold ? (1u << i) : 0u);
    else
      deps[static_cast<std::size_t>(i)] = support(det[static_cast<std::size_t>(s.rules[static_cast<std::size_t>(i)])].table, s.n);
  }
  std::uint32_t in = seeds;
  for (bool grew = true; grew;) {
    grew = false;
    for (int i = 0; i < s.n; ++i)
      if ((in >> i) & 1u) {
        std::uint32_t next = in | deps[static_cast<std::size_t>(i)];
        if (next != in) {
          in = next;
          grew = true;
        }
      }
  }
  return in;
}

// ---------------------------------------------------------------------------
// Scoring.

// Every relabeling of n state variables by permutation and negation, as a map
// on state indices. With a uniform initial distribution a relabeled model
// assigns every history the same probability.
std::vector<std::vector<std::uint32_t>> relabelings(int n) {
  const std::uint32_t S = 1u << n;
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::vector<std::vector<std::uint32_t>> out;
  do {
    for (std::uint32_t neg = 0; neg < S; ++neg) {
      std::vector<std::uint32_t> map(S);
      for (std::uint32_t z = 0; z < S; ++z) {
        std::uint32_t y = 0;
        for (int i = 0; i < n; ++i)
          if ((((z ^ neg) >> i) & 1u)) y |= 1u << perm[static_cast<std::size_t>(i)];
        map[z] = y;
      }
      out.push_back(std::move(map));
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

std::uint32_t relabel_set(const std::vector<std::uint32_t>& map, std::uint32_t set) {
  std::uint32_t out = 0;
  while (set) {
    out |= 1u << map[static_cast<std::size_t>(__builtin_ctz(set))];
    set &= set - 1;
  }
  return out;
}

struct Candidate {
  Structure structure;
  std::vector<int> outputs;  // option index per output variable
  std::optional<Fraction> fraction;
  double log_likelihood = 0.0;
  int dl = 0;
  std::size_t ordinal = 0;
  double score() const { return log_likelihood - dl * kLn2; }
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.score() > b.score() + kTieTolerance) return true;
  if (b.score() > a.score() + kTieTolerance) return false;
  if (a.dl != b.dl) return a.dl < b.dl;
  return a.ordinal < b.ordinal;
}

class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {}
  // Score a new candidate must beat to matter.
  double threshold() const {
    return items_.size() < k_ ? -std::numeric_limits<double>::infinity() : items_.back().score() - 2 * kTieTolerance;
  }
  void offer(Candidate c) {
    if (items_.size() == k_ && !better(c, items_.back())) return;
    auto pos = std::upper_bound(items_.begin(), items_.end(), c, [](const Candidate& x, const Candidate& y) { return better(x, y); });
    items_.insert(pos, std::move(c));
    if (items_.size() > k_) items_.pop_back();
  }
  const std::vector<Candidate>& items() const { return items_; }

 private:
  std::size_t k_;
  std::vector<Candidate> items_;
};

// Exact forward filter over the structure with deterministic outputs. `probs`
// holds the Choice probabilities to evaluate simultaneously (one entry 1.0 for
// deterministic structures). Returns ln P(h) per probability; stops early once
// no probability can beat `bound` given the per-probability prior offsets.
template <class MaskAt>
std::vector<double> log_likelihoods(const Transitions& tr, int n, std::size_t T, MaskAt mask_at,
                                    const std::vector<double>& probs, const std::vector<double>& prior,
                                    double bound) {
  const std::size_t S = std::size_t{1} << n;
  const std::size_t G0 = probs.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> ll(G0, 0.0);
  if (T == 0) return ll;

  // Rows are states, columns the probabilities still in play (`live` maps a
  // column to its index in `probs`), so each row update is a dense loop.
  std::vector<std::size_t> live(G0);
  for (std::size_t g = 0; g < G0; ++g) live[g] = g;
  std::size_t G = G0;
  std::vector<double> p(probs), q(G0), b(S * G0), nb(S * G0), mass(G0), acc(G0, 1.0), part(G0, 0.0);
  for (std::size_t g = 0; g < G0; ++g) q[g] = 1.0 - p[g];

  std::uint32_t prev = mask_at(0);
  const double m0 = __builtin_popcount(prev);
  if (m0 == 0) return std::vector<double>(G0, -kInf);
  for (std::size_t z = 0; z < S; ++z) std::fill_n(&b[z * G0], G0, ((prev >> z) & 1u) ? 1.0 / m0 : 0.0);
  std::fill(part.begin(), part.end(), std::log(m0 / static_cast<double>(S)));

  auto fold = [&] {
    for (std::size_t g = 0; g < G; ++g) {
      part[g] += std::log(acc[g]);
      acc[g] = 1.0;
    }
  };
  for (std::size_t t = 1; t < T; ++t) {
    const std::uint32_t m = mask_at(t);
    std::fill_n(mass.data(), G, 0.0);
    for (std::size_t y = 0; y < S; ++y) {
      double* row = &nb[y * G0];
      if (!((m >> y) & 1u)) continue;
      std::fill_n(row, G, 0.0);
      for (std::uint32_t zs = prev; zs; zs &= zs - 1) {
        const std::size_t z = static_cast<std::size_t>(__builtin_ctz(zs));
        const double* src = &b[z * G0];
        const bool one = tr.succ1[z] == y, two = tr.succ2[z] == y;
        if (one && two) {
          for (std::size_t g = 0; g < G; ++g) row[g] += src[g];
        } else if (one) {
          for (std::size_t g = 0; g < G; ++g) row[g] += src[g] * p[g];
        } else if (two) {
          for (std::size_t g = 0; g < G; ++g) row[g] += src[g] * q[g];
        }
      }
      for (std::size_t g = 0; g < G; ++g) mass[g] += row[g];
    }
    const std::uint32_t next = m & full_mask(static_cast<int>(S));
    // Masses are multiplied into `acc` and folded into logs only when small.
    bool any_zero = false, small = false;
    for (std::size_t g = 0; g < G; ++g) {
      any_zero |= mass[g] <= 0.0;
      acc[g] *= mass[g];
      small |= acc[g] < 1e-250;
      mass[g] = mass[g] > 0.0 ? 1.0 / mass[g] : 0.0;
    }
    for (std::uint32_t ys = next; ys; ys &= ys - 1) {
      double* row = &nb[static_cast<std::size_t>(__builtin_ctz(ys)) * G0];
      for (std::size_t g = 0; g < G; ++g) row[g] *= mass[g];
    }
    std::swap(b, nb);
    prev = next;
    if (small) fold();
    const bool check = (t & 63u) == 0 || any_zero;
    if (!check) continue;
    fold();
    // ln P(h) only decreases as steps are added, so a column below the bound
    // (or at probability zero) can be dropped.
    std::size_t w = 0;
    for (std::size_t g = 0; g < G; ++g) {
      const std::size_t id = live[g];
      const bool drop = !std::isfinite(part[g]) || part[g] + prior[id] < bound;
      if (drop) {
        ll[id] = -kInf;
        continue;
      }
      if (w != g) {
        live[w] = id;
        p[w] = p[g];
        q[w] = q[g];
        part[w] = part[g];
        acc[w] = acc[g];
        for (std::size_t z = 0; z < S; ++z) b[z * G0 + w] = b[z * G0 + g];
      }
      ++w;
    }
    G = w;
    if (G == 0) return std::vector<double>(G0, -kInf);
  }
  fold();
  for (std::size_t g = 0; g < G; ++g) ll[live[g]] = part[g];
  return ll;
}

Data make_data(const History& h, const Alphabet& alphabet) {
  Data d;
  d.T = h.size();
  d.action_width = static_cast<int>(alphabet.actions.size());
  d.obs_width = static_cast<int>(alphabet.observations.size());
  for (const auto& st : h) {
    require(st.action.width() == d.action_width, "history action width does not match the alphabet");
    require(st.obs.width() == d.obs_width, "history observation width does not match the alphabet");
    d.actions.push_back(st.action.bits());
    d.obs.push_back(st.obs.bits());
  }
  return d;
}

struct SearchContext {
  const Data& data;
  const CandidateSpace& space;
  std::vector<Fraction> grid;
  std::vector<double> grid_probs;
  std::vector<int> grid_digits;
};

dbn::DbnProgram build_program(const Candidate& c, const std::vector<TableExpr>& det, const std::vector<TableExpr>& cores,
                              const std::vector<ObsOption>* options, const Alphabet& alphabet) {
  const Structure& s = c.structure;
  std::vector<dbn::StateRule> states;
  for (int i = 0; i < s.n; ++i) {
    Expr e;
    if (i == s.noisy) {
      const Expr& core = cores[static_cast<std::size_t>(s.core)].expr;
      Expr alt = s.form == Noise::Flip ? Expr::negate(core) : Expr::prev_state(i);
      e = c.fraction ? Expr::choice(*c.fraction, core, alt) : core;
    } else {
      e = det[static_cast<std::size_t>(s.rules[static_cast<std::size_t>(i)])].expr;
    }
    states.push_back({"z" + std::to_string(i), e});
  }
  std::vector<dbn::ObsRule> outs;
  for (std::size_t j = 0; j < alphabet.observations.size(); ++j)
    outs.push_back({alphabet.observations[j], options[j][static_cast<std::size_t>(c.outputs[j])].expr});
  return dbn::DbnProgram(alphabet.actions, std::move(states), std::move(outs));
}

}  // namespace

std::vector<ScoredModel> map_lambda_top(const History& h, const CandidateSpace& space, const Alphabet& alphabet,
                                        std::size_t k, SearchStats* stats) {
  require(k >= 1, "top-k needs k >= 1");
  require(space.max_state_vars >= 0 && space.max_state_vars <= 4, "max_state_vars must be in [0, 4]");
  require(space.max_expr_nodes >= 1 && space.noise_core_nodes >= 1, "expression size bounds must be positive");
  const Data data = make_data(h, alphabet);
  const int m = data.obs_width;
  SearchStats local;
  SearchStats& st = stats ? *stats : local;
  st = {};

  std::vector<Fraction> grid = fraction_grid(space.fraction_denominator);
  std::vector<double> grid_probs;
  std::vector<int> grid_digits;
  for (const auto& f : grid) {
    grid_probs.push_back(f.value());
    grid_digits.push_back(f.digit_count());
  }

  TopK top(k);
  std::size_t ordinal = 0;
  std::vector<Candidate> pending;  // feasible, not yet scored; dl excludes fraction digits

  // Per state width, the tables and options the best candidates point into.
  struct Level {
    std::vector<TableExpr> det, cores;
    std::vector<std::vector<ObsOption>> options;
    std::vector<std::vector<std::uint32_t>> relabel;
  };
  std::vector<Level> levels(static_cast<std::size_t>(space.max_state_vars) + 1);

  for (int n = 0; n <= space.max_state_vars; ++n) {
    Level& L = levels[static_cast<std::size_t>(n)];
    L.det = minimal_tables(n, space.max_expr_nodes, false);
    L.cores = minimal_tables(n, space.noise_core_nodes, false);
    for (int j = 0; j < m; ++j) L.options.push_back(output_options(n, j, data, space));
    L.relabel = relabelings(n);
    const std::uint32_t S = 1u << n;
    const std::uint32_t all = full_mask(static_cast<int>(S));
    const std::uint32_t every_var = n >= 32 ? ~0u : ((1u << n) - 1u);

    // At most min(n, m) variables can be read by outputs, and by symmetry they
    // are z0, z1, ... in order of first use.
    const std::uint32_t readable = (1u << std::min(n, m)) - 1u;

    std::map<std::vector<int>, bool> single_cache;
    auto visit = [&](const Structure& s) {
      ++st.structures;
      if (cone(s, L.det, L.cores, readable) != every_var) return;
      const Transitions tr = build_transitions(s, L.det, L.cores);

      // Options that are feasible on their own. An option reading z_k only
      // constrains the variables in the cone of z_k, so the answer is shared by
      // every structure with the same rules on that cone.
      std::vector<std::vector<int>> alive(static_cast<std::size_t>(m));
      for (int j = 0; j < m; ++j) {
        const auto& opts = L.options[static_cast<std::size_t>(j)];
        for (std::size_t o = 0; o < opts.size(); ++o) {
          const int k = opts[o].reads_state;
          if (k > j) continue;
          bool ok = true;
          if (k >= 0) {
            const std::uint32_t c = cone(s, L.det, L.cores, 1u << k);
            std::vector<int> key = {j, static_cast<int>(o)};
            for (int i = 0; i < n; ++i) {
              if (!((c >> i) & 1u)) {
                key.push_back(-1);
              } else if (i == s.noisy) {
                key.push_back(-2 - static_cast<int>(s.form));
                key.push_back(s.core);
              } else {
                key.push_back(s.rules[static_cast<std::size_t>(i)]);
              }
            }
            auto it = single_cache.find(key);
            if (it != single_cache.end()) {
              ok = it->second;
            } else {
              const auto& masks = opts[o].masks;
              ok = feasible(tr, data.T, all, [&](std::size_t t) { return masks[t]; });
              single_cache.emplace(std::move(key), ok);
            }
          }
          if (ok) alive[static_cast<std::size_t>(j)].push_back(static_cast<int>(o));
        }
        if (alive[static_cast<std::size_t>(j)].empty()) return;
      }

      int base_dl = 0;
      for (int i = 0; i < s.n; ++i)
        if (i != s.noisy) base_dl += L.det[static_cast<std::size_t>(s.rules[static_cast<std::size_t>(i)])].dl;
      if (s.noisy >= 0) {
        const int core_dl = L.cores[static_cast<std::size_t>(s.core)].dl;
        base_dl += 1 + core_dl + 1 + (s.form == Noise::Flip ? core_dl : 0);  // plus fraction digits
      }

      std::vector<std::size_t> pick(static_cast<std::size_t>(m), 0);
      while (true) {
        // Symmetry: output j may read z_k only if k <= 1 + largest variable read so far.
        bool canonical = true;
        int max_read = -1;
        std::uint32_t read_set = 0;
        int dl = base_dl;
        for (int j = 0; j < m && canonical; ++j) {
          const auto& opt = L.options[static_cast<std::size_t>(j)][static_cast<std::size_t>(alive[static_cast<std::size_t>(j)][pick[static_cast<std::size_t>(j)]])];
          if (opt.reads_state > max_read + 1) canonical = false;
          if (opt.reads_state >= 0) {
            max_read = std::max(max_read, opt.reads_state);
            read_set |= 1u << opt.reads_state;
          }
          dl += opt.dl;
        }
        const std::size_t this_ordinal = ordinal++;
        if (canonical && cone(s, L.det, L.cores, read_set) == every_var) {
          std::vector<const std::uint32_t*> picked;
          for (int j = 0; j < m; ++j)
            picked.push_back(L.options[static_cast<std::size_t>(j)][static_cast<std::size_t>(alive[static_cast<std::size_t>(j)][pick[static_cast<std::size_t>(j)]])].masks.data());
          auto mask_at = [&](std::size_t t) {
            std::uint32_t mk = all;
            for (const auto* p : picked) mk &= p[t];
            return mk;
          };
          if (feasible(tr, data.T, all, mask_at)) {
            ++st.feasible;
            Candidate c;
            c.structure = s;
            for (int j = 0; j < m; ++j) c.outputs.push_back(alive[static_cast<std::size_t>(j)][pick[static_cast<std::size_t>(j)]]);
            c.ordinal = this_ordinal;
            c.dl = dl;
            pending.push_back(std::move(c));
          }
        }
        // Next output combination (odometer, last output fastest).
        int j = m - 1;
        while (j >= 0) {
          auto& p = pick[static_cast<std::size_t>(j)];
          if (++p < alive[static_cast<std::size_t>(j)].size()) break;
          p = 0;
          --j;
        }
        if (j < 0) break;
      }
    };

    const int D = static_cast<int>(L.det.size());
    const int C = static_cast<int>(L.cores.size());
    // Deterministic structures, then one noisy rule at each position.
    std::vector<Noise> forms;
    forms.push_back(Noise::None);
    if (space.flip_noise) forms.push_back(Noise::Flip);
    if (space.hold_noise) forms.push_back(Noise::Hold);
    for (Noise form : forms) {
      const int positions = form == Noise::None ? 1 : n;
      for (int pos = 0; pos < positions; ++pos) {
        const int core_count = form == Noise::None ? 1 : C;
        for (int core = 0; core < core_count; ++core) {
          Structure s;
          s.n = n;
          s.rules.assign(static_cast<std::size_t>(n), 0);
          s.form = form;
          s.noisy = form == Noise::None ? -1 : pos;
          s.core = form == Noise::None ? -1 : core;
          if (form == Noise::Hold) {
            // A hold whose core ignores nothing new is still valid; a hold of the
            // variable's own value is the deterministic copy and is skipped.
            const std::uint32_t self = [&] {
              std::uint32_t t = 0;
              for (std::uint32_t z = 0; z < S; ++z)
                if ((z >> pos) & 1u) t |= 1u << z;
              return t;
            }();
            if (L.cores[static_cast<std::size_t>(core)].table == self) continue;
          }
          if (form == Noise::Flip) {
            // (choice p e (not e)) with constant e is a coin; keep it. Nothing to skip.
          }
          // Odometer over the deterministic rules of the other variables.
          std::vector<int> free_vars;
          for (int i = 0; i < n; ++i)
            if (i != s.noisy) free_vars.push_back(i);
          std::vector<int> idx(free_vars.size(), 0);
          while (true) {
            for (std::size_t f = 0; f < free_vars.size(); ++f) s.rules[static_cast<std::size_t>(free_vars[f])] = idx[f];
            visit(s);
            int f = static_cast<int>(free_vars.size()) - 1;
            while (f >= 0) {
              if (++idx[static_cast<std::size_t>(f)] < D) break;
              idx[static_cast<std::size_t>(f)] = 0;
              --f;
            }
            if (f < 0) break;
          }
        }
      }
    }
  }

  // Scoring. Each candidate's score on a few short fractions is a lower bound on
  // its best grid score; the k-th best such bound lets the full scan abandon
  // most candidates after a few hundred steps.
  std::vector<std::size_t> probe_idx;
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (grid_digits[g] <= 3 || g == 0 || g + 1 == grid.size()) probe_idx.push_back(g);
  std::vector<double> probe_probs;
  for (auto g : probe_idx) probe_probs.push_back(grid_probs[g]);

  // Models equal up to relabeling share one likelihood computation.
  auto canonical_key = [&](const Candidate& c) {
    const Level& L = levels[static_cast<std::size_t>(c.structure.n)];
    const Transitions tr = build_transitions(c.structure, L.det, L.cores);
    const std::uint32_t S = 1u << c.structure.n;
    std::vector<std::uint32_t> best, key;
    for (const auto& map : L.relabel) {
      key.assign(1, static_cast<std::uint32_t>(c.structure.noisy >= 0));
      key.resize(1 + 2 * S);
      for (std::uint32_t z = 0; z < S; ++z) {
        key[1 + map[z]] = map[tr.succ1[z]];
        key[1 + S + map[z]] = map[tr.succ2[z]];
      }
      for (int j = 0; j < m; ++j)
        for (std::uint32_t t : L.options[static_cast<std::size_t>(j)][static_cast<std::size_t>(c.outputs[static_cast<std::size_t>(j)])].truth)
          key.push_back(relabel_set(map, t));
      if (best.empty() || key < best) best = key;
    }
    return best;
  };
  struct CacheEntry {
    double kill_level;  // fractions were dropped once ll < kill_level + digits * ln 2
    std::vector<double> ll;
  };
  using Cache = std::map<std::vector<std::uint32_t>, CacheEntry>;

  struct Prepared {
    int n;
    Transitions tr;
    std::vector<const std::uint32_t*> masks;
  };
  auto prepare = [&](const Candidate& c) {
    const Level& L = levels[static_cast<std::size_t>(c.structure.n)];
    Prepared p{c.structure.n, build_transitions(c.structure, L.det, L.cores), {}};
    for (int j = 0; j < m; ++j)
      p.masks.push_back(L.options[static_cast<std::size_t>(j)][static_cast<std::size_t>(c.outputs[static_cast<std::size_t>(j)])].masks.data());
    return p;
  };
  auto mask_fn = [&](const Prepared& p) {
    return [&p, all = full_mask(static_cast<int>(1u << p.n))](std::size_t t) {
      std::uint32_t mk = all;
      for (const auto* q : p.masks) mk &= q[t];
      return mk;
    };
  };
  auto priors_for = [&](const Candidate& c, const std::vector<std::size_t>* subset) {
    std::vector<double> prior;
    if (c.structure.noisy < 0) return std::vector<double>{-c.dl * kLn2};
    if (subset) {
      for (auto g : *subset) prior.push_back(-(c.dl + grid_digits[g]) * kLn2);
    } else {
      for (int dg : grid_digits) prior.push_back(-(c.dl + dg) * kLn2);
    }
    return prior;
  };

  std::vector<std::vector<std::uint32_t>> keys;
  for (const auto& c : pending) keys.push_back(canonical_key(c));

  // ln P(h[0..steps)) per probability, reusing an earlier computation for an
  // equivalent model when its dropped fractions would be dropped here too.
  auto cached = [&](Cache& cache, std::size_t i, const std::vector<double>& probs, const std::vector<double>& prior,
                    std::size_t steps, double bound, bool& computed) {
    const Candidate& c = pending[i];
    const double kill = bound + c.dl * kLn2;
    auto it = cache.find(keys[i]);
    computed = false;
    if (it != cache.end() && it->second.kill_level <= kill) return it->second.ll;
    computed = true;
    const Prepared p = prepare(c);
    auto ll = log_likelihoods(p.tr, p.n, steps, mask_fn(p), probs, prior, bound);
    cache[keys[i]] = {kill, ll};
    return ll;
  };
  Cache prefix_cache, probe_cache, full_cache;
  auto probe_score = [&](Cache& cache, std::size_t i, std::size_t steps, double bound) {
    const Candidate& c = pending[i];
    const bool noisy = c.structure.noisy >= 0;
    const auto prior = priors_for(c, &probe_idx);
    bool computed;
    const auto ll = cached(cache, i, noisy ? probe_probs : std::vector<double>{1.0}, prior, steps, bound, computed);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < ll.size(); ++g) best = std::max(best, ll[g] + prior[g]);
    return best;
  };

  // Visit candidates in order of a short-prefix score so that strong lower
  // bounds appear early. The order affects speed only; ties between final
  // scores are still resolved by DL and enumeration ordinal.
  std::vector<std::size_t> order(pending.size());
  {
    std::vector<double> prefix(pending.size());
    const std::size_t steps = std::min<std::size_t>(data.T, 256);
    for (std::size_t i = 0; i < pending.size(); ++i)
      prefix[i] = probe_score(prefix_cache, i, steps, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return prefix[x] > prefix[y]; });
  }

  // Lower bounds on the full score: the k-th best one is a floor no final
  // top-k member can fall below.
  std::priority_queue<double, std::vector<double>, std::greater<>> best_lower;
  auto floor_bound = [&] {
    return best_lower.size() < k ? -std::numeric_limits<double>::infinity() : best_lower.top() - 2 * kTieTolerance;
  };
  for (std::size_t i : order) {
    const double lb = probe_score(probe_cache, i, data.T, floor_bound());
    if (!std::isfinite(lb)) continue;
    best_lower.push(lb);
    if (best_lower.size() > k) best_lower.pop();
  }

  for (std::size_t i : order) {
    Candidate c = pending[i];
    const double bound = std::max(floor_bound(), top.threshold());
    const auto prior = priors_for(c, nullptr);
    if (*std::max_element(prior.begin(), prior.end()) < bound) continue;
    bool computed;
    if (c.structure.noisy < 0) {
      c.log_likelihood = cached(full_cache, i, {1.0}, prior, data.T, bound, computed)[0];
      if (computed) ++st.scored;
      if (std::isfinite(c.log_likelihood)) top.offer(c);
      continue;
    }
    const auto ll = cached(full_cache, i, grid_probs, prior, data.T, bound, computed);
    if (computed) ++st.scored;
    std::size_t best = grid.size();
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (!std::isfinite(ll[g])) continue;
      // Strictly better score, or a tie won by the shorter fraction.
      if (best == grid.size() || ll[g] + prior[g] > ll[best] + prior[best] + kTieTolerance ||
          (ll[g] + prior[g] >= ll[best] + prior[best] - kTieTolerance && grid_digits[g] < grid_digits[best]))
        best = g;
    }
    if (best < grid.size()) {
      c.fraction = grid[best];
      c.dl += grid_digits[best];
      c.log_likelihood = ll[best];
      top.offer(c);
    }
  }

  if (top.items().empty()) throw NoExplanation("no candidate in the space explains the history");
  std::vector<ScoredModel> out;
  for (const auto& c : top.items()) {
    const Level& L = levels[static_cast<std::size_t>(c.structure.n)];
    ScoredModel sm{build_program(c, L.det, L.cores, L.options.data(), alphabet), c.log_likelihood, -c.dl * kLn2, c.dl,
                   c.ordinal};
    out.push_back(std::move(sm));
  }
  return out;
}

ScoredModel map_lambda(const History& h, const CandidateSpace& space, const Alphabet& alphabet, SearchStats* stats) {
  return map_lambda_top(h, space, alphabet, 1, stats).front();
}

std::optional<Fraction> estimate_alpha(const History& h, const dbn::DbnProgram& structure, std::uint32_t denominator) {
  if (structure.choice_count() != 1) throw ContractViolation("estimate_alpha needs exactly one Choice node");
  const auto det = structure.without_choice();
  std::optional<Fraction> best;
  double best_score = dbn::log_likelihood(det, h) - det.description_length() * kLn2;
  int best_dl = det.description_length();
  for (const auto& f : fraction_grid(denominator)) {
    const auto p = structure.with_choice_probability(f);
    const double score = dbn::log_likelihood(p, h) - p.description_length() * kLn2;
    const int dl = p.description_length();
    if (score > best_score + kTieTolerance || (score >= best_score - kTieTolerance && dl < best_dl)) {
      best = f;
      best_score = score;
      best_dl = dl;
    }
  }
  return best;
}

bool equivalent_up_to_renaming(const dbn::DbnProgram& a, const dbn::DbnProgram& b, double tol) {
  if (a.actions() != b.actions() || a.state_width() != b.state_width() || a.obs_width() != b.obs_width()) return false;
  for (int j = 0; j < a.obs_width(); ++j)
    if (a.observations()[static_cast<std::size_t>(j)].name != b.observations()[static_cast<std::size_t>(j)].name) return false;
  if (a.description_length() != b.description_length()) return false;
  const dbn::CompiledModel ma(a), mb(b);
  const int n = a.state_width();
  const std::uint32_t S = 1u << n, A = 1u << a.action_width(), O = 1u << a.obs_width();
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  auto close = [tol](double x, double y) { return std::abs(x - y) <= tol; };
  do {
    // map[z]: the state of b that plays the role of a's state z.
    std::vector<std::uint32_t> map(S);
    for (std::uint32_t z = 0; z < S; ++z) {
      std::uint32_t y = 0;
      for (int i = 0; i < n; ++i)
        if ((z >> i) & 1u) y |= 1u << perm[static_cast<std::size_t>(i)];
      map[z] = y;
    }
    bool same = true;
    for (std::uint32_t z = 0; z < S && same; ++z) same = close(ma.init()[z], mb.init()[map[z]]);
    for (std::uint32_t x = 0; x < A && same; ++x)
      for (std::uint32_t z = 0; z < S && same; ++z) {
        for (std::uint32_t y = 0; y < S && same; ++y) same = close(ma.transition(z, x, y), mb.transition(map[z], x, map[y]));
        for (std::uint32_t o = 0; o < O && same; ++o) same = close(ma.output(z, x, o), mb.output(map[z], x, o));
      }
    if (same) return true;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return false;
}

}  // namespace mbu::learn
