#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "mbu/cli/experiment.hpp"
#include "mbu/dbn/simulate.hpp"
#include "mbu/dbn/text_format.hpp"
#include "mbu/errors.hpp"
#include "mbu/learn/loop_candidates.hpp"
#include "mbu/learn/training.hpp"
#include "mbu/selfmod/selfmod.hpp"

namespace mbu::cli {

using Json = nlohmann::ordered_json;

namespace {

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream f(std::filesystem::path(dir) / name);
  if (!f) throw ConfigError("cannot write " + (std::filesystem::path(dir) / name).string());
  return f;
}

void write_config(const ExperimentConfig& c) {
  if (c.out.empty()) return;
  auto f = open_out(c.out, "config.txt");
  for (const auto& [k, v] : c.to_map())
    if (k != "out") f << k << '=' << v << '\n';
}

Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

// Returns 1 with a note on `out` for each expectation that fails.
int check_expectations(const ExperimentConfig& c, const RunSummary& s, std::ostream& out) {
  int rc = 0;
  if (c.expect_realized) {
    if (!s.mean_realized || std::abs(*s.mean_realized - *c.expect_realized) > c.expect_tolerance) {
      out << "# expectation failed: mean_realized " << (s.mean_realized ? std::to_string(*s.mean_realized) : "n/a")
          << " not within " << c.expect_tolerance << " of " << *c.expect_realized << '\n';
      rc = 1;
    }
  }
  if (c.expect_delusion_min && s.delusion_fraction < *c.expect_delusion_min) {
    out << "# expectation failed: delusion_fraction " << s.delusion_fraction << " < " << *c.expect_delusion_min << '\n';
    rc = 1;
  }
  if (c.expect_delusion_max && s.delusion_fraction > *c.expect_delusion_max) {
    out << "# expectation failed: delusion_fraction " << s.delusion_fraction << " > " << *c.expect_delusion_max << '\n';
    rc = 1;
  }
  return rc;
}

}  // namespace

int cmd_appendix_a(std::ostream& out) {
  const auto all = learn::enumerate_appendix_a();
  int matches = 0;
  for (const auto& c : all)
    if (learn::behavior_match(c, learn::default_behavior())) {
      out << c.to_string() << '\n';
      ++matches;
    }
  out << "candidates: " << all.size() << '\n';
  out << "matches: " << matches << '\n';
  return matches == 2 ? 0 : 1;
}

int cmd_learn(const ExperimentConfig& raw, std::ostream& out) {
  const auto c = raw.resolved();
  const auto env = c.environment();
  dbn::Policy probe = [&](const dbn::History& h) { return learn::training_policy(h.size(), c.seed, env.action_width()); };
  const auto h = dbn::simulate(env, probe, c.learn_steps, c.seed);
  learn::Alphabet alphabet{env.actions(), {}};
  for (const auto& o : env.observations()) alphabet.observations.push_back(o.name);
  std::vector<learn::ScoredModel> top;
  try {
    top = learn::map_lambda_top(h, c.candidate_space(), alphabet, c.top_k);
  } catch (const NoExplanation& e) {
    out << "# no candidate explains the history: " << e.what() << '\n';
    return 1;
  }
  std::vector<Json> rows;
  for (std::size_t i = 0; i < top.size(); ++i) {
    const auto& m = top[i];
    const bool same = learn::equivalent_up_to_renaming(m.program, env);
    if (c.format == "json") {
      Json j;
      j["rank"] = i + 1;
      j["score"] = m.score();
      j["log_likelihood"] = m.log_likelihood;
      j["description_length"] = m.description_length;
      j["matches_environment"] = same;
      j["model"] = dbn::to_text(m.program);
      out << j.dump() << '\n';
      rows.push_back(j);
    } else {
      out << "# rank " << i + 1 << " score " << m.score() << " log_likelihood " << m.log_likelihood
          << " description_length " << m.description_length << " matches_environment " << (same ? 1 : 0) << '\n'
          << dbn::to_text(m.program);
    }
  }
  if (!c.out.empty()) {
    write_config(c);
    open_out(c.out, "model.txt") << dbn::to_text(top.front().program);
    auto f = open_out(c.out, "models.jsonl");
    for (std::size_t i = 0; i < top.size(); ++i)
      f << Json{{"rank", i + 1}, {"score", top[i].score()}, {"model", dbn::to_text(top[i].program)}}.dump() << '\n';
  }
  return 0;
}

int cmd_run(const ExperimentConfig& raw, std::ostream& out) {
  const auto c = raw.resolved();
  std::ofstream steps;
  if (!c.out.empty()) {
    write_config(c);
    steps = open_out(c.out, "steps.jsonl");
  }
  RunResult res;
  try {
    res = run_experiment(c, [&](const StepRecord& r) {
      if (steps.is_open()) steps << step_json(r) << '\n';
    });
  } catch (const AgentFailure& e) {
    out << "# agent failed: " << e.what() << '\n';
    return 1;
  } catch (const ModelContradiction& e) {
    out << "# agent failed: " << e.what() << '\n';
    return 1;
  }
  if (c.format == "json") {
    out << summary_json(c, res.summary) << '\n';
  } else {
    out << summary_csv_header() << '\n' << summary_csv_row(c, res.summary) << '\n';
  }
  if (!c.out.empty()) {
    open_out(c.out, "summary.csv") << summary_csv_header() << '\n' << summary_csv_row(c, res.summary) << '\n';
    open_out(c.out, "summary.json") << summary_json(c, res.summary) << '\n';
    open_out(c.out, "model.txt") << res.summary.model_text;
  }
  return check_expectations(c, res.summary, out);
}

int cmd_selfmod(const ExperimentConfig& raw, std::ostream& out) {
  const auto c = raw.resolved();
  selfmod::HarnessConfig h;
  h.selfmod = selfmod::SelfModConfig{c.gamma, c.depth};
  h.trials = c.trials;
  h.max_policies = c.max_policies;
  h.seed = c.seed;
  const auto report = selfmod::prop4_harness(c.environment(), c.utility_spec(), utility::UtilitySpec::parse(c.rewrite), h);

  std::ostringstream table;
  if (c.format == "csv") table << "trial,seed,policies,history_length,successor,action,best_keep,best_switch,gap\n";
  for (std::size_t i = 0; i < report.records.size(); ++i) {
    const auto& r = report.records[i];
    std::string names;
    for (const auto& n : r.space) names += (names.empty() ? "" : " ") + n;
    if (c.format == "csv") {
      table << i << ',' << r.seed << ',' << names << ',' << r.history_length << ',' << r.successor << ',' << r.action << ','
            << r.best_keep << ',' << r.best_switch << ',' << r.gap() << '\n';
    } else {
      table << Json{{"trial", i},
                    {"seed", r.seed},
                    {"policies", r.space},
                    {"history_length", r.history_length},
                    {"successor", r.successor},
                    {"action", r.action},
                    {"best_keep", finite_or_null(r.best_keep)},
                    {"best_switch", finite_or_null(r.best_switch)},
                    {"gap", finite_or_null(r.gap())}}
                   .dump()
            << '\n';
    }
  }
  out << table.str();
  out << "trials: " << report.trials << '\n';
  out << "self-modifications: " << report.self_modifications << '\n';
  if (!c.out.empty()) {
    write_config(c);
    open_out(c.out, c.format == "csv" ? "selfmod.csv" : "selfmod.jsonl") << table.str();
  }
  return report.self_modifications == 0 ? 0 : 1;
}

int cmd_sweep(const ExperimentConfig& raw, std::ostream& out) {
  const auto base = raw.resolved();
  std::vector<std::string> alphas;
  {
    std::stringstream ss(base.sweep_alphas);
    std::string a;
    while (std::getline(ss, a, ',')) alphas.push_back(a);
    if (alphas.empty()) alphas.push_back(base.env_param);
  }
  std::ostringstream rows;
  rows << summary_csv_header() << '\n';
  int rc = 0;
  for (const auto& alpha : alphas)
    for (std::size_t k = 0; k < base.sweep_seeds; ++k) {
      ExperimentConfig c = base;
      c.env_param = alpha;
      c.seed = base.seed + k;
      c.out.clear();
      try {
        const auto res = run_experiment(c);
        rows << summary_csv_row(c, res.summary) << '\n';
        std::ostringstream notes;
        if (check_expectations(c, res.summary, notes)) {
          rc = 1;
          rows << notes.str();
        }
      } catch (const AgentFailure& e) {
        rows << "# seed " << c.seed << " alpha " << alpha << ": agent failed: " << e.what() << '\n';
        rc = 1;
      } catch (const ModelContradiction& e) {
        rows << "# seed " << c.seed << " alpha " << alpha << ": agent failed: " << e.what() << '\n';
        rc = 1;
      }
    }
  out << rows.str();
  if (!base.out.empty()) {
    write_config(base);
    open_out(base.out, "sweep.csv") << rows.str();
  }
  return rc;
}

}  // namespace mbu::cli
