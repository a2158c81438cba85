#include "mbu/cli/experiment.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <mutex>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "mbu/dbn/inference.hpp"
#include "mbu/dbn/rng.hpp"
#include "mbu/dbn/text_format.hpp"
#include "mbu/envs/environments.hpp"
#include "mbu/envs/instance.hpp"
#include "mbu/errors.hpp"
#include "mbu/learn/training.hpp"

namespace mbu::cli {

using dbn::ActionVec;
using dbn::History;
using Json = nlohmann::ordered_json;

std::string to_string(AgentKind k) {
  switch (k) {
    case AgentKind::ModelBased:
      return "model-based";
    case AgentKind::RL:
      return "rl";
    case AgentKind::Goal:
      return "goal";
    case AgentKind::Prediction:
      return "prediction";
    case AgentKind::Knowledge:
      return "knowledge";
  }
  return "";
}

AgentKind parse_agent(const std::string& text) {
  for (auto k : {AgentKind::ModelBased, AgentKind::RL, AgentKind::Goal, AgentKind::Prediction, AgentKind::Knowledge})
    if (to_string(k) == text) return k;
  throw ConfigError("unknown agent kind '" + text + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

int parse_int(const std::string& key, const std::string& v) {
  const auto x = parse_count(key, v);
  if (x > 1000000) throw ConfigError(key + ": value too large");
  return static_cast<int>(x);
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  if (used != v.size() || !std::isfinite(x)) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

std::string opt(const std::optional<double>& x) { return x ? fmt(*x) : ""; }

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "experiment") experiment = v;
  else if (key == "env") env = v;
  else if (key == "env_param" || key == "alpha") env_param = v;
  else if (key == "agent") agent = parse_agent(v);
  else if (key == "spec") spec = v;
  else if (key == "goal_var") goal_var = v;
  else if (key == "horizon") horizon = parse_int(key, v);
  else if (key == "discount") discount = v;
  else if (key == "min_training") min_training = parse_count(key, v);
  else if (key == "max_training") max_training = parse_count(key, v);
  else if (key == "check_every") check_every = parse_count(key, v);
  else if (key == "maturity_window") maturity_window = parse_count(key, v);
  else if (key == "maturity_threshold") maturity_threshold = parse_real(key, v);
  else if (key == "noise_core_nodes") noise_core_nodes = parse_int(key, v);
  else if (key == "mature_steps") mature_steps = parse_count(key, v);
  else if (key == "mature_policy") mature_policy = v;
  else if (key == "on_contradiction") on_contradiction = v;
  else if (key == "delusion_var") delusion_var = v;
  else if (key == "seed") seed = parse_count(key, v);
  else if (key == "learn_steps") learn_steps = parse_count(key, v);
  else if (key == "top_k") top_k = parse_count(key, v);
  else if (key == "trials") trials = parse_count(key, v);
  else if (key == "gamma") gamma = parse_real(key, v);
  else if (key == "depth") depth = parse_int(key, v);
  else if (key == "max_policies") max_policies = parse_count(key, v);
  else if (key == "rewrite") rewrite = v;
  else if (key == "sweep_seeds") sweep_seeds = parse_count(key, v);
  else if (key == "sweep_alphas") sweep_alphas = v;
  else if (key == "expect_realized") expect_realized = parse_real(key, v);
  else if (key == "expect_tolerance") expect_tolerance = parse_real(key, v);
  else if (key == "expect_delusion_min") expect_delusion_min = parse_real(key, v);
  else if (key == "expect_delusion_max") expect_delusion_max = parse_real(key, v);
  else if (key == "out") out = v;
  else if (key == "format") format = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

void ExperimentConfig::load(std::istream& in) {
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key=value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  load(in);
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  std::map<std::string, std::string> m = {
      {"experiment", experiment},
      {"env", env},
      {"env_param", env_param},
      {"agent", to_string(agent)},
      {"spec", spec},
      {"goal_var", goal_var},
      {"horizon", std::to_string(horizon)},
      {"discount", discount},
      {"min_training", std::to_string(min_training)},
      {"max_training", std::to_string(max_training)},
      {"check_every", std::to_string(check_every)},
      {"maturity_window", std::to_string(maturity_window)},
      {"maturity_threshold", fmt(maturity_threshold)},
      {"noise_core_nodes", std::to_string(noise_core_nodes)},
      {"mature_steps", std::to_string(mature_steps)},
      {"mature_policy", mature_policy},
      {"on_contradiction", on_contradiction},
      {"delusion_var", delusion_var},
      {"seed", std::to_string(seed)},
      {"learn_steps", std::to_string(learn_steps)},
      {"top_k", std::to_string(top_k)},
      {"trials", std::to_string(trials)},
      {"gamma", fmt(gamma)},
      {"depth", std::to_string(depth)},
      {"max_policies", std::to_string(max_policies)},
      {"rewrite", rewrite},
      {"sweep_seeds", std::to_string(sweep_seeds)},
      {"sweep_alphas", sweep_alphas},
      {"expect_tolerance", fmt(expect_tolerance)},
      {"format", format},
  };
  if (expect_realized) m["expect_realized"] = fmt(*expect_realized);
  if (expect_delusion_min) m["expect_delusion_min"] = fmt(*expect_delusion_min);
  if (expect_delusion_max) m["expect_delusion_max"] = fmt(*expect_delusion_max);
  if (!out.empty()) m["out"] = out;
  return m;
}

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig c = *this;
  const bool period4 = c.env == "period4";
  if (c.spec.empty()) {
    switch (c.agent) {
      case AgentKind::ModelBased:
        c.spec = period4 ? "observed-equals-prev:a" : "unobserved-equals:a";
        break;
      case AgentKind::RL:
        c.spec = "reward:reward";
        break;
      case AgentKind::Goal:
        c.spec = "goal:" + c.goal_var;
        break;
      case AgentKind::Prediction:
        c.spec = "prediction";
        break;
      case AgentKind::Knowledge:
        c.spec = "knowledge";
        break;
    }
  }
  if (c.discount.empty()) {
    switch (c.agent) {
      case AgentKind::RL:
        c.discount = "window:5";
        break;
      case AgentKind::Goal:
        c.discount = "dyadic";
        break;
      case AgentKind::Knowledge:
        c.discount = "delta:" + std::to_string(c.horizon);
        break;
      default:
        c.discount = "geometric:0.9";
        break;
    }
  }
  if (c.maturity_threshold == 0.0) c.maturity_threshold = period4 ? 0.85 : 0.95;
  if (c.noise_core_nodes == 0) c.noise_core_nodes = period4 ? 5 : 3;

  if (c.horizon < 1) throw ConfigError("horizon must be at least 1");
  if (c.check_every < 1) throw ConfigError("check_every must be at least 1");
  if (c.maturity_window < 1 || c.min_training < c.maturity_window)
    throw ConfigError("min_training must be at least maturity_window (and the window non-empty)");
  if (c.max_training < c.min_training) throw ConfigError("max_training must be at least min_training");
  if (c.maturity_threshold <= 0.0 || c.maturity_threshold > 1.0) throw ConfigError("maturity_threshold must lie in (0, 1]");
  if (c.mature_policy != "plan" && c.mature_policy != "delude") throw ConfigError("mature_policy must be plan or delude");
  if (c.on_contradiction != "fail" && c.on_contradiction != "relearn")
    throw ConfigError("on_contradiction must be fail or relearn");
  if (c.format != "json" && c.format != "csv") throw ConfigError("format must be json or csv");
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (c.depth < 1) throw ConfigError("depth must be at least 1");
  if (c.trials < 1) throw ConfigError("trials must be at least 1");
  if (c.top_k < 1) throw ConfigError("top_k must be at least 1");
  // Parse once so that bad values surface as configuration errors.
  try {
    (void)c.environment();
    (void)c.discount_fn();
    (void)c.utility_spec();
    (void)utility::UtilitySpec::parse(c.rewrite);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  return c;
}

dbn::DbnProgram ExperimentConfig::environment() const { return envs::make_environment(env, env_param); }

utility::UtilitySpec ExperimentConfig::utility_spec() const {
  if (spec.rfind("goal:", 0) == 0) {
    const std::string var = spec.substr(5);
    const int idx = environment().obs_index(var);
    if (idx < 0) throw ConfigError("goal refers to unknown observation '" + var + "'");
    return utility::UtilitySpec::goal_reached(var, [idx](const History& h) { return !h.empty() && h.back().obs[idx]; });
  }
  return utility::UtilitySpec::parse(spec);
}

plan::Discount ExperimentConfig::discount_fn() const { return plan::Discount::parse(discount); }

learn::CandidateSpace ExperimentConfig::candidate_space() const {
  learn::CandidateSpace s;
  s.noise_core_nodes = noise_core_nodes;
  return s;
}

namespace {

learn::Alphabet alphabet_of(const dbn::DbnProgram& p) {
  learn::Alphabet a{p.actions(), {}};
  for (const auto& o : p.observations()) a.observations.push_back(o.name);
  return a;
}

// The search is deterministic and runs that differ only after maturity (a
// baseline next to its agent) train on the same history, so results are reused
// within the process.
learn::ScoredModel learn_model(const History& h, const learn::CandidateSpace& space, const learn::Alphabet& alphabet) {
  using Key = std::tuple<std::vector<std::uint64_t>, std::vector<long long>, std::vector<std::string>, std::vector<std::string>>;
  static std::mutex lock;
  static std::map<Key, learn::ScoredModel> seen;
  Key key;
  auto& [steps, knobs, actions, observations] = key;
  for (const auto& st : h) steps.push_back(std::uint64_t{st.action.bits()} << 32 | st.obs.bits());
  knobs = {space.max_state_vars, space.max_expr_nodes, space.noise_core_nodes, space.flip_noise,
           space.hold_noise, space.fraction_denominator, space.action_gates};
  actions = alphabet.actions;
  observations = alphabet.observations;
  {
    std::lock_guard<std::mutex> g(lock);
    if (auto it = seen.find(key); it != seen.end()) return it->second;
  }
  auto m = learn::map_lambda(h, space, alphabet);
  std::lock_guard<std::mutex> g(lock);
  if (seen.size() >= 32) seen.clear();
  seen.emplace(std::move(key), m);
  return m;
}

bool binding_failure(const std::exception_ptr& e, std::string& what) {
  try {
    std::rethrow_exception(e);
  } catch (const NoMatch& x) {
    what = x.what();
    return true;
  } catch (const Ambiguous& x) {
    what = x.what();
    return true;
  } catch (...) {
    return false;
  }
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& raw, const std::function<void(const StepRecord&)>& on_step) {
  const ExperimentConfig cfg = raw.resolved();
  const dbn::DbnProgram truth = cfg.environment();
  const utility::UtilitySpec spec = cfg.utility_spec();
  const int width = truth.action_width();
  const int delusion = truth.action_index(cfg.delusion_var);
  const bool relearn = cfg.on_contradiction == "relearn";

  std::optional<utility::Binding> true_binding;
  // Ground truth is reported only where the specification also fits the true
  // program; the agent itself never sees it.
  if (spec.model_based() || spec.kind == utility::SpecKind::RewardChannel) {
    try {
      true_binding = utility::bind(spec, truth);
    } catch (const NoMatch&) {
    } catch (const Ambiguous&) {
    }
  }

  envs::EnvInstance env(truth, cfg.seed);
  RunResult res;
  auto emit = [&](StepRecord r) {
    r.t = env.history().size();
    r.obs = env.history().back().obs;
    r.deluded = delusion >= 0 && r.action[delusion];
    if (true_binding)
      r.realized = utility::realized(*true_binding, env.history(), env.history().size() - 1, env.states().back());
    if (on_step) on_step(r);
    res.steps.push_back(std::move(r));
  };

  // Training.
  const auto space = cfg.candidate_space();
  const auto alphabet = alphabet_of(truth);
  std::optional<learn::ScoredModel> model;
  utility::Binding binding;
  while (!model) {
    const ActionVec a = learn::training_policy(env.history().size(), cfg.seed, width);
    env.act(a);
    StepRecord r;
    r.action = a;
    emit(r);
    const std::size_t t = env.history().size();
    if (t < cfg.min_training || ((t - cfg.min_training) % cfg.check_every != 0 && t < cfg.max_training)) continue;
    auto m = learn_model(env.history(), space, alphabet);
    const bool ready = learn::maturity_check(env.history(), m.program, cfg.maturity_window, cfg.maturity_threshold);
    if (!ready && t < cfg.max_training) continue;
    try {
      binding = utility::bind(spec, m.program);
    } catch (...) {
      std::string what;
      if (!binding_failure(std::current_exception(), what)) throw;
      if (relearn && t < cfg.max_training) continue;
      throw AgentFailure("specification '" + spec.to_string() + "' does not fit the learned model at step " +
                         std::to_string(t) + ": " + what);
    }
    res.summary.forced_maturity = !ready;
    model = std::move(m);
  }

  // Mature loop.
  std::shared_ptr<const dbn::CompiledModel> compiled;
  std::shared_ptr<const utility::Utility> u;
  std::optional<plan::Planner> planner;
  std::optional<dbn::Filter> filter;
  auto install = [&] {
    compiled = std::make_shared<const dbn::CompiledModel>(model->program);
    u = utility::make_utility(binding, model->program);
    planner.emplace(compiled, u, plan::PlanConfig{cfg.horizon, cfg.discount_fn(), true});
    filter.emplace(compiled);
    for (const auto& s : env.history()) filter->observe(s.action, s.obs);
  };
  install();
  int model_id = 0;

  for (std::size_t i = 0; i < cfg.mature_steps; ++i) {
    StepRecord r;
    r.mature = true;
    if (cfg.mature_policy == "plan") {
      const auto d = planner->act(env.history(), *filter);
      r.action = d.action;
      r.value = d.value;
      r.runner_up = d.runner_up;
    } else {
      auto coins = dbn::Rng::substream(cfg.seed, "baseline", env.history().size());
      ActionVec a(static_cast<std::uint32_t>(coins.below(std::uint64_t{1} << width)), width);
      r.action = delusion >= 0 ? a.with(delusion, true) : a;
    }
    const auto o = env.act(r.action);
    dbn::Filter parent = *filter;
    try {
      filter->observe(r.action, o);
    } catch (const ModelContradiction&) {
      if (!relearn) throw;
      model = learn_model(env.history(), space, alphabet);
      try {
        binding = utility::bind(spec, model->program);
      } catch (...) {
        std::string what;
        if (!binding_failure(std::current_exception(), what)) throw;
        throw AgentFailure("specification '" + spec.to_string() + "' does not fit the relearned model at step " +
                           std::to_string(env.history().size()) + ": " + what);
      }
      install();
      parent = dbn::Filter(compiled);
      for (std::size_t k = 0; k + 1 < env.history().size(); ++k)
        parent.observe(env.history()[k].action, env.history()[k].obs);
      ++model_id;
      ++res.summary.relearns;
    }
    r.model = model_id;
    r.u = u->evaluate(utility::NodeContext{env.history(), *filter, &parent});
    emit(r);
  }

  const std::size_t relearns = res.summary.relearns;
  const bool forced = res.summary.forced_maturity;
  res.summary = summarize(res.steps);
  res.summary.relearns = relearns;
  res.summary.forced_maturity = forced;
  res.summary.model_text = dbn::to_text(model->program);
  res.summary.model_dl = model->description_length;
  res.summary.recovered = learn::equivalent_up_to_renaming(model->program, truth);
  return res;
}

RunSummary summarize(const std::vector<StepRecord>& steps) {
  RunSummary s;
  s.steps = steps.size();
  double u_sum = 0.0, real_sum = 0.0;
  std::size_t u_n = 0, real_n = 0, deluded = 0;
  for (const auto& r : steps) {
    if (!r.mature) {
      ++s.training_steps;
      continue;
    }
    ++s.mature_steps;
    if (r.deluded) ++deluded;
    if (r.u) {
      u_sum += *r.u;
      ++u_n;
    }
    if (r.realized) {
      real_sum += *r.realized;
      ++real_n;
    }
  }
  if (u_n) s.mean_u = u_sum / static_cast<double>(u_n);
  if (real_n) s.mean_realized = real_sum / static_cast<double>(real_n);
  s.delusion_fraction = s.mature_steps ? static_cast<double>(deluded) / static_cast<double>(s.mature_steps) : 0.0;
  return s;
}

std::string step_json(const StepRecord& r) {
  Json j;
  j["t"] = r.t;
  j["phase"] = r.mature ? "mature" : "training";
  j["action"] = r.action.to_string();
  j["obs"] = r.obs.to_string();
  j["deluded"] = r.deluded;
  j["u"] = r.u ? Json(*r.u) : Json(nullptr);
  j["realized"] = r.realized ? Json(*r.realized) : Json(nullptr);
  j["model"] = r.model;
  if (r.value) j["value"] = *r.value;
  if (r.runner_up) j["runner_up"] = *r.runner_up;
  return j.dump();
}

std::string summary_csv_header() {
  return "experiment,env,env_param,agent,spec,seed,training_steps,mature_steps,forced_maturity,relearns,mean_u,"
         "mean_realized,delusion_fraction,model_dl,recovered";
}

std::string summary_csv_row(const ExperimentConfig& c, const RunSummary& s) {
  std::ostringstream o;
  o << c.experiment << ',' << c.env << ',' << c.env_param << ',' << to_string(c.agent) << ',' << c.spec << ',' << c.seed
    << ',' << s.training_steps << ',' << s.mature_steps << ',' << (s.forced_maturity ? 1 : 0) << ',' << s.relearns << ','
    << opt(s.mean_u) << ',' << opt(s.mean_realized) << ',' << fmt(s.delusion_fraction) << ',' << s.model_dl << ','
    << (s.recovered ? 1 : 0);
  return o.str();
}

std::string summary_json(const ExperimentConfig& c, const RunSummary& s) {
  Json j;
  j["experiment"] = c.experiment;
  j["env"] = c.env;
  j["env_param"] = c.env_param;
  j["agent"] = to_string(c.agent);
  j["spec"] = c.spec;
  j["seed"] = c.seed;
  j["steps"] = s.steps;
  j["training_steps"] = s.training_steps;
  j["mature_steps"] = s.mature_steps;
  j["forced_maturity"] = s.forced_maturity;
  j["relearns"] = s.relearns;
  j["mean_u"] = s.mean_u ? Json(*s.mean_u) : Json(nullptr);
  j["mean_realized"] = s.mean_realized ? Json(*s.mean_realized) : Json(nullptr);
  j["delusion_fraction"] = s.delusion_fraction;
  j["model_dl"] = s.model_dl;
  j["recovered"] = s.recovered;
  j["model"] = s.model_text;
  return j.dump();
}

}  // namespace mbu::cli
