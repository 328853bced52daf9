#include "activesl/session.hpp"

#include "activesl/errors.hpp"
#include "json_util.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace activesl {
namespace {

using detail::json;
using detail::require;

constexpr int kSessionSchemaVersion = 1;

}  // namespace

double Session::spent() const {
  double s = 0.0;
  for (const auto& o : observations) s += candidates.at(o.candidate).cost;
  return s;
}

Instance Session::as_instance() const {
  Instance inst{law, cost_model, {}, {}, {}};
  for (const auto& c : candidates) inst.pool.push_back({c.x, c.cost, 0.0});
  for (const auto& o : observations) inst.pool.at(o.candidate).outcome = o.y;
  for (const auto& t : target) inst.target.push_back({t, 0.0});
  inst.meta.name = "session";
  return inst;
}

Session parse_session(std::string_view text, std::string_view source) {
  const std::string src(source);
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ValidationError(src + ": parse error: " + e.what());
  }
  if (!j.is_object()) throw ValidationError(src + ": expected a JSON object");
  if (auto it = j.find("schema_version"); it != j.end() && it->get<int>() != kSessionSchemaVersion)
    throw ValidationError(src + ": unsupported schema_version");
  Session s;
  s.law = detail::law_from_json(require(j, "law", src), src + ": law");
  const std::size_t d = s.law.input_dim();
  s.cost_model = detail::cost_model_from_json(require(j, "cost_model", src), src + ": cost_model", d);

  const json& cands = require(j, "candidates", src);
  if (!cands.is_array() || cands.empty()) throw ValidationError(src + ": candidates must be a non-empty array");
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const std::string w = src + ": candidates[" + std::to_string(i) + "]";
    SessionCandidate c;
    c.x = detail::point_from_json(require(cands[i], "x", w), d, w + ".x");
    if (auto it = cands[i].find("cost"); it != cands[i].end()) {
      c.cost = detail::get_finite(*it, w + ".cost");
    } else {
      try {
        c.cost = cost(s.cost_model, c.x);
      } catch (const Error& e) {
        throw ValidationError(w + ": " + e.what());
      }
    }
    if (!(c.cost > 0.0)) throw ValidationError(w + ".cost: must be positive");
    s.candidates.push_back(std::move(c));
  }
  const json& target = require(j, "target", src);
  if (!target.is_array() || target.empty()) throw ValidationError(src + ": target must be a non-empty array");
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::string w = src + ": target[" + std::to_string(i) + "]";
    const json& x = target[i].is_object() ? require(target[i], "x", w) : target[i];
    s.target.push_back(detail::point_from_json(x, d, w + ".x"));
  }
  std::vector<bool> seen(s.candidates.size(), false);
  if (auto it = j.find("observations"); it != j.end()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string w = src + ": observations[" + std::to_string(i) + "]";
      SessionObservation o;
      o.candidate = detail::get_index(require((*it)[i], "candidate", w), w + ".candidate");
      o.y = detail::get_finite(require((*it)[i], "y", w), w + ".y");
      if (o.candidate >= s.candidates.size()) throw ValidationError(w + ": candidate index out of range");
      if (seen[o.candidate]) throw ValidationError(w + ": candidate " + std::to_string(o.candidate) + " observed twice");
      seen[o.candidate] = true;
      s.observations.push_back(o);
    }
  }
  if (auto it = j.find("budget"); it != j.end() && !it->is_null()) {
    s.budget = detail::get_finite(*it, src + ": budget");
    if (*s.budget < 0.0) throw ValidationError(src + ": budget must be non-negative");
  }
  if (auto it = j.find("policy"); it != j.end()) {
    try {
      s.policy.kind = policy_from_string(detail::get_string(*it, src + ": policy"));
    } catch (const ValidationError& e) {
      throw ValidationError(src + ": " + e.what());
    }
    if (!is_model_based(s.policy.kind))
      throw ValidationError(src + ": advisory sessions need a model-based policy (ours, dopt, vopt)");
  }
  if (auto it = j.find("alpha"); it != j.end()) s.policy.alpha = detail::get_finite(*it, src + ": alpha");
  if (auto it = j.find("n_starts"); it != j.end()) s.config.n_starts = it->get<int>();
  if (auto it = j.find("grid_nodes"); it != j.end()) s.config.grid.nodes = it->get<int>();
  if (auto it = j.find("weight_scheme"); it != j.end()) {
    const std::string w = detail::get_string(*it, src + ": weight_scheme");
    if (w == "bic") s.config.posterior.weights.scheme = WeightScheme::Bic;
    else if (w == "laplace") s.config.posterior.weights.scheme = WeightScheme::Laplace;
    else throw ValidationError(src + ": unknown weight scheme '" + w + "'");
  }
  if (auto it = j.find("seed"); it != j.end()) s.seed = it->get<std::uint64_t>();
  if (s.config.n_starts < 1) throw ValidationError(src + ": n_starts must be at least 1");
  return s;
}

std::string format_session(const Session& s) {
  json cands = json::array();
  for (const auto& c : s.candidates) cands.push_back({{"x", c.x.coords}, {"cost", c.cost}});
  json target = json::array();
  for (const auto& t : s.target) target.push_back({{"x", t.coords}});
  json obs = json::array();
  for (const auto& o : s.observations) obs.push_back({{"candidate", o.candidate}, {"y", o.y}});
  json j = {{"schema_version", kSessionSchemaVersion},
            {"law", detail::law_to_json(s.law)},
            {"cost_model", detail::cost_model_to_json(s.cost_model)},
            {"policy", std::string(to_string(s.policy.kind))},
            {"alpha", s.policy.alpha},
            {"n_starts", s.config.n_starts},
            {"grid_nodes", s.config.grid.nodes},
            {"weight_scheme", s.config.posterior.weights.scheme == WeightScheme::Bic ? "bic" : "laplace"},
            {"seed", s.seed},
            {"budget", s.budget ? json(*s.budget) : json(nullptr)},
            {"candidates", cands},
            {"target", target},
            {"observations", obs}};
  return j.dump(1) + "\n";
}

Session load_session(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open session file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_session(ss.str(), path.string());
}

void save_session(const Session& session, const std::filesystem::path& path) {
  // Write-then-rename so a crash never leaves a truncated session.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError(tmp.string() + ": cannot write session file");
    out << format_session(session);
    if (!out) throw ValidationError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

Advice advise(const Session& s) {
  const Instance inst = s.as_instance();
  std::vector<double> costs;
  for (const auto& c : s.candidates) costs.push_back(c.cost);
  PoolState state(std::move(costs), s.budget.value_or(std::numeric_limits<double>::infinity()));
  // Observations count toward spend even if they overran the budget.
  for (const auto& o : s.observations) {
    state.selected[o.candidate] = true;
    state.spent += state.costs[o.candidate];
  }

  Advice a;
  const std::size_t p = s.law.num_params();
  if (s.observations.size() < warm_start_size(p)) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < state.costs.size(); ++i)
      if (state.feasible(i) && (!best || state.costs[i] < state.costs[*best])) best = i;
    if (best) {
      a.kind = Advice::Kind::WarmStart;
      a.index = best;
    }
    return a;
  }

  std::vector<std::size_t> observed;
  for (const auto& o : s.observations) observed.push_back(o.candidate);
  const Dataset data = dataset_from(inst, observed);
  const StepContext ctx{inst, state, data, s.config, fit_seed_for(s.seed, data.size())};
  std::mt19937_64 unused_rng(0);
  const StepResult res = step(s.policy, ctx, unused_rng);
  if (!res.index) return a;
  a.kind = Advice::Kind::Scored;
  a.index = res.index;
  a.stale_fit = res.stale_fit;
  a.num_basins = res.posterior ? res.posterior->num_basins() : (res.fits ? 1 : 0);
  for (const auto& sc : res.scores)
    if (sc.pool_index == *res.index) a.score = sc;
  return a;
}

void record(Session& s, std::size_t index, double y) {
  if (index >= s.candidates.size())
    throw ValidationError("candidate " + std::to_string(index) + " out of range (" +
                          std::to_string(s.candidates.size()) + " candidates)");
  if (!std::isfinite(y)) throw ValidationError("outcome must be finite");
  for (const auto& o : s.observations)
    if (o.candidate == index) throw ValidationError("candidate " + std::to_string(index) + " already recorded");
  s.observations.push_back({index, y});
}

SessionLock::SessionLock(const std::filesystem::path& session_path)
    : lock_path_(session_path.string() + ".lock") {
  std::FILE* f = std::fopen(lock_path_.c_str(), "wx");
  if (!f) throw Error("session is locked by another process (" + lock_path_.string() + ")");
  std::fclose(f);
}

SessionLock::~SessionLock() {
  std::error_code ec;
  std::filesystem::remove(lock_path_, ec);
}

}  // namespace activesl
