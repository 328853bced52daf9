#include "activesl/bench_io.hpp"

#include "activesl/errors.hpp"
#include "activesl/rng.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace activesl {
namespace {

using detail::json;
using detail::require;

constexpr std::uint64_t kNoiseSalt = 0x6e6f697365ULL;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError(path.string() + ": cannot write file");
  out << text;
  if (!out) throw ValidationError(path.string() + ": write failed");
}

json parse_json(std::string_view text, const std::string& where) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ValidationError(where + ": parse error: " + e.what());
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string_view scheme_name(WeightScheme s) { return s == WeightScheme::Bic ? "bic" : "laplace"; }

WeightScheme scheme_from(const std::string& s, const std::string& where) {
  if (s == "bic") return WeightScheme::Bic;
  if (s == "laplace") return WeightScheme::Laplace;
  throw ValidationError(where + ": unknown weight scheme '" + s + "'");
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

DesignAxis axis_from_json(const json& j, const std::string& where) {
  DesignAxis a;
  a.min = detail::get_finite(require(j, "min", where), where + ".min");
  a.max = detail::get_finite(require(j, "max", where), where + ".max");
  a.count = detail::get_index(require(j, "count", where), where + ".count");
  if (auto it = j.find("log"); it != j.end()) a.log = it->get<bool>();
  if (a.count == 0) throw ValidationError(where + ".count: must be at least 1");
  if (a.max < a.min) throw ValidationError(where + ": max below min");
  if (a.log && !(a.min > 0.0)) throw ValidationError(where + ": log axis needs a positive minimum");
  if (a.count == 1 && a.min != a.max) throw ValidationError(where + ": a single-value axis needs min == max");
  return a;
}

std::vector<DesignBlock> design_from_json(const json& j, const std::string& where, std::size_t d) {
  if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty array of design blocks");
  std::vector<DesignBlock> out;
  for (std::size_t b = 0; b < j.size(); ++b) {
    const std::string w = where + "[" + std::to_string(b) + "]";
    const std::string type = detail::get_string(require(j[b], "type", w), w + ".type");
    DesignBlock blk;
    if (type == "grid") {
      blk.kind = DesignBlock::Kind::Grid;
      const json& axes = require(j[b], "axes", w);
      if (!axes.is_array() || axes.size() != d)
        throw ValidationError(w + ".axes: expected " + std::to_string(d) + " axes");
      for (std::size_t i = 0; i < axes.size(); ++i)
        blk.axes.push_back(axis_from_json(axes[i], w + ".axes[" + std::to_string(i) + "]"));
    } else if (type == "tied") {
      blk.kind = DesignBlock::Kind::Tied;
      blk.axes.push_back(axis_from_json(require(j[b], "axis", w), w + ".axis"));
      blk.ratios = detail::get_vector(require(j[b], "ratios", w), w + ".ratios");
      if (blk.ratios.size() != d)
        throw ValidationError(w + ".ratios: expected " + std::to_string(d) + " entries");
    } else {
      throw ValidationError(w + ".type: unknown design block type '" + type + "'");
    }
    out.push_back(std::move(blk));
  }
  return out;
}

json config_to_json(const EpisodeConfig& c) {
  return {{"checkpoints", c.checkpoints},
          {"budget_fraction", c.budget_fraction},
          {"n_starts", c.n_starts},
          {"grid_nodes", c.grid.nodes},
          {"grid_width", c.grid.width},
          {"weight_scheme", scheme_name(c.posterior.weights.scheme)},
          {"temperature", c.posterior.weights.temperature},
          {"prior_precision", c.posterior.prior_precision},
          {"max_k", c.posterior.max_k},
          {"dedup_floor", c.posterior.dedup_floor},
          {"silhouette_floor", c.posterior.silhouette_floor},
          {"noise_floor", c.posterior.noise_floor},
          {"grad_tol", c.fit.grad_tol},
          {"max_iterations", c.fit.max_iterations},
          {"log_top_scores", c.log_top_scores}};
}

EpisodeConfig config_from_json(const json& j, const std::string& w) {
  EpisodeConfig c;
  c.checkpoints = detail::get_vector(require(j, "checkpoints", w), w + ".checkpoints");
  c.budget_fraction = require(j, "budget_fraction", w).get<double>();
  c.n_starts = require(j, "n_starts", w).get<int>();
  c.grid.nodes = require(j, "grid_nodes", w).get<int>();
  c.grid.width = require(j, "grid_width", w).get<double>();
  c.posterior.weights.scheme = scheme_from(require(j, "weight_scheme", w).get<std::string>(), w);
  c.posterior.weights.temperature = require(j, "temperature", w).get<double>();
  c.posterior.prior_precision = require(j, "prior_precision", w).get<double>();
  c.posterior.max_k = require(j, "max_k", w).get<int>();
  c.posterior.dedup_floor = require(j, "dedup_floor", w).get<double>();
  c.posterior.silhouette_floor = require(j, "silhouette_floor", w).get<double>();
  c.posterior.noise_floor = require(j, "noise_floor", w).get<double>();
  c.fit.grad_tol = require(j, "grad_tol", w).get<double>();
  c.fit.max_iterations = require(j, "max_iterations", w).get<int>();
  c.log_top_scores = require(j, "log_top_scores", w).get<int>();
  return c;
}

json score_to_json(const CandidateScore& s) {
  return {{"pool_index", s.pool_index}, {"dv_intra", s.dv_intra}, {"dv_inter", s.dv_inter}, {"cost", s.cost},
          {"score", s.score}};
}

std::string fraction_label(double f) {
  std::ostringstream os;
  os << std::setprecision(6) << f * 100.0 << "%";
  return os.str();
}

}  // namespace

void validate_instance(const Instance& inst, std::string_view source) {
  const std::string src(source);
  const std::size_t d = inst.law.input_dim();
  try {
    inst.cost_model.validate(d);
  } catch (const ValidationError& e) {
    throw ValidationError(src + ": cost_model: " + e.what());
  }
  if (inst.pool.empty()) throw ValidationError(src + ": pool is empty");
  if (inst.target.empty()) throw ValidationError(src + ": target is empty");
  auto check_x = [&](const ConfigPoint& x, const std::string& w) {
    if (x.dim() != d)
      throw ValidationError(w + ": expected " + std::to_string(d) + " coordinates, got " + std::to_string(x.dim()));
    for (double c : x.coords)
      if (!std::isfinite(c)) throw ValidationError(w + ": coordinate is not finite");
  };
  for (std::size_t i = 0; i < inst.pool.size(); ++i) {
    const std::string w = src + ": pool[" + std::to_string(i) + "]";
    check_x(inst.pool[i].x, w);
    if (!std::isfinite(inst.pool[i].outcome)) throw ValidationError(w + ": outcome is not finite");
    if (!(inst.pool[i].cost > 0.0) || !std::isfinite(inst.pool[i].cost))
      throw ValidationError(w + ": cost must be positive and finite");
  }
  for (std::size_t i = 0; i < inst.target.size(); ++i) {
    const std::string w = src + ": target[" + std::to_string(i) + "]";
    check_x(inst.target[i].x, w);
    if (!std::isfinite(inst.target[i].outcome)) throw ValidationError(w + ": outcome is not finite");
  }
  if (inst.meta.true_theta && inst.meta.true_theta->size() != inst.law.num_params() && !inst.meta.generator_family)
    throw ValidationError(src + ": metadata.true_theta has the wrong length");
  if (inst.meta.synthetic) {
    std::vector<double> pool_costs;
    for (const auto& e : inst.pool) pool_costs.push_back(e.cost);
    double min_target = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inst.target.size(); ++i) {
      try {
        min_target = std::min(min_target, cost(inst.cost_model, inst.target[i].x));
      } catch (const Error& e) {
        throw ValidationError(src + ": target[" + std::to_string(i) + "]: " + e.what());
      }
    }
    const double med = median(pool_costs);
    if (!(min_target > med)) {
      std::ostringstream os;
      os << src << ": synthetic instance has min target cost " << min_target << " not above median pool cost " << med;
      throw ValidationError(os.str());
    }
  }
}

Instance parse_instance(std::string_view text, std::string_view source) {
  const std::string src(source);
  const json j = parse_json(text, src);
  if (!j.is_object()) throw ValidationError(src + ": expected a JSON object");
  const int version = require(j, "schema_version", src).get<int>();
  if (version != kInstanceSchemaVersion)
    throw ValidationError(src + ": unsupported schema_version " + std::to_string(version));
  LawSpec law = detail::law_from_json(require(j, "law", src), src + ": law");
  const std::size_t d = law.input_dim();
  CostModel cm = detail::cost_model_from_json(require(j, "cost_model", src), src + ": cost_model", d);
  Instance inst{std::move(law), std::move(cm), {}, {}, {}};

  const json& pool = require(j, "pool", src);
  if (!pool.is_array()) throw ValidationError(src + ": pool must be an array");
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const std::string w = src + ": pool[" + std::to_string(i) + "]";
    PoolEntry e;
    e.x = detail::point_from_json(require(pool[i], "x", w), d, w + ".x");
    e.outcome = detail::get_finite(require(pool[i], "y", w), w + ".y");
    if (auto it = pool[i].find("cost"); it != pool[i].end()) {
      e.cost = detail::get_finite(*it, w + ".cost");
      if (!(e.cost > 0.0)) throw ValidationError(w + ".cost: must be positive");
    } else {
      try {
        e.cost = cost(inst.cost_model, e.x);
      } catch (const Error& err) {
        throw ValidationError(w + ": " + err.what());
      }
    }
    inst.pool.push_back(std::move(e));
  }
  const json& target = require(j, "target", src);
  if (!target.is_array()) throw ValidationError(src + ": target must be an array");
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::string w = src + ": target[" + std::to_string(i) + "]";
    TargetEntry t;
    t.x = detail::point_from_json(require(target[i], "x", w), d, w + ".x");
    t.outcome = detail::get_finite(require(target[i], "y", w), w + ".y");
    inst.target.push_back(std::move(t));
  }
  if (auto it = j.find("metadata"); it != j.end()) {
    const std::string w = src + ": metadata";
    const json& m = *it;
    if (auto f = m.find("name"); f != m.end()) inst.meta.name = detail::get_string(*f, w + ".name");
    if (auto f = m.find("synthetic"); f != m.end()) inst.meta.synthetic = f->get<bool>();
    if (auto f = m.find("noise_sigma"); f != m.end() && !f->is_null())
      inst.meta.noise_sigma = detail::get_finite(*f, w + ".noise_sigma");
    if (auto f = m.find("true_theta"); f != m.end() && !f->is_null())
      inst.meta.true_theta = detail::get_vector(*f, w + ".true_theta");
    if (auto f = m.find("generator_family"); f != m.end() && !f->is_null())
      inst.meta.generator_family = detail::get_string(*f, w + ".generator_family");
    if (auto f = m.find("tags"); f != m.end())
      for (const auto& t : *f) inst.meta.tags.push_back(detail::get_string(t, w + ".tags"));
  }
  validate_instance(inst, src);
  return inst;
}

std::string format_instance(const Instance& inst) {
  json pool = json::array();
  for (const auto& e : inst.pool) pool.push_back({{"x", e.x.coords}, {"cost", e.cost}, {"y", e.outcome}});
  json target = json::array();
  for (const auto& t : inst.target) target.push_back({{"x", t.x.coords}, {"y", t.outcome}});
  json meta = {{"name", inst.meta.name}, {"synthetic", inst.meta.synthetic}, {"tags", inst.meta.tags}};
  if (inst.meta.noise_sigma) meta["noise_sigma"] = *inst.meta.noise_sigma;
  if (inst.meta.true_theta) meta["true_theta"] = *inst.meta.true_theta;
  if (inst.meta.generator_family) meta["generator_family"] = *inst.meta.generator_family;
  json j = {{"schema_version", kInstanceSchemaVersion},
            {"law", detail::law_to_json(inst.law)},
            {"cost_model", detail::cost_model_to_json(inst.cost_model)},
            {"metadata", meta},
            {"pool", pool},
            {"target", target}};
  return j.dump(1) + "\n";
}

Instance load_validate(const std::filesystem::path& path) { return parse_instance(read_file(path), path.string()); }

void save_instance(const Instance& instance, const std::filesystem::path& path) {
  write_file(path, format_instance(instance));
}

std::vector<double> DesignAxis::values() const {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (count == 1) {
      out[i] = min;
    } else if (i + 1 == count) {
      out[i] = max;
    } else {
      const double t = static_cast<double>(i) / static_cast<double>(count - 1);
      out[i] = log ? std::exp(std::log(min) + t * (std::log(max) - std::log(min))) : min + t * (max - min);
    }
  }
  return out;
}

std::vector<ConfigPoint> DesignBlock::points(std::size_t input_dim) const {
  std::vector<ConfigPoint> out;
  if (kind == Kind::Tied) {
    if (ratios.size() != input_dim) throw ValidationError("tied design block has the wrong number of ratios");
    for (double v : axes.front().values()) {
      std::vector<double> c(input_dim);
      for (std::size_t i = 0; i < input_dim; ++i) c[i] = ratios[i] * v;
      out.emplace_back(std::move(c));
    }
    return out;
  }
  if (axes.size() != input_dim) throw ValidationError("grid design block has the wrong number of axes");
  std::vector<std::vector<double>> vals;
  for (const auto& a : axes) vals.push_back(a.values());
  std::vector<std::size_t> idx(input_dim, 0);
  for (;;) {
    std::vector<double> c(input_dim);
    for (std::size_t i = 0; i < input_dim; ++i) c[i] = vals[i][idx[i]];
    out.emplace_back(std::move(c));
    std::size_t k = input_dim;
    while (k > 0) {
      --k;
      if (++idx[k] < vals[k].size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
    if (input_dim == 0) return out;
  }
}

SyntheticRecipe parse_recipe(std::string_view text, std::string_view source) {
  const std::string src(source);
  const json j = parse_json(text, src);
  if (!j.is_object()) throw ValidationError(src + ": expected a JSON object");
  SyntheticRecipe r;
  r.name = detail::get_string(require(j, "name", src), src + ": name");
  r.law = detail::law_from_json(require(j, "law", src), src + ": law");
  const std::size_t d = r.law.input_dim();
  r.true_theta = detail::get_vector(require(j, "true_theta", src), src + ": true_theta");
  if (r.true_theta.size() != r.law.num_params())
    throw ValidationError(src + ": true_theta: expected " + std::to_string(r.law.num_params()) + " values");
  r.cost_model = detail::cost_model_from_json(require(j, "cost_model", src), src + ": cost_model", d);
  if (auto it = j.find("generator"); it != j.end() && !it->is_null()) {
    const std::string w = src + ": generator";
    r.generator_law = detail::law_from_json(*it, w);
    if (r.generator_law->input_dim() != d) throw ValidationError(w + ": input_dim differs from the declared law");
    r.generator_theta = detail::get_vector(require(*it, "theta", w), w + ".theta");
    if (r.generator_theta.size() != r.generator_law->num_params())
      throw ValidationError(w + ".theta: expected " + std::to_string(r.generator_law->num_params()) + " values");
  }
  if (auto it = j.find("noise_sigma"); it != j.end()) r.noise_sigma = detail::get_finite(*it, src + ": noise_sigma");
  if (r.noise_sigma < 0.0) throw ValidationError(src + ": noise_sigma must be non-negative");
  if (auto it = j.find("seed"); it != j.end()) r.seed = it->get<std::uint64_t>();
  if (auto it = j.find("tags"); it != j.end())
    for (const auto& t : *it) r.tags.push_back(detail::get_string(t, src + ": tags"));
  r.pool_design = design_from_json(require(j, "pool", src), src + ": pool", d);
  r.target_design = design_from_json(require(j, "target", src), src + ": target", d);
  return r;
}

SyntheticRecipe load_recipe(const std::filesystem::path& path) { return parse_recipe(read_file(path), path.string()); }

Instance generate_instance(const SyntheticRecipe& r) {
  const std::size_t d = r.law.input_dim();
  const LawSpec& gen = r.generator_law ? *r.generator_law : r.law;
  const ParamVector theta = Eigen::Map<const Eigen::VectorXd>(
      r.generator_law ? r.generator_theta.data() : r.true_theta.data(),
      static_cast<Eigen::Index>(r.generator_law ? r.generator_theta.size() : r.true_theta.size()));
  std::mt19937_64 rng(derive_seed(r.seed, {kNoiseSalt}));
  std::normal_distribution<double> noise(0.0, 1.0);
  auto outcome = [&](const ConfigPoint& x) {
    const double f = evaluate(gen, theta, x);
    return r.noise_sigma > 0.0 ? f + r.noise_sigma * noise(rng) : f;
  };

  Instance inst{r.law, r.cost_model, {}, {}, {}};
  for (const auto& blk : r.pool_design)
    for (auto& x : blk.points(d)) {
      const double c = cost(r.cost_model, x);
      const double y = outcome(x);
      inst.pool.push_back({std::move(x), c, y});
    }
  for (const auto& blk : r.target_design)
    for (auto& x : blk.points(d)) {
      const double y = outcome(x);
      inst.target.push_back({std::move(x), y});
    }
  inst.meta.name = r.name;
  inst.meta.synthetic = true;
  inst.meta.noise_sigma = r.noise_sigma;
  inst.meta.true_theta = r.generator_law ? r.generator_theta : r.true_theta;
  if (r.generator_law) inst.meta.generator_family = r.generator_law->family_id();
  inst.meta.tags = r.tags;
  validate_instance(inst, r.name.empty() ? "recipe" : r.name);
  return inst;
}

void write_episode_log(const EpisodeLog& log, std::ostream& os) {
  json header = {{"type", "header"},
                 {"schema_version", kLogSchemaVersion},
                 {"instance", log.instance},
                 {"policy", std::string(to_string(log.policy))},
                 {"alpha", log.alpha},
                 {"seed", log.seed},
                 {"config", config_to_json(log.config)},
                 {"total_cost", log.total_cost},
                 {"budget", log.budget},
                 {"warm_start_truncated", log.warm_start_truncated}};
  os << header.dump() << '\n';
  for (const auto& r : log.rounds) {
    json top = json::array();
    for (const auto& s : r.top) top.push_back(score_to_json(s));
    json rec = {{"type", "round"},         {"round", r.round},         {"pool_index", r.pool_index},
                {"cost", r.cost},          {"spent", r.spent},         {"warm_start", r.warm_start},
                {"best_mse", opt(r.best_mse)}, {"num_basins", r.num_basins}, {"weights", r.weights},
                {"dv_intra", opt(r.dv_intra)}, {"dv_inter", opt(r.dv_inter)}, {"score", opt(r.score)},
                {"stale_fit", r.stale_fit}};
    if (!r.top.empty()) rec["top"] = top;
    os << rec.dump() << '\n';
  }
  json cps = json::array();
  for (const auto& c : log.checkpoints)
    cps.push_back({{"budget_fraction", c.budget_fraction},
                   {"r2", c.r2},
                   {"rounds_used", c.rounds_used},
                   {"spent", c.spent},
                   {"best_theta", c.best_theta},
                   {"stale_fit", c.stale_fit}});
  os << json{{"type", "footer"}, {"checkpoints", cps}, {"notes", log.notes}}.dump() << '\n';
}

EpisodeLog read_episode_log(std::istream& is, std::string_view source) {
  const std::string src(source);
  EpisodeLog log;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false, have_footer = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string w = src + ":" + std::to_string(lineno);
    if (have_footer) throw ValidationError(w + ": record after footer");
    const json j = parse_json(line, w);
    const std::string type = detail::get_string(require(j, "type", w), w + ".type");
    try {
      if (type == "header") {
        if (have_header) throw ValidationError(w + ": duplicate header");
        have_header = true;
        const int version = require(j, "schema_version", w).get<int>();
        if (version != kLogSchemaVersion)
          throw ValidationError(w + ": unsupported schema_version " + std::to_string(version));
        log.instance = require(j, "instance", w).get<std::string>();
        log.policy = policy_from_string(require(j, "policy", w).get<std::string>());
        log.alpha = require(j, "alpha", w).get<double>();
        log.seed = require(j, "seed", w).get<std::uint64_t>();
        log.config = config_from_json(require(j, "config", w), w + ".config");
        log.total_cost = require(j, "total_cost", w).get<double>();
        log.budget = require(j, "budget", w).get<double>();
        log.warm_start_truncated = require(j, "warm_start_truncated", w).get<bool>();
      } else if (type == "round") {
        if (!have_header) throw ValidationError(w + ": round record before header");
        RoundRecord r;
        r.round = require(j, "round", w).get<std::size_t>();
        r.pool_index = require(j, "pool_index", w).get<std::size_t>();
        r.cost = require(j, "cost", w).get<double>();
        r.spent = require(j, "spent", w).get<double>();
        r.warm_start = require(j, "warm_start", w).get<bool>();
        r.best_mse = opt_from(j, "best_mse");
        r.num_basins = require(j, "num_basins", w).get<std::size_t>();
        r.weights = require(j, "weights", w).get<std::vector<double>>();
        r.dv_intra = opt_from(j, "dv_intra");
        r.dv_inter = opt_from(j, "dv_inter");
        r.score = opt_from(j, "score");
        r.stale_fit = require(j, "stale_fit", w).get<bool>();
        if (auto it = j.find("top"); it != j.end())
          for (const auto& s : *it)
            r.top.push_back({s.at("pool_index").get<std::size_t>(), s.at("dv_intra").get<double>(),
                             s.at("dv_inter").get<double>(), s.at("cost").get<double>(), s.at("score").get<double>()});
        log.rounds.push_back(std::move(r));
      } else if (type == "footer") {
        if (!have_header) throw ValidationError(w + ": footer before header");
        have_footer = true;
        for (const auto& c : require(j, "checkpoints", w)) {
          Checkpoint cp;
          cp.budget_fraction = c.at("budget_fraction").get<double>();
          cp.r2 = c.at("r2").get<double>();
          cp.rounds_used = c.at("rounds_used").get<std::size_t>();
          cp.spent = c.at("spent").get<double>();
          cp.best_theta = c.at("best_theta").get<std::vector<double>>();
          cp.stale_fit = c.at("stale_fit").get<bool>();
          log.checkpoints.push_back(std::move(cp));
        }
        if (auto it = j.find("notes"); it != j.end()) log.notes = it->get<std::vector<std::string>>();
      } else {
        throw ValidationError(w + ": unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw ValidationError(w + ": " + e.what());
    }
  }
  if (!have_header) throw ValidationError(src + ": missing header record");
  if (!have_footer) throw ValidationError(src + ": missing footer record");
  return log;
}

void save_episode_log(const EpisodeLog& log, const std::filesystem::path& path) {
  std::ostringstream os;
  write_episode_log(log, os);
  write_file(path, os.str());
}

EpisodeLog load_episode_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  return read_episode_log(in, path.string());
}

std::vector<ReportCell> aggregate_logs(std::span<const EpisodeLog> logs) {
  if (logs.empty()) throw ValidationError("no episode logs to aggregate");
  auto fractions = [](const EpisodeLog& l) {
    std::vector<double> f;
    for (const auto& c : l.checkpoints) f.push_back(c.budget_fraction);
    return f;
  };
  const auto ref = fractions(logs.front());
  std::vector<std::string> offenders;
  for (const auto& l : logs)
    if (fractions(l) != ref)
      offenders.push_back(l.instance + "/" + std::string(to_string(l.policy)) + "/seed " + std::to_string(l.seed));
  if (!offenders.empty()) {
    std::string msg = "inconsistent checkpoint sets across logs:";
    for (const auto& o : offenders) msg += " " + o;
    throw ValidationError(msg);
  }

  std::map<PolicyKind, std::vector<const EpisodeLog*>> by_policy;
  for (const auto& l : logs) by_policy[l.policy].push_back(&l);
  std::vector<ReportCell> out;
  for (const auto& [kind, group] : by_policy) {
    for (std::size_t c = 0; c < ref.size(); ++c) {
      ReportCell cell;
      cell.policy = std::string(to_string(kind));
      cell.fraction = ref[c];
      cell.n = group.size();
      double sum = 0.0;
      for (const auto* l : group) sum += l->checkpoints[c].r2;
      cell.mean = sum / static_cast<double>(cell.n);
      if (cell.n > 1) {
        double ss = 0.0;
        for (const auto* l : group) ss += (l->checkpoints[c].r2 - cell.mean) * (l->checkpoints[c].r2 - cell.mean);
        cell.std = std::sqrt(ss / static_cast<double>(cell.n - 1));
      }
      out.push_back(cell);
    }
  }
  return out;
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean, std);
  return buf;
}

ReportPaths emit_report(std::span<const EpisodeLog> logs, const std::filesystem::path& out_dir) {
  const auto cells = aggregate_logs(logs);
  std::vector<double> fracs;
  for (const auto& c : logs.front().checkpoints) fracs.push_back(c.budget_fraction);

  std::ostringstream table;
  table << "policy\tn";
  for (double f : fracs) table << '\t' << fraction_label(f);
  table << '\n';
  for (std::size_t i = 0; i < cells.size(); i += fracs.size()) {
    table << cells[i].policy << '\t' << cells[i].n;
    for (std::size_t c = 0; c < fracs.size(); ++c) table << '\t' << format_mean_std(cells[i + c].mean, cells[i + c].std);
    table << '\n';
  }

  std::ostringstream curves;
  curves << "policy,fraction,mean_r2,std_r2,n\n";
  curves << std::setprecision(10);
  for (const auto& c : cells) curves << c.policy << ',' << c.fraction << ',' << c.mean << ',' << c.std << ',' << c.n << '\n';

  ReportPaths paths{out_dir / "report.tsv", out_dir / "curves.csv"};
  write_file(paths.table, table.str());
  write_file(paths.curves, curves.str());
  return paths;
}

}  // namespace activesl
