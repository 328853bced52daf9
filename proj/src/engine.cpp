#include "activesl/engine.hpp"

#include "activesl/errors.hpp"
#include "activesl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace activesl {
namespace {

constexpr std::uint64_t kFitSalt = 0x6669747321ULL;
constexpr std::uint64_t kPolicySalt = 0x706f6c6963ULL;
constexpr double kBudgetSlack = 1e-12;

std::size_t cheapest_feasible(const PoolState& state, std::span<const std::size_t> feasible) {
  std::size_t best = feasible.front();
  for (std::size_t i : feasible)
    if (state.costs[i] < state.costs[best]) best = i;
  return best;
}

std::vector<Candidate> candidates_for(const Instance& inst, std::span<const std::size_t> feasible) {
  std::vector<Candidate> out;
  out.reserve(feasible.size());
  for (std::size_t i : feasible) out.push_back({i, inst.pool[i].x, inst.pool[i].cost});
  return out;
}

std::optional<std::size_t> argmax_score(std::span<const CandidateScore> scores) {
  std::optional<std::size_t> best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  for (const auto& s : scores) {
    if (!best || s.score > best_score || (s.score == best_score && s.pool_index < best_index)) {
      best = s.pool_index;
      best_score = s.score;
      best_index = s.pool_index;
    }
  }
  return best;
}

// Refits, falling back to `previous` when no start converges.
std::optional<FitReport> refit(const StepContext& ctx, const std::optional<FitReport>& previous, bool& stale) {
  FitReport fr = fit_multistart(ctx.instance.law, ctx.data, ctx.config.n_starts, ctx.fit_seed, ctx.config.fit);
  if (!fr.fits.empty()) return fr;
  stale = true;
  if (previous && !previous->fits.empty()) return previous;
  return std::nullopt;
}

void step_ours(const Policy& policy, const StepContext& ctx, const std::optional<FitReport>& previous,
               std::span<const std::size_t> feasible, StepResult& res) {
  res.fits = refit(ctx, previous, res.stale_fit);
  if (!res.fits) return;
  const bool reused = res.stale_fit;
  const auto target = ctx.instance.target_points();
  try {
    res.posterior = estimate_posterior(ctx.instance.law, ctx.data, res.fits->fits, target, ctx.config.posterior);
  } catch (const PosteriorError&) {
    res.stale_fit = true;
    if (reused || !previous || previous->fits.empty()) return;
    try {
      res.posterior = estimate_posterior(ctx.instance.law, ctx.data, previous->fits, target, ctx.config.posterior);
    } catch (const PosteriorError&) {
      return;
    }
  }
  const auto cands = candidates_for(ctx.instance, feasible);
  res.scores = score_candidates(*res.posterior, cands, policy.alpha, ctx.config.grid, ctx.state.remaining() +
                                                                                         kBudgetSlack * ctx.state.budget);
  res.index = argmax_score(res.scores);
}

void step_single_linearization(const Policy& policy, const StepContext& ctx,
                               const std::optional<FitReport>& previous, std::span<const std::size_t> feasible,
                               StepResult& res) {
  res.fits = refit(ctx, previous, res.stale_fit);
  if (!res.fits) return;
  const LawSpec& spec = ctx.instance.law;
  const FitResult& best = best_fit(res.fits->fits);
  const double sigma2 = estimate_noise_variance(res.fits->fits, ctx.config.posterior.noise_floor);
  LocalGaussian local;
  try {
    local = local_covariance(spec, ctx.data, best, sigma2, ctx.config.posterior.prior_precision);
  } catch (const Error&) {
    res.stale_fit = true;
    return;
  }
  const auto target = ctx.instance.target_points();
  std::optional<Posterior> single;
  if (policy.kind == PolicyKind::VOpt) single = single_basin_posterior(spec, local, target, sigma2);
  for (std::size_t i : feasible) {
    const auto& e = ctx.instance.pool[i];
    CandidateScore s;
    s.pool_index = i;
    s.cost = e.cost;
    double raw = 0.0;
    try {
      raw = policy.kind == PolicyKind::VOpt ? intra_utility(*single, e.x) : dopt_score(spec, local, e.x, sigma2);
    } catch (const DomainError&) {
      continue;
    }
    if (policy.kind == PolicyKind::VOpt) s.dv_intra = raw;
    s.score = raw / std::pow(e.cost, policy.alpha);
    if (std::isfinite(s.score)) res.scores.push_back(s);
  }
  res.index = argmax_score(res.scores);
}

}  // namespace

std::size_t warm_start_size(std::size_t num_params) {
  return static_cast<std::size_t>(std::ceil(kWarmStartFactor * static_cast<double>(num_params) - 1e-9));
}

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Ours: return "ours";
    case PolicyKind::Random: return "random";
    case PolicyKind::Cheapest: return "cheapest";
    case PolicyKind::CostRand: return "cost_rand";
    case PolicyKind::DOpt: return "dopt";
    case PolicyKind::VOpt: return "vopt";
  }
  return "?";
}

PolicyKind policy_from_string(std::string_view name) {
  for (auto k : {PolicyKind::Ours, PolicyKind::Random, PolicyKind::Cheapest, PolicyKind::CostRand, PolicyKind::DOpt,
                 PolicyKind::VOpt})
    if (to_string(k) == name) return k;
  throw ValidationError("unknown policy '" + std::string(name) + "'");
}

bool is_model_based(PolicyKind kind) {
  return kind == PolicyKind::Ours || kind == PolicyKind::DOpt || kind == PolicyKind::VOpt;
}

PoolState::PoolState(std::vector<double> c, double budget_)
    : costs(std::move(c)), selected(costs.size(), false), budget(budget_) {
  for (double v : costs)
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("pool costs must be positive and finite");
  if (!(budget >= 0.0)) throw ValidationError("budget must be non-negative");
}

bool PoolState::affordable(std::size_t i) const {
  return spent + costs[i] <= budget * (1.0 + kBudgetSlack);
}

std::vector<std::size_t> PoolState::feasible_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < costs.size(); ++i)
    if (feasible(i)) out.push_back(i);
  return out;
}

void PoolState::select(std::size_t i) {
  if (i >= costs.size()) throw ValidationError("pool index out of range");
  if (selected[i]) throw ValidationError("candidate " + std::to_string(i) + " already selected");
  if (!affordable(i)) throw ValidationError("candidate " + std::to_string(i) + " exceeds the remaining budget");
  selected[i] = true;
  spent += costs[i];
}

std::size_t PoolState::num_selected() const {
  return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true));
}

std::vector<std::size_t> warm_start(PoolState& state, std::size_t num_params) {
  std::vector<std::size_t> order(state.costs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return state.costs[a] < state.costs[b]; });
  const std::size_t want = warm_start_size(num_params);
  std::vector<std::size_t> out;
  for (std::size_t i : order) {
    if (out.size() == want) break;
    if (!state.feasible(i)) continue;
    state.select(i);
    out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> EpisodeLog::selections() const {
  std::vector<std::size_t> out;
  out.reserve(rounds.size());
  for (const auto& r : rounds) out.push_back(r.pool_index);
  return out;
}

double target_r2(const LawSpec& spec, const ParamVector& theta, std::span<const TargetEntry> target) {
  if (target.empty()) throw ValidationError("target region is empty");
  double mean = 0.0;
  for (const auto& t : target) mean += t.outcome;
  mean /= static_cast<double>(target.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto& t : target) {
    double f = 0.0;
    if (!try_evaluate(spec, {theta.data(), static_cast<std::size_t>(theta.size())}, t.x.view(), f, {}, false))
      return -1.0;
    ss_res += (f - t.outcome) * (f - t.outcome);
    ss_tot += (t.outcome - mean) * (t.outcome - mean);
  }
  if (!std::isfinite(ss_res)) return -1.0;
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -1.0;
  return std::clamp(1.0 - ss_res / ss_tot, -1.0, 1.0);
}

StepResult step(const Policy& policy, const StepContext& ctx, std::mt19937_64& rng,
                const std::optional<FitReport>& previous) {
  StepResult res;
  const auto feasible = ctx.state.feasible_indices();
  if (feasible.empty()) return res;

  switch (policy.kind) {
    case PolicyKind::Random: {
      std::uniform_int_distribution<std::size_t> pick(0, feasible.size() - 1);
      res.index = feasible[pick(rng)];
      return res;
    }
    case PolicyKind::Cheapest: {
      const double c = ctx.state.costs[cheapest_feasible(ctx.state, feasible)];
      std::vector<std::size_t> ties;
      for (std::size_t i : feasible)
        if (ctx.state.costs[i] == c) ties.push_back(i);
      std::uniform_int_distribution<std::size_t> pick(0, ties.size() - 1);
      res.index = ties[pick(rng)];
      return res;
    }
    case PolicyKind::CostRand: {
      std::vector<double> w;
      w.reserve(feasible.size());
      for (std::size_t i : feasible) w.push_back(1.0 / ctx.state.costs[i]);
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      res.index = feasible[pick(rng)];
      return res;
    }
    case PolicyKind::Ours:
      step_ours(policy, ctx, previous, feasible, res);
      break;
    case PolicyKind::DOpt:
    case PolicyKind::VOpt:
      step_single_linearization(policy, ctx, previous, feasible, res);
      break;
  }
  if (!res.index) res.index = cheapest_feasible(ctx.state, feasible);
  return res;
}

std::uint64_t fit_seed_for(std::uint64_t episode_seed, std::size_t n_obs) {
  return derive_seed(episode_seed, {kFitSalt, static_cast<std::uint64_t>(n_obs)});
}

Dataset dataset_from(const Instance& instance, std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  Dataset d;
  d.points.reserve(indices.size());
  for (std::size_t i : indices) d.add(instance.pool.at(i).x, instance.pool.at(i).outcome);
  return d;
}

EpisodeLog run_episode(const Instance& instance, const Policy& policy, const EpisodeConfig& config,
                       std::uint64_t seed) {
  if (config.checkpoints.empty()) throw ValidationError("at least one checkpoint fraction is required");
  for (std::size_t i = 0; i < config.checkpoints.size(); ++i) {
    const double f = config.checkpoints[i];
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("checkpoint fractions must lie in (0, 1]");
    if (i > 0 && !(f > config.checkpoints[i - 1])) throw ValidationError("checkpoint fractions must be increasing");
  }
  if (instance.pool.empty()) throw ValidationError("pool is empty");

  EpisodeLog log;
  log.instance = instance.meta.name;
  log.policy = policy.kind;
  log.alpha = policy.alpha;
  log.seed = seed;
  log.config = config;
  log.total_cost = instance.total_cost();
  const double fraction = config.budget_fraction > 0.0 ? config.budget_fraction : config.checkpoints.back();
  log.budget = fraction * log.total_cost;

  std::vector<double> costs;
  costs.reserve(instance.pool.size());
  for (const auto& e : instance.pool) costs.push_back(e.cost);
  PoolState state(std::move(costs), log.budget);
  std::mt19937_64 rng(derive_seed(seed, {kPolicySalt}));

  std::vector<std::size_t> order;
  std::map<std::size_t, FitReport> fits_by_size;
  std::optional<FitReport> last_good;

  if (is_model_based(policy.kind)) {
    const std::size_t p = instance.law.num_params();
    const auto warm = warm_start(state, p);
    double spent = 0.0;
    for (std::size_t i : warm) {
      spent += state.costs[i];
      RoundRecord r;
      r.round = order.size();
      r.pool_index = i;
      r.cost = state.costs[i];
      r.spent = spent;
      r.warm_start = true;
      log.rounds.push_back(std::move(r));
      order.push_back(i);
    }
    if (warm.size() < warm_start_size(p)) {
      log.warm_start_truncated = true;
      log.notes.push_back("warm start truncated: " + std::to_string(warm.size()) + " of " +
                          std::to_string(warm_start_size(p)) + " points fit the budget");
    }
  }

  // Heuristic policies never look at fits, so they are fitted only at checkpoints.
  const bool fits_each_round = is_model_based(policy.kind);
  for (;;) {
    const Dataset data = dataset_from(instance, order);
    const StepContext ctx{instance, state, data, config, fit_seed_for(seed, data.size())};
    StepResult res = step(policy, ctx, rng, last_good);
    if (!res.index) break;
    const std::size_t idx = *res.index;

    RoundRecord r;
    r.round = order.size();
    r.pool_index = idx;
    r.cost = state.costs[idx];
    r.stale_fit = res.stale_fit;
    if (fits_each_round && res.fits && !res.stale_fit) {
      fits_by_size[data.size()] = *res.fits;
      last_good = res.fits;
    }
    if (res.fits && !res.fits->fits.empty()) r.best_mse = res.fits->fits.front().mse;
    if (res.posterior) {
      r.num_basins = res.posterior->num_basins();
      for (const auto& b : res.posterior->basins) r.weights.push_back(b.weight);
    } else if (res.fits && !res.fits->fits.empty()) {
      r.num_basins = 1;
      r.weights = {1.0};
    }
    for (const auto& s : res.scores)
      if (s.pool_index == idx) {
        if (policy.kind == PolicyKind::Ours || policy.kind == PolicyKind::VOpt) {
          r.dv_intra = s.dv_intra;
          if (policy.kind == PolicyKind::Ours) r.dv_inter = s.dv_inter;
        }
        r.score = s.score;
      }
    if (config.log_top_scores > 0 && !res.scores.empty()) {
      std::vector<CandidateScore> top = res.scores;
      std::stable_sort(top.begin(), top.end(),
                       [](const CandidateScore& a, const CandidateScore& b) { return a.score > b.score; });
      top.resize(std::min<std::size_t>(top.size(), static_cast<std::size_t>(config.log_top_scores)));
      r.top = std::move(top);
    }

    state.select(idx);
    r.spent = state.spent;
    log.rounds.push_back(std::move(r));
    order.push_back(idx);
  }

  // Checkpoint f is evaluated on the longest selection prefix whose spend fits f * C_total.
  std::vector<double> prefix_spend(order.size() + 1, 0.0);
  for (std::size_t t = 0; t < order.size(); ++t) prefix_spend[t + 1] = prefix_spend[t] + state.costs[order[t]];
  for (double f : config.checkpoints) {
    const double limit = f * log.total_cost * (1.0 + kBudgetSlack);
    std::size_t n = 0;
    while (n < order.size() && prefix_spend[n + 1] <= limit) ++n;
    Checkpoint cp;
    cp.budget_fraction = f;
    cp.rounds_used = n;
    cp.spent = prefix_spend[n];
    if (n > 0) {
      auto it = fits_by_size.find(n);
      if (it == fits_by_size.end()) {
        const std::vector<std::size_t> prefix(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
        FitReport fr = fit_multistart(instance.law, dataset_from(instance, prefix), config.n_starts,
                                      fit_seed_for(seed, n), config.fit);
        if (!fr.fits.empty()) it = fits_by_size.emplace(n, std::move(fr)).first;
      }
      if (it == fits_by_size.end()) {
        cp.stale_fit = true;
        // Most recent successful fit on a shorter prefix.
        auto prev = fits_by_size.lower_bound(n);
        if (prev != fits_by_size.begin()) it = std::prev(prev);
      }
      if (it != fits_by_size.end()) {
        const ParamVector& theta = it->second.fits.front().theta;
        cp.r2 = target_r2(instance.law, theta, instance.target);
        cp.best_theta.assign(theta.data(), theta.data() + theta.size());
      }
    }
    log.checkpoints.push_back(std::move(cp));
  }
  return log;
}

double all_data_reference(const Instance& instance, int n_starts, std::uint64_t seed) {
  std::vector<std::size_t> all(instance.pool.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const FitReport fr =
      fit_multistart(instance.law, dataset_from(instance, all), n_starts, fit_seed_for(seed, all.size()));
  if (fr.fits.empty()) throw PosteriorError("no fit start converged on the full pool: " + fr.diagnostic);
  return target_r2(instance.law, fr.fits.front().theta, instance.target);
}

}  // namespace activesl
