#pragma once

// Sequential-design episodes: warm start, the refit/score/select loop under
// a hard budget, checkpoint metrics and the baseline selection policies.

#include "activesl/acquisition.hpp"
#include "activesl/fitter.hpp"
#include "activesl/instance.hpp"
#include "activesl/posterior.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace activesl {

inline constexpr double kWarmStartFactor = 2.5;
inline constexpr int kLogSchemaVersion = 1;

/// ceil(2.5 p).
std::size_t warm_start_size(std::size_t num_params);

enum class PolicyKind { Ours, Random, Cheapest, CostRand, DOpt, VOpt };

std::string_view to_string(PolicyKind kind);
PolicyKind policy_from_string(std::string_view name);
bool is_model_based(PolicyKind kind);

struct Policy {
  PolicyKind kind = PolicyKind::Ours;
  double alpha = kDefaultAlpha;
};

struct EpisodeConfig {
  std::vector<double> checkpoints{0.01, 0.05, 0.10};
  /// Episode budget as a fraction of the summed pool cost; 0 means the
  /// largest checkpoint fraction.
  double budget_fraction = 0.0;
  int n_starts = kDefaultFitStarts;
  GridConfig grid;
  PosteriorConfig posterior;
  FitOptions fit;
  /// Number of top candidate scores copied into each round record.
  int log_top_scores = 0;
};

struct PoolState {
  std::vector<double> costs;
  std::vector<bool> selected;
  double spent = 0.0;
  double budget = 0.0;

  explicit PoolState(std::vector<double> c, double budget_);
  double remaining() const { return budget - spent; }
  /// Affordability test with a 1e-12 relative slack on the budget, so a
  /// budget equal to a sum of costs admits all of them despite rounding.
  bool affordable(std::size_t i) const;
  bool feasible(std::size_t i) const { return !selected[i] && affordable(i); }
  std::vector<std::size_t> feasible_indices() const;
  void select(std::size_t i);
  std::size_t num_selected() const;
};

/// The ceil(2.5 p) cheapest candidates that fit the budget, cheapest first
/// (ties by pool index). Marks them selected.
std::vector<std::size_t> warm_start(PoolState& state, std::size_t num_params);

struct RoundRecord {
  std::size_t round = 0;
  std::size_t pool_index = 0;
  double cost = 0.0;
  double spent = 0.0;
  bool warm_start = false;
  std::optional<double> best_mse;
  std::size_t num_basins = 0;
  std::vector<double> weights;
  std::optional<double> dv_intra;
  std::optional<double> dv_inter;
  std::optional<double> score;
  bool stale_fit = false;
  std::vector<CandidateScore> top;
};

struct Checkpoint {
  double budget_fraction = 0.0;
  double r2 = -1.0;
  std::size_t rounds_used = 0;  // observations in the evaluated prefix
  double spent = 0.0;
  std::vector<double> best_theta;
  bool stale_fit = false;
};

struct EpisodeLog {
  std::string instance;
  PolicyKind policy = PolicyKind::Ours;
  double alpha = kDefaultAlpha;
  std::uint64_t seed = 0;
  EpisodeConfig config;
  double total_cost = 0.0;
  double budget = 0.0;
  bool warm_start_truncated = false;
  std::vector<RoundRecord> rounds;
  std::vector<Checkpoint> checkpoints;
  std::vector<std::string> notes;

  std::vector<std::size_t> selections() const;
};

/// target-region R^2 clipped to [-1, 1]. Zero-variance targets give 1 for
/// exact predictions, -1 otherwise.
double target_r2(const LawSpec& spec, const ParamVector& theta, std::span<const TargetEntry> target);

/// Selection rule for one round. `rng` drives the stochastic baselines.
struct StepContext {
  const Instance& instance;
  const PoolState& state;
  const Dataset& data;
  const EpisodeConfig& config;
  std::uint64_t fit_seed = 0;
};

struct StepResult {
  std::optional<std::size_t> index;
  std::optional<FitReport> fits;
  std::optional<Posterior> posterior;
  std::vector<CandidateScore> scores;
  bool stale_fit = false;
};

/// Chooses the next candidate for the given policy. Model-based policies
/// refit with `config.n_starts` starts; when no start converges they fall
/// back to `previous` (if any) and flag the result as stale.
StepResult step(const Policy& policy, const StepContext& ctx, std::mt19937_64& rng,
                const std::optional<FitReport>& previous = std::nullopt);

/// Seed for the multi-start refit done on a dataset of `n_obs` points.
std::uint64_t fit_seed_for(std::uint64_t episode_seed, std::size_t n_obs);

EpisodeLog run_episode(const Instance& instance, const Policy& policy, const EpisodeConfig& config,
                       std::uint64_t seed);

/// Dataset holding the given pool entries, ordered by pool index.
Dataset dataset_from(const Instance& instance, std::vector<std::size_t> indices);

/// Target R^2 of the best fit on the entire pool. The refit uses
/// fit_seed_for(seed, pool size), the seed an episode would use for the
/// same data.
double all_data_reference(const Instance& instance, int n_starts = kDefaultFitStarts, std::uint64_t seed = 0);

}  // namespace activesl
