#pragma once

// Instance files, synthetic instance generation, episode log serialization
// and budget-accuracy report emission.

#include "activesl/engine.hpp"
#include "activesl/instance.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace activesl {

inline constexpr int kInstanceSchemaVersion = 1;

/// Checks every instance invariant: dimensions, finite outcomes, positive
/// costs, non-empty pool and target, and for synthetic instances
/// min(target cost) > median(pool cost). `source` prefixes diagnostics.
void validate_instance(const Instance& instance, std::string_view source = "instance");

/// Parses and validates an instance document. Pool entries without a
/// "cost" field are priced with the instance's cost model.
Instance parse_instance(std::string_view text, std::string_view source = "instance");
std::string format_instance(const Instance& instance);

Instance load_validate(const std::filesystem::path& path);
void save_instance(const Instance& instance, const std::filesystem::path& path);

/// One block of candidate configurations.
struct DesignAxis {
  double min = 1.0;
  double max = 1.0;
  std::size_t count = 1;
  bool log = true;

  /// count values from min to max, geometric when `log` is set.
  std::vector<double> values() const;
};

struct DesignBlock {
  enum class Kind { Grid, Tied };
  Kind kind = Kind::Grid;
  /// Grid: one axis per coordinate, Cartesian product (first axis slowest).
  /// Tied: a single axis; coordinate i equals ratios[i] * value.
  std::vector<DesignAxis> axes;
  std::vector<double> ratios;

  std::vector<ConfigPoint> points(std::size_t input_dim) const;
};

struct SyntheticRecipe {
  std::string name;
  LawSpec law{"linear", 1};
  std::vector<double> true_theta;
  CostModel cost_model;
  /// When set, outcomes come from this law and parameters instead of the
  /// declared one (a misspecified instance).
  std::optional<LawSpec> generator_law;
  std::vector<double> generator_theta;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> tags;
  std::vector<DesignBlock> pool_design;
  std::vector<DesignBlock> target_design;
};

SyntheticRecipe parse_recipe(std::string_view text, std::string_view source = "recipe");
SyntheticRecipe load_recipe(const std::filesystem::path& path);

/// y = f(x; theta*) + eps with eps ~ N(0, sigma^2), applied to pool and
/// target alike. Deterministic in the recipe seed.
Instance generate_instance(const SyntheticRecipe& recipe);

/// Line-delimited episode log: a header record, one record per round and a
/// footer carrying the checkpoints.
void write_episode_log(const EpisodeLog& log, std::ostream& os);
EpisodeLog read_episode_log(std::istream& is, std::string_view source = "log");
void save_episode_log(const EpisodeLog& log, const std::filesystem::path& path);
EpisodeLog load_episode_log(const std::filesystem::path& path);

struct ReportCell {
  std::string policy;
  double fraction = 0.0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 when n == 1
  std::size_t n = 0;
};

/// Pools every (instance, seed) log of a policy at each checkpoint. Throws
/// ValidationError naming the offending logs when checkpoint sets differ.
std::vector<ReportCell> aggregate_logs(std::span<const EpisodeLog> logs);

/// "0.50 ± 0.00".
std::string format_mean_std(double mean, double std);

struct ReportPaths {
  std::filesystem::path table;   // report.tsv
  std::filesystem::path curves;  // curves.csv
};

/// Writes report.tsv (policy rows, one "mean ± std" column per checkpoint)
/// and curves.csv (policy,fraction,mean_r2,std_r2,n) into `out_dir`.
ReportPaths emit_report(std::span<const EpisodeLog> logs, const std::filesystem::path& out_dir);

}  // namespace activesl
