#pragma once

// Multi-start bounded nonlinear least squares.

#include "activesl/law_model.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace activesl {

inline constexpr int kDefaultFitStarts = 64;

struct Observation {
  ConfigPoint x;
  double y = 0.0;
};

struct Dataset {
  std::vector<Observation> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void add(ConfigPoint x, double y) { points.push_back({std::move(x), y}); }
};

struct FitResult {
  ParamVector theta;
  double mse = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t start_index = 0;
};

struct FitOptions {
  double grad_tol = 1e-10;
  int max_iterations = 500;
};

struct FitReport {
  /// Converged local optima, ascending by mse (ties by start index).
  std::vector<FitResult> fits;
  std::size_t dropped = 0;
  /// Non-empty when no start converged.
  std::string diagnostic;
};

double mean_squared_error(const LawSpec& spec, const Dataset& data, const ParamVector& theta);

/// Draws one initial point: log-uniform over bounds for positive-flagged
/// parameters, uniform otherwise.
ParamVector sample_initial(const LawSpec& spec, std::mt19937_64& rng);

/// Projected Levenberg-Marquardt on the mean squared error, run in the
/// log-parameterization for positive-flagged parameters. `converged` is set
/// when the projected gradient falls below `grad_tol` or the iterate stops
/// moving at machine precision; hitting `max_iterations` leaves it false.
FitResult fit_local(const LawSpec& spec, const Dataset& data, const ParamVector& init, const FitOptions& opts = {});

/// Runs `n_starts` independent local fits. Start s draws its initial point
/// from a stream seeded by (seed, s), so the first n starts are shared by
/// every run with n or more starts.
FitReport fit_multistart(const LawSpec& spec, const Dataset& data, int n_starts, std::uint64_t seed,
                         const FitOptions& opts = {});

/// Minimal-mse element; ties broken by lowest start index.
const FitResult& best_fit(std::span<const FitResult> results);

}  // namespace activesl
