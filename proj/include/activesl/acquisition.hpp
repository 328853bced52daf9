#pragma once

// Candidate scoring: expected reduction of target-region predictive variance
// within basins (closed form) and across basins (one-dimensional quadrature
// over the predictive mixture), divided by cost^alpha. Also the D-optimal
// and V-optimal single-linearization baselines.

#include "activesl/law_model.hpp"
#include "activesl/posterior.hpp"

#include <Eigen/Core>

#include <limits>
#include <span>
#include <vector>

namespace activesl {

inline constexpr double kDefaultAlpha = 0.4;
inline constexpr int kDefaultQuadratureNodes = 257;

struct GridConfig {
  int nodes = kDefaultQuadratureNodes;  // per basin interval
  double width = 6.0;                   // half-width in predictive standard deviations
};

/// Trapezoid rule on a strictly increasing node set. Nodes may be split
/// into disjoint components; no weight is placed on the gaps between them.
struct QuadratureGrid {
  std::vector<double> nodes;
  std::vector<double> weights;

  /// Total length covered (sum of component lengths).
  double span() const;
  template <class F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }
};

struct MixtureComponent {
  double weight = 0.0;
  double mean = 0.0;
  double var = 0.0;
};

/// Grid over the union of [mean - width*sd, mean + width*sd]. Each connected
/// component of the union is covered uniformly with the finest step any of
/// its intervals would get from `nodes` points (at most 64 * nodes points per
/// component).
QuadratureGrid make_grid(std::span<const MixtureComponent> mixture, const GridConfig& cfg = {});

/// Scalar predictive mixture at x: weights w_k, means f(x; theta_k),
/// variances sigma^2 + j_k^T Sigma_k j_k.
std::vector<MixtureComponent> predictive_mixture(const Posterior& post, const ConfigPoint& x);

/// Per-basin linearization at a candidate: predictive moments and the
/// target-mean gain g_k = J_k Sigma_k j_k / s_k^2.
struct BasinLinearization {
  double mean = 0.0;
  double var = 0.0;
  Eigen::VectorXd gain;
};

std::vector<BasinLinearization> linearize_candidate(const Posterior& post, const ConfigPoint& x);

double intra_utility(const Posterior& post, const ConfigPoint& x);
double intra_utility(const Posterior& post, std::span<const BasinLinearization> lin);

/// Sigma - Sigma j j^T Sigma / (sigma^2 + j^T Sigma j).
Eigen::MatrixXd rank_one_update(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& j, double sigma2);

struct PairCoefficients {
  std::size_t k = 0;
  std::size_t l = 0;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
};

/// ||f_k^+(y) - f_l^+(y)||^2 = A + B y + C y^2 for every pair k < l.
std::vector<PairCoefficients> pair_coefficients(const Posterior& post, std::span<const BasinLinearization> lin);

/// V_inter - E_y[V_inter^+(x, y)]; exactly 0 for a single basin.
double inter_utility(const Posterior& post, const ConfigPoint& x, const GridConfig& cfg = {});
double inter_utility(const Posterior& post, std::span<const BasinLinearization> lin, const GridConfig& cfg = {});

/// Quadrature estimate of E_y[w_k^+(x, y)] for every basin.
std::vector<double> expected_updated_weights(const Posterior& post, const ConfigPoint& x, const GridConfig& cfg = {});

struct Candidate {
  std::size_t pool_index = 0;
  ConfigPoint x;
  double cost = 1.0;
};

struct CandidateScore {
  std::size_t pool_index = 0;
  double dv_intra = 0.0;
  double dv_inter = 0.0;
  double cost = 1.0;
  double score = 0.0;
};

/// One score per candidate whose cost fits in `remaining_budget`, in input
/// order. Candidates where some basin's law is undefined are skipped.
std::vector<CandidateScore> score_candidates(const Posterior& post, std::span<const Candidate> candidates,
                                             double alpha = kDefaultAlpha, const GridConfig& cfg = {},
                                             double remaining_budget = std::numeric_limits<double>::infinity());

/// log(1 + j^T H^-1 j / sigma^2): log-determinant gain of the Fisher matrix.
double dopt_score(const LawSpec& spec, const LocalGaussian& best, const ConfigPoint& x, double sigma2);

/// Target-variance reduction under the single linearization at `best`.
double vopt_score(const LawSpec& spec, const LocalGaussian& best, std::span<const ConfigPoint> target,
                  const ConfigPoint& x, double sigma2);

/// A one-basin posterior centred at `best`; vopt_score is intra_utility on it.
Posterior single_basin_posterior(const LawSpec& spec, const LocalGaussian& best, std::span<const ConfigPoint> target,
                                 double sigma2);

}  // namespace activesl
