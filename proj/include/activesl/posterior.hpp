#pragma once

// Basin-mixture approximation of the parameter posterior built from
// multi-start fits: p(theta | D) ~ sum_k w_k N(theta_k, Sigma_k).
//
// Covariances live in the scaled parameterization (log for positive-flagged
// parameters) and every Jacobian used downstream is the scaled Jacobian, so
// the linear-Gaussian update formulas apply without re-transformation.

#include "activesl/fitter.hpp"
#include "activesl/law_model.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace activesl {

struct LocalGaussian {
  ParamVector theta;
  Eigen::MatrixXd cov;        // floored inverse of `precision`
  Eigen::MatrixXd precision;  // H = J^T J / sigma^2 + Lambda, after eigenvalue flooring
  double log_det_precision = 0.0;
  double mse = 0.0;
};

/// Builds H from scaled-Jacobian rows over `data`, floors its spectrum at
/// 1e-10 * lambda_max (adding 1e-12 diagonal jitter when H is numerically
/// zero) and inverts it. Throws PosteriorError when H stays singular.
LocalGaussian local_covariance(const LawSpec& spec, const Dataset& data, const FitResult& fit, double sigma2,
                               const Eigen::VectorXd& prior_precision);
LocalGaussian local_covariance(const LawSpec& spec, const Dataset& data, const FitResult& fit, double sigma2,
                               double prior_precision);

/// Predictive means mu(x) and variances v(x) = j Sigma j^T + sigma^2 at each point.
struct PredictiveMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

PredictiveMoments predictive_moments(const LawSpec& spec, const LocalGaussian& g,
                                     std::span<const ConfigPoint> points, double sigma2);

/// Mean over points of the symmetric KL divergence between the two scalar
/// predictive Gaussians.
double predictive_skl(const PredictiveMoments& a, const PredictiveMoments& b);
double predictive_skl(const LawSpec& spec, const LocalGaussian& a, const LocalGaussian& b,
                      std::span<const ConfigPoint> points, double sigma2);

struct Partition {
  std::vector<int> labels;  // cluster id per item, numbered by first appearance
  int num_clusters = 1;
  double silhouette = 0.0;
};

inline constexpr int kDefaultMaxBasins = 8;
inline constexpr double kSilhouetteFloor = 0.1;

/// Mean silhouette with `dissimilarity` as the distance; singletons score 0.
double silhouette_score(const Eigen::MatrixXd& dissimilarity, std::span<const int> labels, int num_clusters);

/// Cuts the dendrogram into exactly `k` clusters.
std::vector<int> cut_dendrogram(const Eigen::MatrixXd& dissimilarity, int k);

/// Average-linkage agglomeration. Tries every cut with 2 <= K <= min(max_k,
/// M-1) and keeps the best silhouette; K = 1 when M <= 2 or the best
/// silhouette is below `silhouette_floor`.
Partition cluster_basins(const Eigen::MatrixXd& dissimilarity, int max_k = kDefaultMaxBasins,
                         double silhouette_floor = kSilhouetteFloor);

/// Index of the minimal-mse member of each cluster (ties: lowest index).
std::vector<std::size_t> select_representatives(const Partition& partition, std::span<const double> mse);

enum class WeightScheme { Bic, Laplace };

struct WeightConfig {
  WeightScheme scheme = WeightScheme::Bic;
  double temperature = 1.0;
};

/// bic: softmax of -BIC_k / 2T with BIC_k = n log(MSE_k) + p log n.
/// laplace: exp(-n MSE_k / 2 sigma^2) |H_k|^(-1/2) under a uniform prior.
std::vector<double> mixture_weights(std::span<const LocalGaussian> reps, std::size_t n_obs,
                                    const WeightConfig& cfg, double sigma2);

struct Basin {
  ParamVector theta;
  Eigen::MatrixXd cov;
  double weight = 1.0;
  double mse = 0.0;
  Eigen::VectorXd target_mean;  // F(theta_k)
  Eigen::MatrixXd target_jac;   // scaled Jacobian rows at the target points
};

Basin make_basin(const LawSpec& spec, ParamVector theta, Eigen::MatrixXd cov, double weight, double mse,
                 std::span<const ConfigPoint> target);

struct Posterior {
  LawSpec spec;
  std::vector<Basin> basins;
  double noise_var = 1e-8;
  std::vector<ConfigPoint> target;

  std::size_t num_basins() const { return basins.size(); }
  std::size_t num_target() const { return target.size(); }
};

struct PosteriorConfig {
  WeightConfig weights;
  double prior_precision = 1e-6;
  int max_k = kDefaultMaxBasins;
  double dedup_floor = 1e-6;
  double silhouette_floor = kSilhouetteFloor;
  double noise_floor = 1e-8;
};

/// sigma^2 = max(best-fit mse, floor).
double estimate_noise_variance(std::span<const FitResult> fits, double floor = 1e-8);

/// Groups items whose pairwise dissimilarity is below `floor` (single
/// linkage on the thresholded graph). Returns group labels by first appearance.
std::vector<int> dedup_groups(const Eigen::MatrixXd& dissimilarity, double floor);

/// Noise estimate, local covariances, dedup, prediction-space clustering on
/// the target region, representatives, weights, cached target predictions.
Posterior estimate_posterior(const LawSpec& spec, const Dataset& data, std::span<const FitResult> fits,
                             std::span<const ConfigPoint> target, const PosteriorConfig& cfg = {});

struct VarianceTerms {
  double intra = 0.0;
  double inter = 0.0;
};

/// V_intra and V_inter (centered form), both divided by |target|.
VarianceTerms target_variance(const Posterior& post);

/// V_inter via the pairwise identity sum_{k<l} w_k w_l ||f_k - f_l||^2 / |target|.
double inter_variance_pairwise(const Posterior& post);

}  // namespace activesl
