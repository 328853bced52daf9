#include "activesl/posterior.hpp"

#include "activesl/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace activesl {
namespace {

struct Spectrum {
  Eigen::MatrixXd vectors;
  Eigen::VectorXd values;
};

// Eigen-decomposition of a symmetric matrix with eigenvalues floored at
// `rel_floor` times the largest one.
bool floored_spectrum(const Eigen::MatrixXd& H, double rel_floor, Spectrum& out) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  if (es.info() != Eigen::Success) return false;
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmax > 0.0) || !std::isfinite(lmax)) return false;
  out.vectors = es.eigenvectors();
  out.values = es.eigenvalues().cwiseMax(rel_floor * lmax);
  return true;
}

std::vector<int> relabel_by_first_appearance(std::span<const int> raw) {
  std::vector<int> map(raw.size() + 1, -1), out(raw.size());
  int next = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& m = map[static_cast<std::size_t>(raw[i])];
    if (m < 0) m = next++;
    out[i] = m;
  }
  return out;
}

// Average-linkage merge sequence. Each merge joins clusters a < b (ids are
// the smallest member index); ties resolve to the lexicographically
// smallest pair.
std::vector<std::pair<int, int>> agglomerate(const Eigen::MatrixXd& D) {
  const int m = static_cast<int>(D.rows());
  std::vector<std::vector<int>> members(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) members[static_cast<std::size_t>(i)] = {i};
  std::vector<bool> alive(static_cast<std::size_t>(m), true);
  Eigen::MatrixXd link = D;  // linkage between live clusters

  std::vector<std::pair<int, int>> merges;
  for (int step = 0; step + 1 < m; ++step) {
    double best = std::numeric_limits<double>::infinity();
    int ba = -1, bb = -1;
    for (int a = 0; a < m; ++a) {
      if (!alive[static_cast<std::size_t>(a)]) continue;
      for (int b = a + 1; b < m; ++b) {
        if (!alive[static_cast<std::size_t>(b)]) continue;
        if (link(a, b) < best) {
          best = link(a, b);
          ba = a;
          bb = b;
        }
      }
    }
    if (ba < 0) {  // non-finite linkages: merge the first two live clusters
      for (int a = 0; a < m && bb < 0; ++a) {
        if (!alive[static_cast<std::size_t>(a)]) continue;
        if (ba < 0) ba = a; else bb = a;
      }
    }
    const double na = static_cast<double>(members[static_cast<std::size_t>(ba)].size());
    const double nb = static_cast<double>(members[static_cast<std::size_t>(bb)].size());
    for (int c = 0; c < m; ++c) {
      if (!alive[static_cast<std::size_t>(c)] || c == ba || c == bb) continue;
      const double v = (na * link(ba, c) + nb * link(bb, c)) / (na + nb);
      link(ba, c) = link(c, ba) = v;
    }
    auto& ma = members[static_cast<std::size_t>(ba)];
    auto& mb = members[static_cast<std::size_t>(bb)];
    ma.insert(ma.end(), mb.begin(), mb.end());
    mb.clear();
    alive[static_cast<std::size_t>(bb)] = false;
    merges.emplace_back(ba, bb);
  }
  return merges;
}

std::vector<int> labels_after(const std::vector<std::pair<int, int>>& merges, int m, int k) {
  std::vector<int> owner(static_cast<std::size_t>(m));
  std::iota(owner.begin(), owner.end(), 0);
  const int steps = m - k;
  for (int s = 0; s < steps; ++s) {
    const auto [a, b] = merges[static_cast<std::size_t>(s)];
    for (auto& o : owner)
      if (o == b) o = a;
  }
  return relabel_by_first_appearance(owner);
}

}  // namespace

LocalGaussian local_covariance(const LawSpec& spec, const Dataset& data, const FitResult& fit, double sigma2,
                               const Eigen::VectorXd& prior_precision) {
  if (!(sigma2 > 0.0)) throw ValidationError("noise variance must be positive");
  const auto p = static_cast<Eigen::Index>(spec.num_params());
  if (prior_precision.size() != p) throw ValidationError("prior precision has wrong length");

  Eigen::MatrixXd JtJ = Eigen::MatrixXd::Zero(p, p);
  for (const auto& obs : data.points) {
    const Eigen::VectorXd j = scaled_jacobian(spec, fit.theta, obs.x);
    JtJ.selfadjointView<Eigen::Lower>().rankUpdate(j);
  }
  Eigen::MatrixXd H = JtJ.selfadjointView<Eigen::Lower>();
  H /= sigma2;
  H.diagonal() += prior_precision;

  Spectrum sp;
  if (!floored_spectrum(H, 1e-10, sp)) {
    H.diagonal().array() += 1e-12;
    if (!floored_spectrum(H, 1e-10, sp))
      throw PosteriorError("local curvature matrix is singular even after spectral regularization");
  }

  LocalGaussian g;
  g.theta = fit.theta;
  g.mse = fit.mse;
  g.cov = sp.vectors * sp.values.cwiseInverse().asDiagonal() * sp.vectors.transpose();
  g.cov = 0.5 * (g.cov + g.cov.transpose()).eval();
  g.precision = sp.vectors * sp.values.asDiagonal() * sp.vectors.transpose();
  g.precision = 0.5 * (g.precision + g.precision.transpose()).eval();
  g.log_det_precision = sp.values.array().log().sum();
  return g;
}

LocalGaussian local_covariance(const LawSpec& spec, const Dataset& data, const FitResult& fit, double sigma2,
                               double prior_precision) {
  return local_covariance(spec, data, fit, sigma2,
                          Eigen::VectorXd::Constant(static_cast<Eigen::Index>(spec.num_params()), prior_precision));
}

PredictiveMoments predictive_moments(const LawSpec& spec, const LocalGaussian& g,
                                     std::span<const ConfigPoint> points, double sigma2) {
  PredictiveMoments m;
  const auto n = static_cast<Eigen::Index>(points.size());
  m.mean.resize(n);
  m.var.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& x = points[static_cast<std::size_t>(i)];
    const Eigen::VectorXd j = scaled_jacobian(spec, g.theta, x);
    m.mean[i] = evaluate(spec, g.theta, x);
    m.var[i] = j.dot(g.cov * j) + sigma2;
  }
  return m;
}

double predictive_skl(const PredictiveMoments& a, const PredictiveMoments& b) {
  if (a.mean.size() == 0 || a.mean.size() != b.mean.size())
    throw ValidationError("predictive moments must cover the same non-empty point set");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.mean.size(); ++i) {
    const double va = a.var[i], vb = b.var[i];
    if (!(va > 0.0) || !(vb > 0.0)) throw DomainError("non-positive predictive variance");
    const double dm = a.mean[i] - b.mean[i];
    sum += 0.25 * (va / vb + vb / va - 2.0 + dm * dm * (1.0 / va + 1.0 / vb));
  }
  return sum / static_cast<double>(a.mean.size());
}

double predictive_skl(const LawSpec& spec, const LocalGaussian& a, const LocalGaussian& b,
                      std::span<const ConfigPoint> points, double sigma2) {
  return predictive_skl(predictive_moments(spec, a, points, sigma2), predictive_moments(spec, b, points, sigma2));
}

double silhouette_score(const Eigen::MatrixXd& D, std::span<const int> labels, int num_clusters) {
  const auto m = static_cast<Eigen::Index>(labels.size());
  if (m == 0 || num_clusters < 2) return 0.0;
  std::vector<int> size(static_cast<std::size_t>(num_clusters), 0);
  for (int l : labels) ++size[static_cast<std::size_t>(l)];

  double total = 0.0;
  std::vector<double> sums(static_cast<std::size_t>(num_clusters));
  for (Eigen::Index i = 0; i < m; ++i) {
    const int li = labels[static_cast<std::size_t>(i)];
    if (size[static_cast<std::size_t>(li)] <= 1) continue;  // s(i) = 0
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) sums[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] += D(i, j);
    const double a = sums[static_cast<std::size_t>(li)] / (size[static_cast<std::size_t>(li)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < num_clusters; ++c)
      if (c != li && size[static_cast<std::size_t>(c)] > 0)
        b = std::min(b, sums[static_cast<std::size_t>(c)] / size[static_cast<std::size_t>(c)]);
    const double denom = std::max(a, b);
    if (denom > 0.0 && std::isfinite(denom)) total += (b - a) / denom;
    else if (std::isinf(b) && std::isfinite(a)) total += 1.0;
  }
  return total / static_cast<double>(m);
}

std::vector<int> cut_dendrogram(const Eigen::MatrixXd& D, int k) {
  const int m = static_cast<int>(D.rows());
  if (k < 1 || k > m) throw ValidationError("cut size out of range");
  return labels_after(agglomerate(D), m, k);
}

Partition cluster_basins(const Eigen::MatrixXd& D, int max_k, double silhouette_floor) {
  const int m = static_cast<int>(D.rows());
  if (D.rows() != D.cols()) throw ValidationError("dissimilarity matrix must be square");
  Partition out;
  out.labels.assign(static_cast<std::size_t>(m), 0);
  out.num_clusters = m > 0 ? 1 : 0;
  if (m <= 2) return out;

  const auto merges = agglomerate(D);
  const int kmax = std::min(max_k, m - 1);
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 2; k <= kmax; ++k) {
    auto labels = labels_after(merges, m, k);
    const double s = silhouette_score(D, labels, k);
    if (s > best) {
      best = s;
      out.labels = std::move(labels);
      out.num_clusters = k;
      out.silhouette = s;
    }
  }
  if (!(best >= silhouette_floor)) {
    out.labels.assign(static_cast<std::size_t>(m), 0);
    out.num_clusters = 1;
    out.silhouette = std::isfinite(best) ? best : 0.0;
  }
  return out;
}

std::vector<std::size_t> select_representatives(const Partition& partition, std::span<const double> mse) {
  if (partition.labels.size() != mse.size()) throw ValidationError("partition and mse lengths differ");
  const auto k = static_cast<std::size_t>(partition.num_clusters);
  std::vector<std::size_t> rep(k, mse.size());
  for (std::size_t i = 0; i < mse.size(); ++i) {
    const auto c = static_cast<std::size_t>(partition.labels[i]);
    if (rep[c] == mse.size() || mse[i] < mse[rep[c]]) rep[c] = i;
  }
  return rep;
}

std::vector<double> mixture_weights(std::span<const LocalGaussian> reps, std::size_t n_obs, const WeightConfig& cfg,
                                    double sigma2) {
  if (reps.empty()) throw ValidationError("mixture_weights needs at least one representative");
  if (!(cfg.temperature > 0.0)) throw ValidationError("weight temperature must be positive");
  const double n = static_cast<double>(std::max<std::size_t>(n_obs, 1));
  std::vector<double> logw(reps.size());
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const double mse = std::max(reps[k].mse, 1e-18);
    if (cfg.scheme == WeightScheme::Bic) {
      const double p = static_cast<double>(reps[k].theta.size());
      const double bic = n * std::log(mse) + p * std::log(n);
      logw[k] = -bic / (2.0 * cfg.temperature);
    } else {
      logw[k] = -n / (2.0 * sigma2) * mse - 0.5 * reps[k].log_det_precision;
    }
  }
  const double mx = *std::max_element(logw.begin(), logw.end());
  double z = 0.0;
  for (auto& v : logw) z += (v = std::exp(v - mx));
  for (auto& v : logw) v /= z;
  return logw;
}

Basin make_basin(const LawSpec& spec, ParamVector theta, Eigen::MatrixXd cov, double weight, double mse,
                 std::span<const ConfigPoint> target) {
  Basin b;
  const auto t = static_cast<Eigen::Index>(target.size());
  const auto p = static_cast<Eigen::Index>(spec.num_params());
  b.target_mean.resize(t);
  b.target_jac.resize(t, p);
  for (Eigen::Index i = 0; i < t; ++i) {
    const auto& x = target[static_cast<std::size_t>(i)];
    b.target_mean[i] = evaluate(spec, theta, x);
    b.target_jac.row(i) = scaled_jacobian(spec, theta, x).transpose();
  }
  b.theta = std::move(theta);
  b.cov = std::move(cov);
  b.weight = weight;
  b.mse = mse;
  return b;
}

double estimate_noise_variance(std::span<const FitResult> fits, double floor) {
  if (fits.empty()) return floor;
  return std::max(best_fit(fits).mse, floor);
}

std::vector<int> dedup_groups(const Eigen::MatrixXd& D, double floor) {
  const auto m = static_cast<std::size_t>(D.rows());
  std::vector<int> parent(m);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[static_cast<std::size_t>(i)] != i) i = parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
    return i;
  };
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      if (D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) < floor) {
        const int a = find(static_cast<int>(i)), b = find(static_cast<int>(j));
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
      }
  std::vector<int> raw(m);
  for (std::size_t i = 0; i < m; ++i) raw[i] = find(static_cast<int>(i));
  return relabel_by_first_appearance(raw);
}

Posterior estimate_posterior(const LawSpec& spec, const Dataset& data, std::span<const FitResult> fits,
                             std::span<const ConfigPoint> target, const PosteriorConfig& cfg) {
  if (fits.empty()) throw PosteriorError("no fits supplied; reuse the previous posterior");
  if (target.empty()) throw ValidationError("target region is empty");

  const double sigma2 = estimate_noise_variance(fits, cfg.noise_floor);
  const Eigen::VectorXd prior =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(spec.num_params()), cfg.prior_precision);

  std::vector<LocalGaussian> locals;
  std::vector<PredictiveMoments> moments;
  for (const auto& f : fits) {
    try {
      LocalGaussian g = local_covariance(spec, data, f, sigma2, prior);
      PredictiveMoments pm = predictive_moments(spec, g, target, sigma2);
      if (!pm.mean.allFinite() || !pm.var.allFinite()) continue;
      locals.push_back(std::move(g));
      moments.push_back(std::move(pm));
    } catch (const PosteriorError&) {
    } catch (const DomainError&) {
    }
  }
  if (locals.empty()) throw PosteriorError("every fit was degenerate; reuse the previous posterior");

  const auto m = static_cast<Eigen::Index>(locals.size());
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j)
      D(i, j) = D(j, i) =
          predictive_skl(moments[static_cast<std::size_t>(i)], moments[static_cast<std::size_t>(j)]);

  // Collapse near-duplicates, then cluster the distinct predictive behaviours.
  const std::vector<int> group = dedup_groups(D, cfg.dedup_floor);
  const int n_groups = *std::max_element(group.begin(), group.end()) + 1;
  std::vector<Eigen::Index> group_head(static_cast<std::size_t>(n_groups), -1);
  for (Eigen::Index i = 0; i < m; ++i) {
    auto& h = group_head[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])];
    if (h < 0) h = i;
  }
  Eigen::MatrixXd Du(n_groups, n_groups);
  for (int a = 0; a < n_groups; ++a)
    for (int b = 0; b < n_groups; ++b)
      Du(a, b) = D(group_head[static_cast<std::size_t>(a)], group_head[static_cast<std::size_t>(b)]);

  std::vector<int> group_cluster(static_cast<std::size_t>(n_groups), 0);
  int k_clusters = 1;
  if (n_groups <= 2) {
    if (cfg.max_k >= n_groups) {
      std::iota(group_cluster.begin(), group_cluster.end(), 0);
      k_clusters = n_groups;
    }
  } else {
    const Partition part = cluster_basins(Du, cfg.max_k, cfg.silhouette_floor);
    group_cluster = part.labels;
    k_clusters = part.num_clusters;
  }

  Partition full;
  full.num_clusters = k_clusters;
  full.labels.resize(static_cast<std::size_t>(m));
  std::vector<double> mses(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    full.labels[static_cast<std::size_t>(i)] = group_cluster[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])];
    mses[static_cast<std::size_t>(i)] = locals[static_cast<std::size_t>(i)].mse;
  }
  const auto reps_idx = select_representatives(full, mses);

  std::vector<LocalGaussian> reps;
  for (auto i : reps_idx) reps.push_back(locals[i]);
  const auto w = mixture_weights(reps, data.size(), cfg.weights, sigma2);

  Posterior post{spec, {}, sigma2, {target.begin(), target.end()}};
  for (std::size_t k = 0; k < reps.size(); ++k)
    post.basins.push_back(make_basin(spec, reps[k].theta, reps[k].cov, w[k], reps[k].mse, target));
  return post;
}

VarianceTerms target_variance(const Posterior& post) {
  VarianceTerms v;
  const double t = static_cast<double>(post.num_target());
  Eigen::VectorXd fbar = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(post.num_target()));
  for (const auto& b : post.basins) {
    v.intra += b.weight * (b.target_jac * b.cov * b.target_jac.transpose()).trace();
    fbar += b.weight * b.target_mean;
  }
  for (const auto& b : post.basins) v.inter += b.weight * (b.target_mean - fbar).squaredNorm();
  v.intra /= t;
  v.inter /= t;
  return v;
}

double inter_variance_pairwise(const Posterior& post) {
  double s = 0.0;
  for (std::size_t k = 0; k < post.basins.size(); ++k)
    for (std::size_t l = k + 1; l < post.basins.size(); ++l)
      s += post.basins[k].weight * post.basins[l].weight *
           (post.basins[k].target_mean - post.basins[l].target_mean).squaredNorm();
  return s / static_cast<double>(post.num_target());
}

}  // namespace activesl
