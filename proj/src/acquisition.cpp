#include "activesl/acquisition.hpp"

#include "activesl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace activesl {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMaxRefinement = 64.0;

double log_normal_pdf(double y, double mean, double var) {
  const double d = y - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

std::vector<MixtureComponent> mixture_from(const Posterior& post, std::span<const BasinLinearization> lin) {
  std::vector<MixtureComponent> out(lin.size());
  for (std::size_t k = 0; k < lin.size(); ++k) out[k] = {post.basins[k].weight, lin[k].mean, lin[k].var};
  return out;
}

// Log of the mixture density and per-component log weighted densities at y.
struct NodeTerms {
  std::vector<double> log_wphi;
  double log_mix = kNegInf;
};

void node_terms(std::span<const MixtureComponent> mix, double y, NodeTerms& out) {
  out.log_wphi.resize(mix.size());
  double mx = kNegInf;
  for (std::size_t r = 0; r < mix.size(); ++r) {
    const double lw = mix[r].weight > 0.0 ? std::log(mix[r].weight) : kNegInf;
    out.log_wphi[r] = lw + log_normal_pdf(y, mix[r].mean, mix[r].var);
    mx = std::max(mx, out.log_wphi[r]);
  }
  if (mx == kNegInf) {
    out.log_mix = kNegInf;
    return;
  }
  double s = 0.0;
  for (double v : out.log_wphi) s += std::exp(v - mx);
  out.log_mix = mx + std::log(s);
}

}  // namespace

double QuadratureGrid::span() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

QuadratureGrid make_grid(std::span<const MixtureComponent> mixture, const GridConfig& cfg) {
  if (cfg.nodes < 2) throw ValidationError("quadrature needs at least two nodes per interval");
  struct Interval {
    double lo, hi;
  };
  std::vector<Interval> iv;
  for (const auto& c : mixture) {
    if (!(c.weight > 0.0)) continue;
    const double sd = std::sqrt(c.var);
    iv.push_back({c.mean - cfg.width * sd, c.mean + cfg.width * sd});
  }
  if (iv.empty())
    for (const auto& c : mixture) {
      const double sd = std::sqrt(c.var);
      iv.push_back({c.mean - cfg.width * sd, c.mean + cfg.width * sd});
    }
  std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });

  // One uniform grid per connected component, at the finest member step.
  const double max_nodes = static_cast<double>(cfg.nodes) * kMaxRefinement;
  QuadratureGrid grid;
  std::size_t i = 0;
  while (i < iv.size()) {
    double lo = iv[i].lo, hi = iv[i].hi;
    double step = (iv[i].hi - iv[i].lo) / (cfg.nodes - 1);
    std::size_t j = i + 1;
    for (; j < iv.size() && iv[j].lo <= hi; ++j) {
      hi = std::max(hi, iv[j].hi);
      step = std::min(step, (iv[j].hi - iv[j].lo) / (cfg.nodes - 1));
    }
    i = j;
    if (!(hi > lo) || !(step > 0.0)) continue;
    const double n = std::min(std::ceil((hi - lo) / step - 1e-9) + 1.0, max_nodes);
    const auto count = static_cast<std::size_t>(n);
    const double h = (hi - lo) / static_cast<double>(count - 1);
    const std::size_t base = grid.nodes.size();
    for (std::size_t q = 0; q < count; ++q)
      grid.nodes.push_back(q + 1 == count ? hi : lo + static_cast<double>(q) * h);
    grid.weights.resize(grid.nodes.size(), h);
    grid.weights[base] = grid.weights.back() = 0.5 * h;
  }
  return grid;
}

std::vector<BasinLinearization> linearize_candidate(const Posterior& post, const ConfigPoint& x) {
  std::vector<BasinLinearization> out(post.basins.size());
  for (std::size_t k = 0; k < post.basins.size(); ++k) {
    const auto& b = post.basins[k];
    const Eigen::VectorXd j = scaled_jacobian(post.spec, b.theta, x);
    const Eigen::VectorXd u = b.cov * j;
    out[k].mean = evaluate(post.spec, b.theta, x);
    out[k].var = post.noise_var + j.dot(u);
    out[k].gain = (b.target_jac * u) / out[k].var;
  }
  return out;
}

std::vector<MixtureComponent> predictive_mixture(const Posterior& post, const ConfigPoint& x) {
  const auto lin = linearize_candidate(post, x);
  return mixture_from(post, lin);
}

double intra_utility(const Posterior& post, std::span<const BasinLinearization> lin) {
  // ||J Sigma j||^2 / s^2 == s^2 ||g||^2
  double s = 0.0;
  for (std::size_t k = 0; k < lin.size(); ++k) s += post.basins[k].weight * lin[k].var * lin[k].gain.squaredNorm();
  return s / static_cast<double>(post.num_target());
}

double intra_utility(const Posterior& post, const ConfigPoint& x) {
  return intra_utility(post, linearize_candidate(post, x));
}

Eigen::MatrixXd rank_one_update(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& j, double sigma2) {
  const Eigen::VectorXd u = sigma * j;
  const double s2 = sigma2 + j.dot(u);
  if (!(s2 > 0.0)) throw DomainError("rank-one update with non-positive predictive variance");
  Eigen::MatrixXd out = sigma - (u * u.transpose()) / s2;
  return 0.5 * (out + out.transpose());
}

std::vector<PairCoefficients> pair_coefficients(const Posterior& post, std::span<const BasinLinearization> lin) {
  std::vector<PairCoefficients> out;
  const std::size_t K = post.basins.size();
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t l = k + 1; l < K; ++l) {
      PairCoefficients pc;
      pc.k = k;
      pc.l = l;
      pc.a = post.basins[k].target_mean - post.basins[l].target_mean - lin[k].gain * lin[k].mean +
             lin[l].gain * lin[l].mean;
      pc.b = lin[k].gain - lin[l].gain;
      pc.A = pc.a.squaredNorm();
      pc.B = 2.0 * pc.a.dot(pc.b);
      pc.C = pc.b.squaredNorm();
      out.push_back(std::move(pc));
    }
  return out;
}

double inter_utility(const Posterior& post, std::span<const BasinLinearization> lin, const GridConfig& cfg) {
  const std::size_t K = post.basins.size();
  if (K <= 1) return 0.0;
  const auto mix = mixture_from(post, lin);
  const QuadratureGrid grid = make_grid(mix, cfg);

  // Expand each pair around the mixture mean c, y = c + t, to keep the
  // quadratic well conditioned: ||a + b c + b t||^2.
  double c = 0.0;
  for (const auto& m : mix) c += m.weight * m.mean;
  const auto pairs = pair_coefficients(post, lin);
  struct Shifted {
    double A, B, C, log_ww;
  };
  std::vector<Shifted> sh;
  double v_before = 0.0;
  for (const auto& pc : pairs) {
    const Eigen::VectorXd a = pc.a + pc.b * c;
    const double wk = post.basins[pc.k].weight, wl = post.basins[pc.l].weight;
    const double log_ww = (wk > 0.0 && wl > 0.0) ? std::log(wk) + std::log(wl) : kNegInf;
    sh.push_back({a.squaredNorm(), 2.0 * a.dot(pc.b), pc.C, log_ww});
    v_before += wk * wl * (post.basins[pc.k].target_mean - post.basins[pc.l].target_mean).squaredNorm();
  }

  NodeTerms nt;
  double expected_after = 0.0;
  for (std::size_t q = 0; q < grid.nodes.size(); ++q) {
    const double y = grid.nodes[q];
    node_terms(mix, y, nt);
    if (nt.log_mix == kNegInf) continue;
    const double t = y - c;
    double acc = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double lw = sh[i].log_ww;
      if (lw == kNegInf) continue;
      const double lphi_k = nt.log_wphi[pairs[i].k] - std::log(post.basins[pairs[i].k].weight);
      const double lphi_l = nt.log_wphi[pairs[i].l] - std::log(post.basins[pairs[i].l].weight);
      const double density = std::exp(lw + lphi_k + lphi_l - nt.log_mix);
      acc += density * (sh[i].A + t * (sh[i].B + t * sh[i].C));
    }
    expected_after += grid.weights[q] * acc;
  }
  return (v_before - expected_after) / static_cast<double>(post.num_target());
}

double inter_utility(const Posterior& post, const ConfigPoint& x, const GridConfig& cfg) {
  if (post.basins.size() <= 1) return 0.0;
  return inter_utility(post, linearize_candidate(post, x), cfg);
}

std::vector<double> expected_updated_weights(const Posterior& post, const ConfigPoint& x, const GridConfig& cfg) {
  const auto mix = predictive_mixture(post, x);
  const QuadratureGrid grid = make_grid(mix, cfg);
  std::vector<double> out(mix.size(), 0.0);
  NodeTerms nt;
  for (std::size_t q = 0; q < grid.nodes.size(); ++q) {
    node_terms(mix, grid.nodes[q], nt);
    if (nt.log_mix == kNegInf) continue;
    const double p_y = std::exp(nt.log_mix);
    for (std::size_t k = 0; k < mix.size(); ++k) {
      const double w_plus = std::exp(nt.log_wphi[k] - nt.log_mix);
      out[k] += grid.weights[q] * w_plus * p_y;
    }
  }
  return out;
}

std::vector<CandidateScore> score_candidates(const Posterior& post, std::span<const Candidate> candidates,
                                             double alpha, const GridConfig& cfg, double remaining_budget) {
  if (!(alpha >= 0.0)) throw ValidationError("cost exponent alpha must be non-negative");
  std::vector<CandidateScore> out;
  out.reserve(candidates.size());
  for (const auto& cand : candidates) {
    if (cand.cost > remaining_budget) continue;
    if (!(cand.cost > 0.0)) throw ValidationError("candidate cost must be positive");
    CandidateScore s;
    s.pool_index = cand.pool_index;
    s.cost = cand.cost;
    try {
      const auto lin = linearize_candidate(post, cand.x);
      s.dv_intra = intra_utility(post, lin);
      s.dv_inter = post.basins.size() > 1 ? inter_utility(post, lin, cfg) : 0.0;
    } catch (const DomainError&) {
      continue;  // some basin's law is undefined at this candidate
    }
    s.score = (s.dv_intra + s.dv_inter) / std::pow(cand.cost, alpha);
    if (!std::isfinite(s.score)) continue;
    out.push_back(s);
  }
  return out;
}

double dopt_score(const LawSpec& spec, const LocalGaussian& best, const ConfigPoint& x, double sigma2) {
  const Eigen::VectorXd j = scaled_jacobian(spec, best.theta, x);
  return std::log1p(j.dot(best.cov * j) / sigma2);
}

Posterior single_basin_posterior(const LawSpec& spec, const LocalGaussian& best, std::span<const ConfigPoint> target,
                                 double sigma2) {
  Posterior post{spec, {}, sigma2, {target.begin(), target.end()}};
  post.basins.push_back(make_basin(spec, best.theta, best.cov, 1.0, best.mse, target));
  return post;
}

double vopt_score(const LawSpec& spec, const LocalGaussian& best, std::span<const ConfigPoint> target,
                  const ConfigPoint& x, double sigma2) {
  return intra_utility(single_basin_posterior(spec, best, target, sigma2), x);
}

}  // namespace activesl
