#include "activesl/fitter.hpp"

#include "activesl/errors.hpp"
#include "activesl/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace activesl {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Optimization runs in z-space: z_i = log(theta_i) for positive-flagged
// parameters, z_i = theta_i otherwise. The scaled Jacobian is exactly df/dz.
class Problem {
 public:
  Problem(const LawSpec& spec, const Dataset& data) : spec_(spec), data_(data), p_(spec.num_params()) {
    lo_.resize(static_cast<Eigen::Index>(p_));
    hi_.resize(static_cast<Eigen::Index>(p_));
    for (std::size_t i = 0; i < p_; ++i) {
      const auto& b = spec.bounds()[i];
      const auto ii = static_cast<Eigen::Index>(i);
      lo_[ii] = spec.positive()[i] ? std::log(b.lo) : b.lo;
      hi_[ii] = spec.positive()[i] ? std::log(b.hi) : b.hi;
    }
    theta_buf_.resize(static_cast<Eigen::Index>(p_));
  }

  std::size_t p() const { return p_; }
  std::size_t n() const { return data_.size(); }
  const Eigen::VectorXd& lo() const { return lo_; }
  const Eigen::VectorXd& hi() const { return hi_; }

  Eigen::VectorXd to_z(const ParamVector& theta) const {
    Eigen::VectorXd z(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double v = std::clamp(theta[i], spec_.bounds()[static_cast<std::size_t>(i)].lo,
                                  spec_.bounds()[static_cast<std::size_t>(i)].hi);
      z[i] = spec_.positive()[static_cast<std::size_t>(i)] ? std::log(v) : v;
    }
    return z.cwiseMax(lo_).cwiseMin(hi_);
  }

  ParamVector to_theta(const Eigen::VectorXd& z) const {
    ParamVector th(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const auto& b = spec_.bounds()[static_cast<std::size_t>(i)];
      const double v = spec_.positive()[static_cast<std::size_t>(i)] ? std::exp(z[i]) : z[i];
      th[i] = std::clamp(v, b.lo, b.hi);
    }
    return th;
  }

  // Residuals f(x_i) - y_i; Jacobian rows when `jac` is non-null.
  bool residuals(const Eigen::VectorXd& z, Eigen::VectorXd& r, RowMatrix* jac) {
    theta_buf_ = to_theta(z);
    const std::span<const double> th{theta_buf_.data(), p_};
    r.resize(static_cast<Eigen::Index>(n()));
    if (jac) jac->resize(static_cast<Eigen::Index>(n()), static_cast<Eigen::Index>(p_));
    for (std::size_t i = 0; i < n(); ++i) {
      const auto& obs = data_.points[i];
      double v = 0.0;
      std::span<double> row;
      if (jac) row = {jac->row(static_cast<Eigen::Index>(i)).data(), p_};
      if (!try_evaluate(spec_, th, obs.x.view(), v, row, true)) return false;
      r[static_cast<Eigen::Index>(i)] = v - obs.y;
    }
    return r.allFinite() && (!jac || jac->allFinite());
  }

 private:
  const LawSpec& spec_;
  const Dataset& data_;
  std::size_t p_;
  Eigen::VectorXd lo_, hi_;
  ParamVector theta_buf_;
};

}  // namespace

double mean_squared_error(const LawSpec& spec, const Dataset& data, const ParamVector& theta) {
  if (data.empty()) throw ValidationError("mean squared error of an empty dataset");
  double s = 0.0;
  for (const auto& obs : data.points) {
    const double r = evaluate(spec, theta, obs.x) - obs.y;
    s += r * r;
  }
  return s / static_cast<double>(data.size());
}

ParamVector sample_initial(const LawSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ParamVector th(static_cast<Eigen::Index>(spec.num_params()));
  for (std::size_t i = 0; i < spec.num_params(); ++i) {
    const auto& b = spec.bounds()[i];
    const double u = unit(rng);
    double v = 0.0;
    if (spec.positive()[i]) {
      const double llo = std::log(b.lo), lhi = std::log(b.hi);
      v = std::exp(llo + u * (lhi - llo));
    } else {
      v = b.lo + u * (b.hi - b.lo);
    }
    th[static_cast<Eigen::Index>(i)] = std::clamp(v, b.lo, b.hi);
  }
  return th;
}

FitResult fit_local(const LawSpec& spec, const Dataset& data, const ParamVector& init, const FitOptions& opts) {
  if (data.empty()) throw ValidationError("cannot fit an empty dataset");
  if (static_cast<std::size_t>(init.size()) != spec.num_params())
    throw ValidationError("initial point has wrong length");

  Problem prob(spec, data);
  const auto p = static_cast<Eigen::Index>(prob.p());
  const double inv_n = 1.0 / static_cast<double>(prob.n());

  FitResult out;
  Eigen::VectorXd z = prob.to_z(init);
  Eigen::VectorXd r, r_new;
  RowMatrix J;
  if (!prob.residuals(z, r, &J)) {
    out.theta = prob.to_theta(z);
    out.mse = kInf;
    return out;
  }
  double cost = r.squaredNorm() * inv_n;

  auto at_lower = [&](Eigen::Index i) { return z[i] <= prob.lo()[i] + 1e-12 * (1.0 + std::abs(prob.lo()[i])); };
  auto at_upper = [&](Eigen::Index i) { return z[i] >= prob.hi()[i] - 1e-12 * (1.0 + std::abs(prob.hi()[i])); };

  Eigen::MatrixXd A = J.transpose() * J;
  double lambda = 1e-3 * std::max(A.diagonal().maxCoeff(), 1e-300);
  double nu = 2.0;
  bool converged = false;
  int it = 0;

  for (; it < opts.max_iterations; ++it) {
    const Eigen::VectorXd g = (2.0 * inv_n) * (J.transpose() * r);

    // Projected gradient: components pushing against an active bound vanish.
    Eigen::VectorXd pg = g;
    std::vector<Eigen::Index> free;
    free.reserve(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) {
      if ((at_lower(i) && g[i] > 0.0) || (at_upper(i) && g[i] < 0.0)) {
        pg[i] = 0.0;
      } else {
        free.push_back(i);
      }
    }
    if (pg.lpNorm<Eigen::Infinity>() <= opts.grad_tol || cost == 0.0) {
      converged = true;
      break;
    }

    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd Af(nf, nf);
    Eigen::VectorXd bf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      bf[a] = -(J.col(free[a]).dot(r));
      for (Eigen::Index b = 0; b < nf; ++b) Af(a, b) = A(free[a], free[b]);
    }
    Eigen::VectorXd diag = Af.diagonal().cwiseMax(1e-12 * std::max(Af.diagonal().maxCoeff(), 1e-300));

    bool accepted = false;
    bool stalled = false;
    Eigen::VectorXd step;
    double cost_new = kInf;
    while (!accepted) {
      Eigen::MatrixXd M = Af;
      M.diagonal() += lambda * diag;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
      Eigen::VectorXd df = ldlt.solve(bf);
      Eigen::VectorXd z_new = z;
      if (df.allFinite()) {
        for (Eigen::Index a = 0; a < nf; ++a) {
          const Eigen::Index i = free[a];
          z_new[i] = std::clamp(z[i] + df[a], prob.lo()[i], prob.hi()[i]);
        }
      }
      step = z_new - z;
      cost_new = kInf;
      if (step.allFinite() && prob.residuals(z_new, r_new, nullptr)) cost_new = r_new.squaredNorm() * inv_n;

      if (cost_new < cost) {
        const double predicted = (r.squaredNorm() - (r + J * step).squaredNorm()) * inv_n;
        const double rho = predicted > 0.0 ? (cost - cost_new) / predicted : 0.0;
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        accepted = true;
        const double decrease = cost - cost_new;
        const bool tiny_step = step.norm() <= 1e-12 * (z.norm() + 1e-12);
        z += step;
        if (!prob.residuals(z, r, &J)) break;  // cannot happen: residuals at z_new were finite
        A = J.transpose() * J;
        cost = r.squaredNorm() * inv_n;
        if (decrease <= 1e-15 * cost_new || tiny_step) stalled = true;
      } else {
        lambda *= nu;
        nu *= 2.0;
        if (!(lambda < 1e30) || step.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + z.lpNorm<Eigen::Infinity>())) {
          stalled = true;
          break;
        }
      }
    }
    if (stalled) {
      // No representable descent step remains: stationary to machine precision.
      converged = true;
      ++it;
      break;
    }
  }

  out.theta = prob.to_theta(z);
  out.iterations = it;
  out.converged = converged;
  try {
    out.mse = mean_squared_error(spec, data, out.theta);
  } catch (const DomainError&) {
    out.mse = kInf;
    out.converged = false;
  }
  if (!std::isfinite(out.mse)) out.converged = false;
  return out;
}

FitReport fit_multistart(const LawSpec& spec, const Dataset& data, int n_starts, std::uint64_t seed,
                         const FitOptions& opts) {
  if (data.empty()) throw ValidationError("cannot fit an empty dataset");
  if (n_starts < 1) throw ValidationError("n_starts must be at least 1");

  FitReport report;
  for (int s = 0; s < n_starts; ++s) {
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(s)}));
    const ParamVector init = sample_initial(spec, rng);
    FitResult fit = fit_local(spec, data, init, opts);
    fit.start_index = static_cast<std::size_t>(s);
    if (fit.converged && std::isfinite(fit.mse)) {
      report.fits.push_back(std::move(fit));
    } else {
      ++report.dropped;
    }
  }
  std::stable_sort(report.fits.begin(), report.fits.end(),
                   [](const FitResult& a, const FitResult& b) { return a.mse < b.mse; });
  if (report.fits.empty())
    report.diagnostic = "none of " + std::to_string(n_starts) + " starts converged on " +
                        std::to_string(data.size()) + " observations";
  return report;
}

const FitResult& best_fit(std::span<const FitResult> results) {
  if (results.empty()) throw ValidationError("best_fit of an empty result list");
  const FitResult* best = &results.front();
  for (const auto& r : results) {
    if (r.mse < best->mse || (r.mse == best->mse && r.start_index < best->start_index)) best = &r;
  }
  return *best;
}

}  // namespace activesl
