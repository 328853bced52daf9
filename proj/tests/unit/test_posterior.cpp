#include "activesl/errors.hpp"
#include "activesl/fitter.hpp"
#include "activesl/posterior.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace activesl;

namespace {

ParamVector vec(std::initializer_list<double> v) {
  ParamVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

FitResult fit_at(ParamVector th, double mse, std::size_t start = 0) { return {std::move(th), mse, true, 1, start}; }

Dataset linear_data(std::mt19937_64& rng, std::size_t n, std::size_t d, double noise) {
  LawSpec s("linear", d);
  Dataset data;
  std::normal_distribution<double> z(0.0, noise);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(d);
    for (auto& v : x) v = oracle::uniform(rng, -2.0, 2.0);
    double y = 0.5;
    for (double v : x) y += 0.3 * v;
    data.add(ConfigPoint(x), y + (noise > 0 ? z(rng) : 0.0));
  }
  return data;
}

std::vector<ConfigPoint> xs_of(const Dataset& d) {
  std::vector<ConfigPoint> out;
  for (const auto& o : d.points) out.push_back(o.x);
  return out;
}

// Two planted clusters of `n_a` and `n_b` items: within-group distances
// <= 1e-6, between-group >= 10.
Eigen::MatrixXd planted(std::mt19937_64& rng, int n_a, int n_b, std::vector<int>& truth) {
  const int m = n_a + n_b;
  truth.assign(static_cast<std::size_t>(m), 0);
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < n_b; ++i) truth[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      D(i, j) = D(j, i) = truth[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(j)]
                              ? oracle::uniform(rng, 0.0, 1e-6)
                              : oracle::uniform(rng, 10.0, 50.0);
  return D;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

}  // namespace

TEST_CASE("local covariance of a linear model is the Bayesian regression covariance") {
  std::mt19937_64 rng(1);
  for (std::size_t d : {1u, 2u, 3u}) {
    const Dataset data = linear_data(rng, 12, d, 0.1);
    LawSpec s("linear", d);
    const double sigma2 = 0.37;
    const auto g = local_covariance(s, data, fit_at(ParamVector::Zero(static_cast<Eigen::Index>(d + 1)), 0.1), sigma2,
                                    0.0);
    const Eigen::MatrixXd phi = oracle::linear_design(xs_of(data));
    const Eigen::MatrixXd exact = sigma2 * (phi.transpose() * phi).inverse();
    CHECK(oracle::frobenius_rel(g.cov, exact) < 1e-8);
    CHECK((g.cov - g.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * g.cov.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("scalar curvature with a prior") {
  LawSpec s("linear", 1);
  Dataset data;
  data.add({0.0}, 1.0);
  const auto g = local_covariance(s, data, fit_at(vec({1.0, 0.0}), 0.0), 1.0, 0.5);
  CHECK(g.precision(0, 0) == doctest::Approx(1.5));
  CHECK(g.cov(0, 0) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("local covariance matches an eigendecomposition oracle") {
  std::mt19937_64 rng(2);
  LawSpec s("sum_power", 2);
  for (int rep = 0; rep < 10; ++rep) {
    ParamVector th = vec({oracle::uniform(rng, 0.5, 2.0), oracle::log_uniform(rng, 10, 500), oracle::log_uniform(rng, 10, 500),
                          oracle::uniform(rng, 0.2, 0.6), oracle::uniform(rng, 0.2, 0.6)});
    Dataset data;
    const bool diagonal = rep % 2 == 1;  // rank-deficient curvature exercises the floor
    for (int i = 0; i < 10; ++i) {
      const double a = oracle::log_uniform(rng, 10, 1e4);
      const ConfigPoint x{a, diagonal ? a : oracle::log_uniform(rng, 10, 1e4)};
      data.add(x, evaluate(s, th, x));
    }
    const double sigma2 = 1e-3;
    const auto g = local_covariance(s, data, fit_at(th, 0.0), sigma2, 1e-6);

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(5, 5) * 1e-6;
    for (const auto& o : data.points) {
      Eigen::VectorXd j(5);
      for (Eigen::Index i = 0; i < 5; ++i) j[i] = oracle::reference_derivative("sum_power", th, o.x, i, i > 0);
      H += j * j.transpose() / sigma2;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(1e-10 * es.eigenvalues().maxCoeff());
    const Eigen::MatrixXd inv = es.eigenvectors() * lam.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    // The finite-difference curvature carries ~1e-10 relative error, which the
    // floored spectrum can amplify by its condition number.
    const double tol = diagonal ? 1e-3 : 1e-6;
    CHECK(oracle::frobenius_rel(g.cov, inv) < tol);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ec(g.cov);
    CHECK(ec.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("local covariance rejects bad noise") {
  LawSpec s("linear", 1);
  Dataset data;
  data.add({1.0}, 1.0);
  CHECK_THROWS_AS(local_covariance(s, data, fit_at(vec({0, 0}), 0.0), 0.0, 1e-6), ValidationError);
}

TEST_CASE("predictive symmetric KL") {
  PredictiveMoments a{Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 1.0)};
  PredictiveMoments b{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 1.0)};
  CHECK(predictive_skl(a, b) == doctest::Approx(0.5));
  CHECK(predictive_skl(a, a) == 0.0);

  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 1 + rep % 7;
    PredictiveMoments p{Eigen::VectorXd(n), Eigen::VectorXd(n)}, q{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    double ref = 0.0;
    for (int i = 0; i < n; ++i) {
      p.mean[i] = oracle::uniform(rng, -3, 3);
      q.mean[i] = oracle::uniform(rng, -3, 3);
      p.var[i] = oracle::log_uniform(rng, 1e-3, 10);
      q.var[i] = oracle::log_uniform(rng, 1e-3, 10);
      const double dm = p.mean[i] - q.mean[i];
      ref += 0.25 * (p.var[i] / q.var[i] + q.var[i] / p.var[i] - 2.0 + dm * dm * (1.0 / p.var[i] + 1.0 / q.var[i]));
    }
    ref /= n;
    CHECK(oracle::relative_error(predictive_skl(p, q), ref) < 1e-12);
    CHECK(predictive_skl(p, q) == predictive_skl(q, p));
  }
}

TEST_CASE("clustering edge cases") {
  CHECK(cluster_basins(Eigen::MatrixXd::Zero(1, 1)).num_clusters == 1);
  CHECK(cluster_basins(Eigen::MatrixXd::Zero(6, 6)).num_clusters == 1);
  Eigen::MatrixXd two(2, 2);
  two << 0, 100, 100, 0;
  CHECK(cluster_basins(two).num_clusters == 1);

  // Evenly spread items have no convincing cut.
  Eigen::MatrixXd line(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) line(i, j) = std::abs(i - j) == 0 ? 0.0 : 1.0;
  CHECK(cluster_basins(line).num_clusters == 1);
}

TEST_CASE("planted partitions are recovered") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<int> truth;
    const int na = 1 + rep % 5, nb = 2 + rep % 3;
    const Eigen::MatrixXd D = planted(rng, na, nb, truth);
    const Partition p = cluster_basins(D);
    CHECK(p.num_clusters == 2);
    CHECK(same_partition(p.labels, truth));
    CHECK(p.silhouette > 0.6);  // singletons score 0
  }
}

TEST_CASE("silhouette and dendrogram cuts") {
  Eigen::MatrixXd D(4, 4);
  D << 0, 1, 4, 5, 1, 0, 4, 5, 4, 4, 0, 2, 5, 5, 2, 0;
  const auto labels = cut_dendrogram(D, 2);
  CHECK(labels == std::vector<int>{0, 0, 1, 1});
  // a(i), b(i) by hand: item0 a=1 b=4.5; item1 a=1 b=4.5; item2 a=2 b=4; item3 a=2 b=5
  const double ref = ((4.5 - 1) / 4.5 + (4.5 - 1) / 4.5 + (4.0 - 2) / 4.0 + (5.0 - 2) / 5.0) / 4.0;
  CHECK(silhouette_score(D, labels, 2) == doctest::Approx(ref).epsilon(1e-12));
  CHECK(cut_dendrogram(D, 4) == std::vector<int>{0, 1, 2, 3});
  CHECK(cut_dendrogram(D, 1) == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("representatives are the per-cluster minimum") {
  Partition one{{0, 0, 0}, 1, 0.0};
  CHECK(select_representatives(one, std::vector<double>{0.3, 0.1, 0.2}) == std::vector<std::size_t>{1});
  Partition single{{0}, 1, 0.0};
  CHECK(select_representatives(single, std::vector<double>{0.7}) == std::vector<std::size_t>{0});

  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const int m = 1 + rep % 12, k = 1 + rep % std::min(m, 4);
    Partition p;
    p.num_clusters = k;
    std::vector<double> mse(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      p.labels.push_back(i < k ? i : static_cast<int>(rng() % static_cast<unsigned>(k)));
      mse[static_cast<std::size_t>(i)] = std::floor(oracle::uniform(rng, 0, 5));  // ties on purpose
    }
    const auto reps = select_representatives(p, mse);
    for (int c = 0; c < k; ++c) {
      std::size_t best = mse.size();
      for (std::size_t i = 0; i < mse.size(); ++i)
        if (p.labels[i] == c && (best == mse.size() || mse[i] < mse[best])) best = i;
      CHECK(reps[static_cast<std::size_t>(c)] == best);
    }
  }
}

TEST_CASE("mixture weights") {
  auto rep = [](double mse, int p, double logdet = 0.0) {
    LocalGaussian g;
    g.theta = ParamVector::Zero(p);
    g.mse = mse;
    g.log_det_precision = logdet;
    return g;
  };
  CHECK(mixture_weights(std::vector{rep(0.1, 3)}, 10, {}, 1.0)[0] == 1.0);
  const auto eq = mixture_weights(std::vector{rep(0.1, 3), rep(0.1, 3)}, 10, {}, 1.0);
  CHECK(eq[0] == doctest::Approx(0.5));
  CHECK(eq[1] == doctest::Approx(0.5));

  const auto w = mixture_weights(std::vector{rep(0.01, 3), rep(0.04, 3)}, 10, {}, 1.0);
  const double w1 = 1.0 / (1.0 + std::exp(-5.0 * std::log(4.0)));
  CHECK(w[0] == doctest::Approx(w1).epsilon(1e-12));
  CHECK(w[0] + w[1] == doctest::Approx(1.0).epsilon(1e-15));

  WeightConfig hot{WeightScheme::Bic, 5.0};
  const auto wt = mixture_weights(std::vector{rep(0.01, 3), rep(0.04, 3)}, 10, hot, 1.0);
  CHECK(wt[0] == doctest::Approx(1.0 / (1.0 + std::exp(-std::log(4.0)))).epsilon(1e-12));

  WeightConfig lap{WeightScheme::Laplace, 1.0};
  const double sigma2 = 0.02;
  const auto wl = mixture_weights(std::vector{rep(0.01, 3, 2.0), rep(0.015, 3, -1.0)}, 10, lap, sigma2);
  const double m1 = std::exp(-10.0 / (2 * sigma2) * 0.01) * std::exp(-0.5 * 2.0);
  const double m2 = std::exp(-10.0 / (2 * sigma2) * 0.015) * std::exp(0.5 * 1.0);
  CHECK(wl[0] == doctest::Approx(m1 / (m1 + m2)).epsilon(1e-12));
}

TEST_CASE("one fit gives one basin") {
  std::mt19937_64 rng(6);
  const Dataset data = linear_data(rng, 8, 1, 0.05);
  LawSpec s("linear", 1);
  const auto fits = fit_multistart(s, data, 1, 0).fits;
  const std::vector<ConfigPoint> target{{5.0}, {6.0}};
  const Posterior post = estimate_posterior(s, data, fits, target);
  REQUIRE(post.num_basins() == 1);
  CHECK(post.basins[0].weight == 1.0);
  CHECK(post.basins[0].target_mean[0] == evaluate(s, fits[0].theta, target[0]));
  CHECK(post.basins[0].target_jac.row(1).transpose() == param_jacobian(s, fits[0].theta, target[1]));
  CHECK(post.noise_var == doctest::Approx(std::max(fits[0].mse, 1e-8)));
  CHECK_THROWS_AS(estimate_posterior(s, data, std::vector<FitResult>{}, target), PosteriorError);
}

TEST_CASE("noiseless linear posterior reproduces Bayesian regression") {
  std::mt19937_64 rng(7);
  const Dataset data = linear_data(rng, 10, 2, 0.0);
  LawSpec s("linear", 2);
  const auto fits = fit_multistart(s, data, 4, 1).fits;
  const std::vector<ConfigPoint> target{{3.0, 3.0}, {-3.0, 4.0}, {5.0, 0.0}};
  PosteriorConfig cfg;
  cfg.prior_precision = 0.0;
  const Posterior post = estimate_posterior(s, data, fits, target, cfg);
  REQUIRE(post.num_basins() == 1);
  CHECK(post.noise_var == 1e-8);
  const Eigen::MatrixXd phi = oracle::linear_design(xs_of(data));
  const Eigen::MatrixXd jt = oracle::linear_design(target);
  const Eigen::MatrixXd exact = jt * (post.noise_var * (phi.transpose() * phi).inverse()) * jt.transpose();
  const auto& b = post.basins[0];
  CHECK(oracle::frobenius_rel(b.target_jac * b.cov * b.target_jac.transpose(), exact) < 1e-8);
  const Eigen::VectorXd mean_exact = jt * (phi.transpose() * phi).ldlt().solve(phi.transpose() * [&] {
    Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) y[static_cast<Eigen::Index>(i)] = data.points[i].y;
    return y;
  }());
  CHECK((b.target_mean - mean_exact).norm() <= 1e-8 * mean_exact.norm());
}

TEST_CASE("well separated planted fits give two basins with oracle weights") {
  // Exchangeable exponents: both fits explain diagonal data equally well but
  // disagree off the diagonal.
  LawSpec s("sum_power", 2, {{0.0, 10.0}, {1.0, 1e4}, {1.0, 1e4}, {0.05, 1.5}, {0.05, 1.5}},
            {false, true, true, true, true});
  const ParamVector a = vec({1.0, 50.0, 20.0, 0.6, 0.3});
  const ParamVector b = vec({1.0, 20.0, 50.0, 0.3, 0.6});
  Dataset data;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 0.01);
  for (int i = 0; i < 12; ++i) {
    const double v = 10.0 * std::pow(1e3, i / 11.0);
    data.add({v, v}, evaluate(s, a, {v, v}) + z(rng));
  }
  std::vector<FitResult> fits{fit_at(a, mean_squared_error(s, data, a), 0),
                              fit_at(b, mean_squared_error(s, data, b) * 1.3, 1)};
  const std::vector<ConfigPoint> target{{1e3, 1e6}, {1e6, 1e3}};
  const Posterior post = estimate_posterior(s, data, fits, target);
  REQUIRE(post.num_basins() == 2);
  const double sigma2 = std::max(fits[0].mse, 1e-8);
  std::vector<LocalGaussian> reps{local_covariance(s, data, fits[0], sigma2, 1e-6),
                                  local_covariance(s, data, fits[1], sigma2, 1e-6)};
  const auto w = mixture_weights(reps, data.size(), {}, sigma2);
  CHECK(post.basins[0].weight == doctest::Approx(w[0]).epsilon(1e-12));
  CHECK(post.basins[1].weight == doctest::Approx(w[1]).epsilon(1e-12));
  CHECK(post.basins[0].weight + post.basins[1].weight == doctest::Approx(1.0).epsilon(1e-12));
  // With three or more distinct groups, planted structure goes through the silhouette cut.
  std::vector<FitResult> many;
  for (int i = 0; i < 4; ++i) many.push_back(fit_at(a, fits[0].mse, many.size()));
  for (int i = 0; i < 3; ++i) many.push_back(fit_at(b, fits[1].mse, many.size()));
  many[1].theta[0] += 1e-4;  // near-duplicate, distinct after dedup
  const Posterior p2 = estimate_posterior(s, data, many, target);
  CHECK(p2.num_basins() == 2);
}

TEST_CASE("posterior invariants on random fits") {
  std::mt19937_64 rng(9);
  LawSpec s("saturating_power", 1);
  const ParamVector truth = vec({1.0, 3.0, 2.0, 0.5});
  Dataset data;
  std::normal_distribution<double> z(0.0, 0.02);
  for (int i = 0; i < 10; ++i) {
    const ConfigPoint x{std::pow(2.0, i * 0.6)};
    data.add(x, evaluate(s, truth, x) + z(rng));
  }
  const std::vector<ConfigPoint> target{{200.0}, {500.0}, {1000.0}};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto fits = fit_multistart(s, data, 32, seed).fits;
    REQUIRE_FALSE(fits.empty());
    for (auto scheme : {WeightScheme::Bic, WeightScheme::Laplace}) {
      PosteriorConfig cfg;
      cfg.weights.scheme = scheme;
      const Posterior post = estimate_posterior(s, data, fits, target, cfg);
      double wsum = 0.0;
      for (const auto& b : post.basins) {
        wsum += b.weight;
        CHECK((b.cov - b.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, b.cov.cwiseAbs().maxCoeff()));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.cov);
        CHECK(es.eigenvalues().minCoeff() >= -1e-12);
      }
      CHECK(std::abs(wsum - 1.0) < 1e-12);
      CHECK(post.noise_var >= 1e-8);
      CHECK(post.num_basins() <= static_cast<std::size_t>(kDefaultMaxBasins));

      // Representatives are mutually distinct at the dedup floor.
      const double sigma2 = post.noise_var;
      std::vector<LocalGaussian> reps;
      for (const auto& b : post.basins) {
        LocalGaussian g;
        g.theta = b.theta;
        g.cov = b.cov;
        reps.push_back(g);
      }
      const auto k = static_cast<Eigen::Index>(reps.size());
      Eigen::MatrixXd D = Eigen::MatrixXd::Zero(k, k);
      for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) {
          D(i, j) = predictive_skl(s, reps[static_cast<std::size_t>(i)], reps[static_cast<std::size_t>(j)], target, sigma2);
          if (i == j) CHECK(D(i, j) == 0.0);
        }
      CHECK((D - D.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, D.cwiseAbs().maxCoeff()));
      const auto groups = dedup_groups(D, cfg.dedup_floor);
      for (Eigen::Index i = 0; i < k; ++i) CHECK(groups[static_cast<std::size_t>(i)] == i);
    }
  }
}

TEST_CASE("identical fits collapse to one basin") {
  LawSpec s("sum_power", 1);
  Dataset data;
  const ParamVector th = vec({1.0, 5.0, 0.4});
  for (int i = 1; i <= 6; ++i) data.add({std::pow(3.0, i)}, evaluate(s, th, {std::pow(3.0, i)}) + 0.01 * (i % 2));
  std::vector<FitResult> fits;
  for (std::size_t i = 0; i < 10; ++i) fits.push_back(fit_at(th, 1e-4, i));
  const Posterior post = estimate_posterior(s, data, fits, std::vector<ConfigPoint>{{1e4}});
  CHECK(post.num_basins() == 1);
}

TEST_CASE("variance decomposition forms agree") {
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 30; ++rep) {
    const Posterior post = oracle::random_posterior(rng, 1 + rep % 6, 1 + rep % 5);
    const auto v = target_variance(post);
    const double pair = inter_variance_pairwise(post);
    CHECK(std::abs(v.inter - pair) <= 1e-12 * std::max(1.0, std::abs(pair)));
    CHECK(v.inter == doctest::Approx(oracle::inter_before(post)).epsilon(1e-12));
    CHECK(v.intra >= 0.0);
  }
}
