#include "activesl/acquisition.hpp"
#include "activesl/errors.hpp"
#include "activesl/fitter.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
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

struct LinearCase {
  LawSpec spec{"linear", 2};
  Dataset data;
  std::vector<ConfigPoint> target;
  Posterior post{spec, {}, 1e-8, {}};
  Eigen::MatrixXd phi;
};

// Linear model with a zero-prior one-basin posterior.
LinearCase linear_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LinearCase c;
  std::normal_distribution<double> z(0.0, 0.1);
  for (int i = 0; i < 9; ++i) {
    const ConfigPoint x{oracle::uniform(rng, -2, 2), oracle::uniform(rng, -2, 2)};
    c.data.add(x, 1.0 + 0.5 * x[0] - 0.25 * x[1] + z(rng));
  }
  c.target = {{4.0, 4.0}, {5.0, -3.0}, {-4.0, 6.0}};
  PosteriorConfig cfg;
  cfg.prior_precision = 0.0;
  const auto fits = fit_multistart(c.spec, c.data, 2, seed).fits;
  c.post = estimate_posterior(c.spec, c.data, fits, c.target, cfg);
  std::vector<ConfigPoint> xs;
  for (const auto& o : c.data.points) xs.push_back(o.x);
  c.phi = oracle::linear_design(xs);
  return c;
}

double v_intra_linear(const Eigen::MatrixXd& cov, const std::vector<ConfigPoint>& target) {
  const Eigen::MatrixXd jt = oracle::linear_design(target);
  return (jt * cov * jt.transpose()).trace() / static_cast<double>(target.size());
}

}  // namespace

TEST_CASE("quadrature grid") {
  const std::vector<MixtureComponent> mix{{0.5, 0.0, 1.0}, {0.5, 1.0, 4.0}, {0.0, 100.0, 1.0}};
  const auto g = make_grid(mix);
  CHECK(std::is_sorted(g.nodes.begin(), g.nodes.end()));
  CHECK(std::adjacent_find(g.nodes.begin(), g.nodes.end()) == g.nodes.end());
  CHECK(g.span() == doctest::Approx(13.0 - (-11.0)));
  CHECK(g.nodes.front() == doctest::Approx(-11.0));
  CHECK(g.nodes.back() == doctest::Approx(13.0));

  // Disjoint supports form separate components with nothing in the gap.
  const std::vector<MixtureComponent> far{{0.5, 0.0, 1.0}, {0.5, 100.0, 1.0}};
  const auto gf = make_grid(far);
  CHECK(gf.span() == doctest::Approx(24.0));
  CHECK(gf.nodes.size() == 2u * kDefaultQuadratureNodes);
  CHECK(gf.integrate([](double y) { return oracle::normal_pdf(y, 0.0, 1.0) + oracle::normal_pdf(y, 100.0, 1.0); }) ==
        doctest::Approx(2.0).epsilon(1e-7));
  CHECK_THROWS_AS(make_grid(far, {1, 6.0}), ValidationError);
}

TEST_CASE("intra utility scalar cases") {
  const Posterior p = oracle::slope_posterior(0.7, 1.0, 1.0, {{2.0}});
  CHECK(intra_utility(p, ConfigPoint{1.0}) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(intra_utility(p, ConfigPoint{0.0}) == 0.0);
  CHECK(vopt_score(p.spec, LocalGaussian{vec({0.7}), Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1), 0.0, 0.0},
                   p.target, ConfigPoint{0.0}, 1.0) == 0.0);
}

TEST_CASE("intra utility equals exact linear-Gaussian variance reduction") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const LinearCase c = linear_case(seed);
    REQUIRE(c.post.num_basins() == 1);
    const double s2 = c.post.noise_var;
    const Eigen::MatrixXd before = s2 * (c.phi.transpose() * c.phi).inverse();
    std::mt19937_64 rng(seed + 100);
    for (int rep = 0; rep < 5; ++rep) {
      const ConfigPoint x{oracle::uniform(rng, -3, 3), oracle::uniform(rng, -3, 3)};
      const Eigen::VectorXd r = oracle::linear_row(x);
      const Eigen::MatrixXd after = s2 * (c.phi.transpose() * c.phi + r * r.transpose()).inverse();
      const double exact = v_intra_linear(before, c.target) - v_intra_linear(after, c.target);
      CHECK(std::abs(intra_utility(c.post, x) - exact) <= 1e-10 * std::max(1.0, exact));

      const auto g = local_covariance(c.spec, c.data, FitResult{c.post.basins[0].theta, 0.0, true, 0, 0}, s2, 0.0);
      CHECK(std::abs(vopt_score(c.spec, g, c.target, x, s2) - exact) <= 1e-10 * std::max(1.0, exact));

      const Eigen::MatrixXd upd = rank_one_update(c.post.basins[0].cov, r, s2);
      CHECK((upd - after).norm() <= 1e-10 * std::max(1.0, after.norm()));
    }
  }
}

TEST_CASE("rank-one update") {
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  CHECK(rank_one_update(one, Eigen::VectorXd::Ones(1), 1.0)(0, 0) == doctest::Approx(0.5));
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    const int p = 1 + rep % 5;
    const Eigen::MatrixXd S = oracle::random_spd(rng, p, oracle::log_uniform(rng, 1e-3, 10));
    CHECK(rank_one_update(S, Eigen::VectorXd::Zero(p), 0.1) == S);
    Eigen::VectorXd j(p);
    for (int i = 0; i < p; ++i) j[i] = oracle::uniform(rng, -2, 2);
    const Eigen::MatrixXd U = rank_one_update(S, j, oracle::log_uniform(rng, 1e-4, 1));
    CHECK((U - U.transpose()).norm() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(U).eigenvalues().minCoeff() >= -1e-12 * S.norm());
    Eigen::MatrixXd J(3, p);
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < p; ++k) J(i, k) = oracle::uniform(rng, -1, 1);
    CHECK((J * U * J.transpose()).trace() <= (J * S * J.transpose()).trace() + 1e-12);
  }
}

TEST_CASE("predictive mixture") {
  std::mt19937_64 rng(4);
  const Posterior one = oracle::random_posterior(rng, 1);
  const auto m1 = predictive_mixture(one, ConfigPoint{30.0});
  REQUIRE(m1.size() == 1);
  CHECK(m1[0].mean == evaluate(one.spec, one.basins[0].theta, ConfigPoint{30.0}));

  for (int rep = 0; rep < 5; ++rep) {
    const Posterior post = oracle::random_posterior(rng, 2 + rep % 3);
    const ConfigPoint x{oracle::log_uniform(rng, 2, 50)};
    const auto mix = predictive_mixture(post, x);
    double mean = 0.0;
    for (const auto& c : mix) {
      CHECK(c.var >= post.noise_var);
      mean += c.weight * c.mean;
    }
    // Monte-Carlo mean of the linearized posterior predictive.
    std::vector<double> w;
    for (const auto& b : post.basins) w.push_back(b.weight);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::normal_distribution<double> z(0.0, 1.0);
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t k = pick(rng);
      const auto& b = post.basins[k];
      const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(b.cov).matrixL();
      Eigen::VectorXd e(3);
      for (int q = 0; q < 3; ++q) e[q] = z(rng);
      const double y = evaluate(post.spec, b.theta, x) + scaled_jacobian(post.spec, b.theta, x).dot(L * e) +
                       std::sqrt(post.noise_var) * z(rng);
      s += y;
      s2 += y * y;
    }
    const double mc = s / n;
    const double se = std::sqrt((s2 / n - mc * mc) / n);
    CHECK(std::abs(mc - mean) <= 3.0 * se);
  }
}

TEST_CASE("inter utility special cases") {
  std::mt19937_64 rng(5);
  const Posterior one = oracle::random_posterior(rng, 1);
  CHECK(inter_utility(one, ConfigPoint{10.0}) == 0.0);

  Posterior twin = oracle::random_posterior(rng, 1);
  twin.basins.push_back(twin.basins[0]);
  twin.basins[0].weight = twin.basins[1].weight = 0.5;
  CHECK(target_variance(twin).inter == 0.0);
  CHECK(std::abs(inter_utility(twin, ConfigPoint{10.0})) < 1e-12);
}

TEST_CASE("pair coefficients") {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    const Posterior post = oracle::random_posterior(rng, 2 + rep % 4, 1 + rep % 4);
    const ConfigPoint x{oracle::log_uniform(rng, 2, 100)};
    const auto lin = linearize_candidate(post, x);
    const auto ref = oracle::linearize(post, x);
    for (const auto& pc : pair_coefficients(post, lin)) {
      const Eigen::VectorXd a = post.basins[pc.k].target_mean - post.basins[pc.l].target_mean -
                                ref[pc.k].g * ref[pc.k].m + ref[pc.l].g * ref[pc.l].m;
      const Eigen::VectorXd b = ref[pc.k].g - ref[pc.l].g;
      CHECK((pc.a - a).norm() <= 1e-12 * std::max(1.0, a.norm()));
      CHECK((pc.b - b).norm() <= 1e-12 * std::max(1.0, b.norm()));
      CHECK(pc.A == doctest::Approx(pc.a.squaredNorm()).epsilon(1e-14));
      CHECK(pc.B == doctest::Approx(2.0 * pc.a.dot(pc.b)).epsilon(1e-14));
      CHECK(pc.C == doctest::Approx(pc.b.squaredNorm()).epsilon(1e-14));
      CHECK(pc.B * pc.B <= 4.0 * pc.A * pc.C + 1e-9);
      // f_k^+(y) - f_l^+(y) = a + b y
      const double y = ref[pc.k].m + 0.3;
      const Eigen::VectorXd direct = (post.basins[pc.k].target_mean + ref[pc.k].g * (y - ref[pc.k].m)) -
                                     (post.basins[pc.l].target_mean + ref[pc.l].g * (y - ref[pc.l].m));
      CHECK(std::abs(direct.squaredNorm() - (pc.A + pc.B * y + pc.C * y * y)) <=
            1e-9 * std::max(1.0, direct.squaredNorm()));
    }
  }
}

TEST_CASE("inter utility agrees with Monte Carlo") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 4; ++rep) {
    const Posterior post = oracle::random_posterior(rng, 2 + rep % 2);
    const ConfigPoint x{oracle::log_uniform(rng, 20, 200)};
    const double q = inter_utility(post, x);
    const auto mc = oracle::mc_inter_utility(post, x, 200000, 1000 + static_cast<std::uint64_t>(rep));
    CHECK_MESSAGE(std::abs(q - mc.mean) <= 3.0 * mc.se, "quad ", q, " mc ", mc.mean, " se ", mc.se);
  }
}

TEST_CASE("expected updated weights equal prior weights") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const Posterior post = oracle::random_posterior(rng, 2 + rep % 3);
    const auto ew = expected_updated_weights(post, ConfigPoint{oracle::log_uniform(rng, 2, 1e3)});
    for (std::size_t k = 0; k < ew.size(); ++k) CHECK(std::abs(ew[k] - post.basins[k].weight) < 1e-6);
  }
}

TEST_CASE("quadrature converges") {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    const Posterior post = oracle::random_posterior(rng, 2 + rep % 3);
    const ConfigPoint x{oracle::log_uniform(rng, 2, 1e3)};
    const double a = inter_utility(post, x);
    const double b = inter_utility(post, x, {2 * kDefaultQuadratureNodes - 1, 6.0});
    CHECK(std::abs(a - b) <= 1e-6 * std::max(std::abs(b), 1e-12));
  }
}

TEST_CASE("candidate scores") {
  std::mt19937_64 rng(10);
  const Posterior post = oracle::random_posterior(rng, 3);
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < 12; ++i) cands.push_back({i, ConfigPoint{oracle::log_uniform(rng, 2, 500)}, oracle::log_uniform(rng, 1, 100)});

  const auto s = score_candidates(post, cands, 0.4);
  REQUIRE(s.size() == cands.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s[i].pool_index == i);
    const double intra = intra_utility(post, cands[i].x);
    const double inter = inter_utility(post, cands[i].x);
    CHECK(s[i].dv_intra == doctest::Approx(intra).epsilon(1e-14));
    CHECK(s[i].dv_inter == doctest::Approx(inter).epsilon(1e-14));
    CHECK(s[i].score == doctest::Approx((intra + inter) / std::pow(cands[i].cost, 0.4)).epsilon(1e-14));
    CHECK(s[i].dv_intra >= -1e-12);
  }

  // alpha = 0 ranks by raw utility.
  const auto s0 = score_candidates(post, cands, 0.0);
  for (const auto& c : s0) CHECK(c.score == c.dv_intra + c.dv_inter);

  // Same point at two prices.
  std::vector<Candidate> pair{{0, ConfigPoint{40.0}, 1.0}, {1, ConfigPoint{40.0}, 16.0}};
  const auto sp = score_candidates(post, pair, 0.5);
  CHECK(sp[1].score == doctest::Approx(sp[0].score / 4.0).epsilon(1e-14));

  // Budget filter and empty pool.
  const auto sb = score_candidates(post, cands, 0.4, {}, 10.0);
  for (const auto& c : sb) CHECK(c.cost <= 10.0);
  std::size_t affordable = 0;
  for (const auto& c : cands) affordable += c.cost <= 10.0;
  CHECK(sb.size() == affordable);
  CHECK(score_candidates(post, std::vector<Candidate>{}, 0.4).empty());
  CHECK_THROWS_AS(score_candidates(post, cands, -1.0), ValidationError);

  // Uniform cost scaling leaves the argmax unchanged.
  auto scaled = cands;
  for (auto& c : scaled) c.cost *= 1e6;
  auto argmax = [](const std::vector<CandidateScore>& v) {
    return std::max_element(v.begin(), v.end(), [](auto& a, auto& b) { return a.score < b.score; })->pool_index;
  };
  CHECK(argmax(score_candidates(post, scaled, 0.4)) == argmax(s));
}

TEST_CASE("candidates outside the law's domain are skipped") {
  std::mt19937_64 rng(11);
  const Posterior post = oracle::random_posterior(rng, 2);
  std::vector<Candidate> cands{{0, ConfigPoint{10.0}, 1.0}, {1, ConfigPoint{-1.0}, 1.0}, {2, ConfigPoint{20.0}, 1.0}};
  const auto s = score_candidates(post, cands);
  REQUIRE(s.size() == 2);
  CHECK(s[0].pool_index == 0);
  CHECK(s[1].pool_index == 2);
}

TEST_CASE("D-optimal score") {
  const Posterior p = oracle::slope_posterior(1.0, 1.0, 1.0, {{1.0}});
  LocalGaussian g{vec({1.0}), Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1), 0.0, 0.0};
  CHECK(dopt_score(p.spec, g, ConfigPoint{0.0}, 1.0) == 0.0);
  CHECK(dopt_score(p.spec, g, ConfigPoint{1.0}, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  std::mt19937_64 rng(12);
  LawSpec s("sum_power", 2);
  for (int rep = 0; rep < 10; ++rep) {
    const ParamVector th = vec({1.0, oracle::log_uniform(rng, 10, 500), oracle::log_uniform(rng, 10, 500),
                                oracle::uniform(rng, 0.2, 0.6), oracle::uniform(rng, 0.2, 0.6)});
    Dataset data;
    for (int i = 0; i < 12; ++i) {
      const ConfigPoint x{oracle::log_uniform(rng, 10, 1e4), oracle::log_uniform(rng, 10, 1e4)};
      data.add(x, evaluate(s, th, x));
    }
    const double sigma2 = oracle::log_uniform(rng, 1e-4, 1e-1);
    const auto best = local_covariance(s, data, FitResult{th, 0.0, true, 0, 0}, sigma2, 1e-6);
    const ConfigPoint x{oracle::log_uniform(rng, 1e3, 1e5), oracle::log_uniform(rng, 1e3, 1e5)};
    const Eigen::VectorXd j = scaled_jacobian(s, th, x);
    const double ref = std::log((best.precision + j * j.transpose() / sigma2).determinant()) -
                       std::log(best.precision.determinant());
    CHECK(std::abs(dopt_score(s, best, x, sigma2) - ref) <= 1e-9 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("V-optimal score is the one-basin intra utility") {
  std::mt19937_64 rng(13);
  const Posterior post = oracle::random_posterior(rng, 1);
  const auto& b = post.basins[0];
  LocalGaussian g{b.theta, b.cov, b.cov.inverse(), 0.0, b.mse};
  for (int rep = 0; rep < 10; ++rep) {
    const ConfigPoint x{oracle::log_uniform(rng, 2, 500)};
    CHECK(vopt_score(post.spec, g, post.target, x, post.noise_var) == intra_utility(post, x));
  }
}
