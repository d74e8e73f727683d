#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "multires/errors.hpp"
#include "multires/samplers.hpp"
#include "multires/slice.hpp"
#include "test_util.hpp"

using namespace multires;
using testutil::batch_means;
using testutil::within_se;

namespace {

struct Gaussian {
  Vector mean;
  Matrix cov;
};

// Dense posterior of all B (county-major, then p * T + j) given one location
// per county, built straight from the likelihood sums.
Gaussian dense_B_posterior(const Dataset& data, const std::vector<ClusterLocation>& loc,
                           bool period_mean = false, double jitter = kDefaultJitter) {
  const int N = data.num_counties(), P = data.num_predictors(), T = data.num_years();
  const int K = P * T;
  Matrix prec = Matrix::Zero(N * K, N * K);
  Vector lin = Vector::Zero(N * K);
  for (int l = 0; l < N; ++l) {
    Matrix c = rq_covariance(loc[l].kappa, data.grid().time_points, jitter);
    Matrix cov = Matrix::Zero(K, K);
    Matrix li = loc[l].lambda_y.inverse();
    for (int p = 0; p < P; ++p)
      for (int q = 0; q < P; ++q) cov.block(p * T, q * T, T, T) = li(p, q) * c;
    prec.block(l * K, l * K, K, K) = cov.inverse();
  }
  for (const auto& o : data.observations()) {
    Vector a = Vector::Zero(N * K);
    const auto& ys = data.periods().years(o.period);
    const double w = period_mean ? 1.0 / ys.size() : 1.0;
    for (int l : data.graph().members[o.block])
      for (int j : ys)
        for (int p = 0; p < P; ++p) a(l * K + p * T + j) += w * data.predictors(l)(p, j);
    prec += a * a.transpose() / o.sigma2;
    lin += a * o.y / o.sigma2;
  }
  Matrix cov = prec.inverse();
  return {cov * lin, cov};
}

ClusterLocation unit_location(int P) {
  ClusterLocation loc;
  loc.lambda_y = Matrix::Identity(P, P);
  loc.kappa = {1.0, 1.0, 1.0};
  loc.lambda_x = Matrix::Identity(P, P);
  return loc;
}

ChainConfig quiet_config() {
  ChainConfig c;
  c.cache_check_every = 0;
  return c;
}

// One county, self-block, T = 2: both single years plus the pooled period.
Dataset scalar_dataset(double y1, double y2, double y12, double s2) {
  return testutil::make_dataset(1, testutil::simple_periods(2), {{0}},
                                {{0, 0, y1, s2}, {0, 1, y2, s2}, {0, 2, y12, 2 * s2}},
                                {Matrix::Ones(1, 2)});
}

double scalar_gamma_mean_var_check(const std::vector<double>& xs, double shape, double rate) {
  auto e = batch_means(xs);
  CHECK(within_se(e, shape / rate));
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - shape / rate) * (xs[i] - shape / rate);
  auto v = batch_means(sq);
  CHECK(within_se(v, shape / (rate * rate)));
  return e.mean;
}

Dataset random_graph(int N, int P, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<int>> blocks;
  for (int l = 0; l < N; ++l) blocks.push_back({l});
  blocks.push_back({0, 1, 2});
  blocks.push_back({1, 3});
  std::vector<int> all(N);
  for (int l = 0; l < N; ++l) all[l] = l;
  blocks.push_back(all);
  std::vector<Observation> obs;
  for (int b = 0; b < static_cast<int>(blocks.size()); ++b)
    for (int q = 0; q < 9; ++q)
      if (q == 8 || rng.uniform() < 0.5) obs.push_back({b, q, rng.normal(5.0, 3.0), rng.uniform(0.2, 2.0)});
  std::vector<Matrix> x(N, Matrix::Ones(P, 5));
  for (auto& m : x)
    for (int p = 1; p < P; ++p)
      for (int j = 0; j < 5; ++j) m(p, j) = rng.uniform(0.5, 1.5);
  return testutil::make_dataset(N, PeriodTable::five_year_default(), blocks, obs, x);
}

}  // namespace

TEST_CASE("residual targets") {
  SUBCASE("self-block target is the observation") {
    auto d = scalar_dataset(1.0, 2.0, 3.0, 1.0);
    std::vector<Matrix> B{Matrix::Constant(1, 2, 7.0)};
    ResidualCache cache(d, B, false);
    auto r = residual_for(0, cache, B, d, false);
    CHECK(r == std::vector<double>{1.0, 2.0, 3.0});
  }
  SUBCASE("matches from-scratch recomputation on a random graph") {
    const int N = 5, P = 2;
    auto d = random_graph(N, P, 3);
    Rng rng(4);
    std::vector<Matrix> B(N);
    for (auto& b : B) b = Matrix::Random(P, 5);
    for (bool pm : {false, true}) {
      ResidualCache cache(d, B, pm);
      for (int l = 0; l < N; ++l) {
        auto got = residual_for(l, cache, B, d, pm);
        const auto& rs = d.observations_of_county(l);
        REQUIRE(got.size() == rs.size());
        for (std::size_t k = 0; k < rs.size(); ++k) {
          const auto& o = d.observations()[rs[k]];
          const auto& ys = d.periods().years(o.period);
          double others = 0.0;
          for (int m : d.graph().members[o.block])
            if (m != l)
              for (int j : ys)
                for (int p = 0; p < P; ++p)
                  others += (pm ? 1.0 / ys.size() : 1.0) * d.predictors(m)(p, j) * B[m](p, j);
          CHECK(std::abs(got[k] - (o.y - others)) < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("elliptical slice update matches the conjugate posterior") {
  auto d = scalar_dataset(1.5, -0.5, 2.0, 0.5);
  std::vector<ClusterLocation> loc{unit_location(1)};
  auto post = dense_B_posterior(d, loc);
  auto cfg = quiet_config();
  std::vector<Matrix> B{Matrix::Zero(1, 2)};
  ResidualCache cache(d, B, false);
  Rng rng(11);
  const int n = 20000;
  std::vector<double> b0(n), b1(n);
  for (int i = 0; i < n; ++i) {
    ess_update_B(0, B, cache, d, loc[0], cfg, rng);
    b0[i] = B[0](0, 0);
    b1[i] = B[0](0, 1);
  }
  CHECK(within_se(batch_means(b0), post.mean(0)));
  CHECK(within_se(batch_means(b1), post.mean(1)));
  std::vector<double> v0(n);
  for (int i = 0; i < n; ++i) v0[i] = (b0[i] - post.mean(0)) * (b0[i] - post.mean(0));
  CHECK(within_se(batch_means(v0), post.cov(0, 0)));
  CHECK(cache.max_relative_drift(d, B, false) < 1e-9);
}

TEST_CASE("elliptical slice update reproduces the prior under a flat likelihood") {
  auto d = scalar_dataset(100.0, -100.0, 5.0, 1e12);
  ClusterLocation loc = unit_location(1);
  loc.lambda_y(0, 0) = 4.0;
  auto cfg = quiet_config();
  std::vector<Matrix> B{Matrix::Zero(1, 2)};
  ResidualCache cache(d, B, false);
  Rng rng(12);
  std::vector<double> m(20000), v(20000);
  for (std::size_t i = 0; i < m.size(); ++i) {
    ess_update_B(0, B, cache, d, loc, cfg, rng);
    m[i] = B[0](0, 1);
    v[i] = m[i] * m[i];
  }
  CHECK(within_se(batch_means(m), 0.0));
  CHECK(within_se(batch_means(v), 0.25 * (1.0 + kDefaultJitter)));
}

TEST_CASE("alternating updates match the joint posterior of two counties sharing a block") {
  // Counties publish single years; the shared block publishes the pooled period.
  auto d = testutil::make_dataset(2, testutil::simple_periods(2), {{0}, {1}, {0, 1}},
                                  {{0, 0, 1.0, 1.0}, {1, 1, 2.0, 0.5}, {2, 2, 4.0, 0.3}},
                                  {Matrix::Ones(1, 2), Matrix::Ones(1, 2)});
  std::vector<ClusterLocation> loc{unit_location(1), unit_location(1)};
  loc[1].kappa = {0.5, 2.0, 1.0};
  auto post = dense_B_posterior(d, loc);
  auto cfg = quiet_config();
  std::vector<Matrix> B{Matrix::Zero(1, 2), Matrix::Zero(1, 2)};
  ResidualCache cache(d, B, false);
  Rng rng(13);
  const int n = 40000;
  std::vector<std::vector<double>> xs(4, std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < 2; ++l) ess_update_B(l, B, cache, d, loc[l], cfg, rng);
    for (int k = 0; k < 4; ++k) xs[k][i] = B[k / 2](0, k % 2);
  }
  for (int k = 0; k < 4; ++k) CHECK(within_se(batch_means(xs[k]), post.mean(k)));
}

TEST_CASE("joint coefficient draw") {
  const int N = 5, P = 2;
  auto d = random_graph(N, P, 21);
  Rng rng(22);
  BaseMeasure base = BaseMeasure::standard(P);
  ClusterState clusters = ClusterState::single_cluster(N, unit_location(P), 1.0, Mode::baseline);
  clusters.locations.push_back(base.draw(Mode::baseline, rng));
  clusters.locations[1].kappa = {2.0, 1.5, 0.7};
  clusters.labels = {0, 1, 0, 1, 1};
  clusters.counts = {2, 3};
  std::vector<ClusterLocation> loc;
  for (int l = 0; l < N; ++l) loc.push_back(clusters.locations[clusters.labels[l]]);
  for (bool pm : {false, true}) {
    auto post = dense_B_posterior(d, loc, pm);
    auto mean = conditional_mean_B(d, clusters, d.grid().time_points, kDefaultJitter, pm);
    for (int l = 0; l < N; ++l)
      for (int p = 0; p < P; ++p)
        for (int j = 0; j < 5; ++j) CHECK(std::abs(mean[l](p, j) - post.mean(l * 10 + p * 5 + j)) < 1e-8);
  }
  auto post = dense_B_posterior(d, loc);
  const int n = 4000;
  std::vector<std::vector<double>> xs(3, std::vector<double>(n));
  const int idx[3] = {0, 17, 43};
  for (int i = 0; i < n; ++i) {
    auto B = gibbs_draw_B_joint(d, clusters, d.grid().time_points, kDefaultJitter, false, rng);
    for (int k = 0; k < 3; ++k) xs[k][i] = B[idx[k] / 10](idx[k] % 10 / 5, idx[k] % 5);
  }
  for (int k = 0; k < 3; ++k) {
    CHECK(within_se(batch_means(xs[k]), post.mean(idx[k])));
    std::vector<double> sq(n);
    for (int i = 0; i < n; ++i) sq[i] = std::pow(xs[k][i] - post.mean(idx[k]), 2);
    CHECK(within_se(batch_means(sq), post.cov(idx[k], idx[k]), 3.5));
  }
}

TEST_CASE("kappa log kernel matches a dense evaluation") {
  Rng rng(31);
  const int P = 2, T = 5;
  std::vector<double> t{0, 1, 2, 3, 4};
  std::vector<Matrix> B(3);
  for (auto& b : B) b = Matrix::Random(P, T);
  Matrix lambda(2, 2);
  lambda << 1.5, 0.2, 0.2, 0.8;
  std::vector<int> members{0, 2};
  Matrix S = kappa_sufficient_stat(B, members, lambda);
  const RQParams k{0.7, 1.9, 2.5};
  const GammaPrior prior{2.0, 3.0};
  for (int d = 0; d < 3; ++d) {
    Matrix c = rq_covariance(k, t);
    Matrix ci = c.inverse();
    double trace = 0.0;
    for (int l : members) trace += (ci * B[l].transpose() * lambda * B[l]).trace();
    const double want = -0.5 * 2 * P * std::log(c.determinant()) - 0.5 * trace +
                        (prior.shape - 1) * std::log(k[d]) - prior.rate * k[d];
    CHECK(std::abs(kappa_log_kernel(k, d, S, 2, P, t, kDefaultJitter, prior) - want) < 1e-8);
  }
  CHECK(std::isinf(kappa_log_kernel({-1.0, 1.0, 1.0}, 0, S, 2, P, t, kDefaultJitter, prior)));
}

TEST_CASE("kappa update with no members reproduces the gamma prior") {
  std::vector<double> t{0, 1, 2};
  BaseMeasure base = BaseMeasure::standard(1);
  auto cfg = quiet_config();
  ClusterLocation loc = unit_location(1);
  Rng rng(32);
  std::vector<Matrix> B;
  std::vector<int> none;
  for (int d = 0; d < 3; ++d) {
    std::vector<double> xs(20000);
    for (auto& x : xs) {
      mh_update_kappa(loc, d, B, none, t, base, cfg, rng);
      x = loc.kappa[d];
    }
    scalar_gamma_mean_var_check(xs, 1.0, 1.0);
  }
}

TEST_CASE("kappa update recovers the generating inverse scale") {
  const int P = 2, n = 40;
  std::vector<double> t{0, 1, 2, 3, 4};
  Rng rng(33);
  Matrix c0 = rq_covariance({1.0, 1.0, 1.0}, t);
  std::vector<Matrix> B(n);
  for (auto& b : B) b = matnorm_sample(Matrix::Identity(P, P), c0, rng);
  std::vector<int> members(n);
  for (int l = 0; l < n; ++l) members[l] = l;
  BaseMeasure base = BaseMeasure::standard(P);
  auto cfg = quiet_config();
  ClusterLocation loc = unit_location(P);
  loc.kappa = {3.0, 0.3, 5.0};
  std::vector<double> k1;
  for (int s = 0; s < 5000; ++s) {
    for (int d = 0; d < 3; ++d) mh_update_kappa(loc, d, B, members, t, base, cfg, rng);
    if (s >= 500) k1.push_back(loc.kappa[0]);
  }
  std::nth_element(k1.begin(), k1.begin() + k1.size() / 2, k1.end());
  CHECK(std::abs(k1[k1.size() / 2] - 1.0) < 0.25);
}

TEST_CASE("lambda_y update") {
  BaseMeasure base = BaseMeasure::standard(1);
  Rng rng(41);
  SUBCASE("scalar case is a gamma") {
    // df 2 + 1, inverse scale 1 + 2^2: shape 1.5, rate 2.5.
    std::vector<double> t{0};
    std::vector<Matrix> B{Matrix::Constant(1, 1, 2.0)};
    std::vector<int> members{0};
    ClusterLocation loc = unit_location(1);
    std::vector<double> xs(20000);
    for (auto& x : xs) {
      gibbs_update_lambda_y(loc, B, members, t, base, 0.0, rng);
      x = loc.lambda_y(0, 0);
    }
    scalar_gamma_mean_var_check(xs, 1.5, 2.5);
  }
  SUBCASE("empty cluster draws from the base Wishart") {
    BaseMeasure b2 = BaseMeasure::standard(2);
    std::vector<double> t{0, 1};
    std::vector<Matrix> B;
    std::vector<int> none;
    ClusterLocation loc = unit_location(2);
    std::vector<double> d0(20000), off(20000);
    for (std::size_t i = 0; i < d0.size(); ++i) {
      gibbs_update_lambda_y(loc, B, none, t, b2, kDefaultJitter, rng);
      d0[i] = loc.lambda_y(0, 0);
      off[i] = loc.lambda_y(0, 1);
    }
    CHECK(within_se(batch_means(d0), 3.0));
    CHECK(within_se(batch_means(off), 0.0));
  }
}

TEST_CASE("delta update") {
  Rng rng(51);
  SUBCASE("scalar conjugate mean") {
    // With a single year the CAR precision vanishes and the mean is x.
    ClusterLocation loc = unit_location(1);
    Matrix x = Matrix::Constant(1, 1, 2.5);
    Matrix m = delta_conditional_mean(x, Matrix::Constant(1, 1, 3.0), loc, chain_adjacency(1));
    CHECK(std::abs(m(0, 0) - 2.5) < 1e-10);
  }
  SUBCASE("diagonal prior factorizes cellwise") {
    ClusterLocation loc = unit_location(2);
    loc.tau_x = 1.7;
    loc.rho_x = 0.0;
    Matrix omega = chain_adjacency(4);
    Matrix h = Matrix::Zero(2, 2);
    h.diagonal() << 0.8, 2.0;
    Matrix x = Matrix::Random(2, 4);
    Matrix m = delta_conditional_mean(x, h, loc, omega);
    for (int p = 0; p < 2; ++p)
      for (int j = 0; j < 4; ++j) {
        const double prior_prec = loc.tau_x * omega.row(j).sum();
        CHECK(std::abs(m(p, j) - h(p, p) * x(p, j) / (h(p, p) + prior_prec)) < 1e-8);
      }
  }
  SUBCASE("draw moments match the dense posterior") {
    ClusterLocation loc = unit_location(2);
    loc.lambda_x << 1.2, 0.3, 0.3, 0.9;
    loc.tau_x = 0.8;
    loc.rho_x = 0.6;
    Matrix omega = chain_adjacency(3);
    Matrix h(2, 2);
    h << 1.5, -0.4, -0.4, 0.7;
    Matrix x = Matrix::Random(2, 3);
    Matrix q = car_precision({loc.tau_x, loc.rho_x, omega});
    Matrix phi(6, 6);
    for (int p = 0; p < 2; ++p)
      for (int r = 0; r < 2; ++r)
        phi.block(p * 3, r * 3, 3, 3) = h(p, r) * Matrix::Identity(3, 3) + loc.lambda_x(p, r) * q;
    Vector xv(6);
    xv << x.row(0).transpose(), x.row(1).transpose();
    Matrix hk(6, 6);
    for (int p = 0; p < 2; ++p)
      for (int r = 0; r < 2; ++r) hk.block(p * 3, r * 3, 3, 3) = h(p, r) * Matrix::Identity(3, 3);
    Matrix cov = phi.inverse();
    Vector mean = cov * hk * xv;
    Matrix m = delta_conditional_mean(x, h, loc, omega);
    for (int i = 0; i < 6; ++i) CHECK(std::abs(m(i / 3, i % 3) - mean(i)) < 1e-10);
    const int n = 20000;
    std::vector<double> a(n), v(n);
    for (int i = 0; i < n; ++i) {
      Matrix dr = gibbs_update_delta(x, h, loc, omega, rng);
      a[i] = dr(1, 2);
      v[i] = std::pow(dr(0, 1) - mean(1), 2);
    }
    CHECK(within_se(batch_means(a), mean(5)));
    CHECK(within_se(batch_means(v), cov(1, 1)));
  }
  SUBCASE("vanishing data precision gives the prior") {
    ClusterLocation loc = unit_location(1);
    loc.tau_x = 2.0;
    loc.rho_x = 0.5;
    Matrix omega = chain_adjacency(2);
    Matrix prior_cov = car_precision({2.0, 0.5, omega}).inverse();
    Matrix x = Matrix::Constant(1, 2, 10.0);
    std::vector<double> a(20000), v(20000);
    for (std::size_t i = 0; i < a.size(); ++i) {
      Matrix dr = gibbs_update_delta(x, Matrix::Constant(1, 1, 1e-12), loc, omega, rng);
      a[i] = dr(0, 0);
      v[i] = dr(0, 0) * dr(0, 0);
    }
    CHECK(within_se(batch_means(a), 0.0));
    CHECK(within_se(batch_means(v), prior_cov(0, 0)));
  }
}

TEST_CASE("tau update") {
  Matrix omega = chain_adjacency(3);
  const GammaPrior prior{1.0, 1.0};
  SUBCASE("shape and rate match a dense trace") {
    Rng rng(61);
    ClusterLocation loc = unit_location(2);
    loc.lambda_x << 1.3, 0.4, 0.4, 0.6;
    loc.rho_x = -0.3;
    std::vector<Matrix> delta(4);
    for (auto& m : delta) m = Matrix::Random(2, 3);
    std::vector<int> members{0, 2, 3};
    auto post = tau_posterior(delta, members, loc, omega, prior);
    Matrix R = car_precision({1.0, -0.3, omega});
    // Kronecker form: vec' (Lambda_x (x) R) vec with row stacking.
    double trace = 0.0;
    for (int l : members) {
      Vector v(6);
      v << delta[l].row(0).transpose(), delta[l].row(1).transpose();
      Matrix k(6, 6);
      for (int p = 0; p < 2; ++p)
        for (int r = 0; r < 2; ++r) k.block(p * 3, r * 3, 3, 3) = loc.lambda_x(p, r) * R;
      trace += v.dot(k * v);
    }
    CHECK(std::abs(post.shape - (1.0 + 0.5 * 3 * 3 * 2)) < 1e-10);
    CHECK(std::abs(post.rate - (1.0 + 0.5 * trace)) < 1e-10);
  }
  SUBCASE("zero deltas leave only the prior rate") {
    Rng rng(62);
    ClusterLocation loc = unit_location(1);
    BaseMeasure base = BaseMeasure::standard(1);
    std::vector<Matrix> delta(2, Matrix::Zero(1, 3));
    std::vector<int> members{0, 1};
    std::vector<double> xs(20000);
    for (auto& x : xs) {
      gibbs_update_tau(loc, delta, members, omega, base, rng);
      x = loc.tau_x;
    }
    scalar_gamma_mean_var_check(xs, 1.0 + 0.5 * 2 * 3, 1.0);
  }
  SUBCASE("empty cluster draws from the prior") {
    Rng rng(63);
    ClusterLocation loc = unit_location(1);
    BaseMeasure base = BaseMeasure::standard(1);
    std::vector<Matrix> delta;
    std::vector<int> none;
    std::vector<double> xs(20000);
    for (auto& x : xs) {
      gibbs_update_tau(loc, delta, none, omega, base, rng);
      x = loc.tau_x;
    }
    scalar_gamma_mean_var_check(xs, 1.0, 1.0);
  }
}

TEST_CASE("rho update") {
  Matrix omega = chain_adjacency(4);
  auto cfg = quiet_config();
  SUBCASE("kernel matches a dense evaluation") {
    Matrix S = Matrix::Random(4, 4);
    S = S * S.transpose();
    for (double rho : {-0.8, 0.1, 0.95}) {
      Matrix d = omega.rowwise().sum().asDiagonal();
      const double want =
          0.5 * 3 * 2 * std::log((d - rho * omega).determinant()) + 0.5 * 1.4 * rho * (omega * S).trace();
      CHECK(std::abs(rho_log_kernel(rho, 1.4, omega, S, 3, 2) - want) < 1e-8);
    }
    CHECK(std::isinf(rho_log_kernel(1.0, 1.4, omega, S, 3, 2)));
  }
  SUBCASE("no information gives a uniform") {
    Rng rng(71);
    ClusterLocation loc = unit_location(1);
    std::vector<Matrix> delta;
    std::vector<int> none;
    std::vector<double> xs;
    for (int i = 0; i < 20000; ++i) {
      slice_update_rho(loc, delta, none, omega, cfg, rng);
      if (i % 4 == 0) xs.push_back(loc.rho_x);
    }
    const double ks = testutil::ks_statistic(xs, [](double r) { return (r + 1.0) / 2.0; });
    CHECK(ks < testutil::ks_critical_1pct(xs.size()));
  }
  SUBCASE("a large positive trace pulls rho up") {
    Rng rng(72);
    ClusterLocation loc = unit_location(1);
    std::vector<Matrix> delta{Matrix::Constant(1, 4, 3.0)};
    std::vector<int> members{0};
    std::vector<double> xs(5000);
    for (auto& x : xs) {
      slice_update_rho(loc, delta, members, omega, cfg, rng);
      x = loc.rho_x;
    }
    CHECK(batch_means(xs).mean > 0.0);
  }
}

TEST_CASE("lambda_x update is a gamma when P = 1") {
  Rng rng(75);
  Matrix omega = chain_adjacency(3);
  ClusterLocation loc = unit_location(1);
  loc.tau_x = 1.5;
  loc.rho_x = 0.4;
  BaseMeasure base = BaseMeasure::standard(1);
  std::vector<Matrix> delta{Matrix::Random(1, 3), Matrix::Random(1, 3)};
  std::vector<int> members{0, 1};
  Matrix q = car_precision({1.5, 0.4, omega});
  double quad = 0.0;
  for (auto& d : delta) quad += (d * q * d.transpose())(0, 0);
  std::vector<double> xs(20000);
  for (auto& x : xs) {
    gibbs_update_lambda_x(loc, delta, members, omega, base, rng);
    x = loc.lambda_x(0, 0);
  }
  scalar_gamma_mean_var_check(xs, 0.5 * (2.0 + 2 * 3), 0.5 * (1.0 + quad));
}

TEST_CASE("H_x update") {
  Rng rng(81);
  SUBCASE("scalar case is a gamma") {
    auto d = testutil::make_dataset(2, testutil::simple_periods(3), {{0}, {1}},
                                    {{0, 3, 1.0, 1.0}, {1, 3, 1.0, 1.0}},
                                    {Matrix::Ones(1, 3), Matrix::Ones(1, 3)});
    BaseMeasure base = BaseMeasure::standard(1);
    std::vector<Matrix> delta{Matrix::Constant(1, 3, 0.5), Matrix::Constant(1, 3, -1.0)};
    const double ss = 3 * 0.25 + 3 * 4.0;
    std::vector<double> xs(20000);
    for (auto& x : xs) x = gibbs_update_hx(d, delta, base, rng)(0, 0);
    scalar_gamma_mean_var_check(xs, 0.5 * (2.0 + 6), 0.5 * (1.0 + ss));
  }
  SUBCASE("zero residuals leave an identity scale") {
    std::vector<Matrix> x{Matrix::Random(2, 2), Matrix::Random(2, 2)};
    for (auto& m : x) m.row(0).setOnes();
    auto d = testutil::make_dataset(2, testutil::simple_periods(2), {{0}, {1}},
                                    {{0, 2, 1.0, 1.0}, {1, 2, 1.0, 1.0}}, x);
    BaseMeasure base = BaseMeasure::standard(2);
    std::vector<double> d00(20000), d01(20000);
    for (std::size_t i = 0; i < d00.size(); ++i) {
      Matrix h = gibbs_update_hx(d, x, base, rng);
      d00[i] = h(0, 0);
      d01[i] = h(0, 1);
    }
    CHECK(within_se(batch_means(d00), 2 * 2 + 3.0));
    CHECK(within_se(batch_means(d01), 0.0));
  }
}

TEST_CASE("slice sampler leaves a normal target invariant") {
  Rng rng(91);
  SliceOptions opts;
  double x = 3.0;
  std::vector<double> xs;
  for (int i = 0; i < 20000; ++i) {
    x = slice_sample(x, [](double v) { return -0.5 * v * v; }, opts, rng);
    if (i % 5 == 0) xs.push_back(x);
  }
  CHECK(testutil::ks_statistic(xs, testutil::normal_cdf) < testutil::ks_critical_1pct(xs.size()));
}

TEST_CASE("sweeps") {
  auto d = random_graph(5, 2, 101);
  const auto before = d.observations();
  BaseMeasure base = BaseMeasure::standard(2);
  auto run = [&](ChainConfig cfg, int sweeps) {
    ModelState s = initial_state(d, cfg, base);
    if (cfg.mode == Mode::ppmx) {
      s.coeffs.delta = d.all_predictors();
      s.coeffs.h_x = Matrix::Identity(2, 2);
    }
    for (int i = 0; i < sweeps; ++i) gibbs_sweep(s, d, cfg, base);
    return s;
  };
  auto same = [](const ModelState& a, const ModelState& b) {
    if (a.clusters.labels != b.clusters.labels || a.clusters.alpha != b.clusters.alpha) return false;
    for (std::size_t l = 0; l < a.coeffs.B.size(); ++l)
      if (a.coeffs.B[l] != b.coeffs.B[l]) return false;
    for (int m = 0; m < a.clusters.num_clusters(); ++m) {
      const auto &x = a.clusters.locations[m], &y = b.clusters.locations[m];
      for (int k = 0; k < 3; ++k)
        if (x.kappa[k] != y.kappa[k]) return false;
      if (x.lambda_y != y.lambda_y || x.tau_x != y.tau_x || x.rho_x != y.rho_x) return false;
    }
    return true;
  };
  for (auto mode : {Mode::baseline, Mode::ppmx})
    for (auto bu : {BUpdate::ess, BUpdate::joint}) {
      CAPTURE(to_string(mode));
      CAPTURE(to_string(bu));
      ChainConfig cfg;
      cfg.mode = mode;
      cfg.b_update = bu;
      cfg.cache_check_every = 10;
      auto a = run(cfg, 40);
      auto b = run(cfg, 40);
      CHECK(same(a, b));
      cfg.workers = 4;
      CHECK(same(a, run(cfg, 40)));
      cfg.seed = 2;
      CHECK_FALSE(same(a, run(cfg, 40)));
    }
  REQUIRE(d.observations().size() == before.size());
  for (std::size_t r = 0; r < before.size(); ++r) CHECK(d.observations()[r].y == before[r].y);
}

TEST_CASE("cache drift is detected") {
  auto d = random_graph(5, 2, 111);
  BaseMeasure base = BaseMeasure::standard(2);
  ChainConfig cfg;
  cfg.b_update = BUpdate::ess;
  ModelState s = initial_state(d, cfg, base);
  ResidualCache cache(d, s.coeffs.B, false);
  CHECK(cache.max_relative_drift(d, s.coeffs.B, false) == 0.0);
  cache.add(0, 1.0);
  CHECK(cache.max_relative_drift(d, s.coeffs.B, false) > 1e-6);
}

TEST_CASE("config validation and update names") {
  ChainConfig c;
  CHECK_NOTHROW(c.validate());
  c.thin = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK(parse_b_update("joint") == BUpdate::joint);
  CHECK(std::string(to_string(BUpdate::automatic)) == "auto");
  CHECK_THROWS_AS(parse_b_update("gibbs"), ValidationError);
}
