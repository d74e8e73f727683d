#include "multires/samplers.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "multires/errors.hpp"
#include "multires/parallel.hpp"
#include "multires/slice.hpp"

namespace multires {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Substream block ids within one sweep.
enum StreamBlock : std::uint64_t {
  kStreamB = 1,
  kStreamKappa = 2,
  kStreamLambdaY = 3,
  kStreamLabels = 4,
  kStreamAlpha = 5,
  kStreamDelta = 6,
  kStreamTau = 7,
  kStreamRho = 8,
  kStreamLambdaX = 9,
  kStreamHx = 10,
};

std::vector<std::vector<int>> cluster_members(const ClusterState& clusters) {
  std::vector<std::vector<int>> members(clusters.num_clusters());
  for (int l = 0; l < clusters.num_counties(); ++l) members[clusters.labels[l]].push_back(l);
  return members;
}

}  // namespace

const char* to_string(BUpdate u) {
  switch (u) {
    case BUpdate::ess: return "ess";
    case BUpdate::joint: return "joint";
    case BUpdate::automatic: break;
  }
  return "auto";
}

BUpdate parse_b_update(const std::string& s) {
  if (s == "auto") return BUpdate::automatic;
  if (s == "ess") return BUpdate::ess;
  if (s == "joint") return BUpdate::joint;
  throw ValidationError("unknown coefficient update '" + s + "' (expected auto, ess or joint)");
}

void ChainConfig::validate() const {
  if (n_burn < 0) throw ValidationError("burn-in must be nonnegative");
  if (n_keep < 1) throw ValidationError("need at least one kept draw");
  if (thin < 1) throw ValidationError("thin must be at least 1");
  if (c_star < 1) throw ValidationError("c_star must be at least 1");
  if (!(slice_width > 0.0)) throw ValidationError("slice width must be positive");
  if (slice_max_steps < 1) throw ValidationError("slice max steps must be at least 1");
  if (!(jitter >= 0.0)) throw ValidationError("jitter must be nonnegative");
  if (workers < 1) throw ValidationError("workers must be at least 1");
  if (!(alpha_prior.shape > 0.0 && alpha_prior.rate > 0.0))
    throw ValidationError("alpha prior parameters must be positive");
}

Vector county_function(const Matrix& x, const Matrix& b) {
  return x.cwiseProduct(b).colwise().sum().transpose();
}

double period_weight(const Dataset& data, int period, bool period_mean) {
  return period_mean ? 1.0 / data.periods().length(period) : 1.0;
}

double county_contribution(const Dataset& data, int r, const Vector& f, bool period_mean) {
  const auto& o = data.observations()[r];
  double s = 0.0;
  for (int j : data.periods().years(o.period)) s += f(j);
  return s * period_weight(data, o.period, period_mean);
}

// ---------------------------------------------------------- ResidualCache

ResidualCache::ResidualCache(const Dataset& data, const std::vector<Matrix>& B, bool period_mean)
    : fitted_(data.num_observations(), 0.0) {
  for (int l = 0; l < data.num_counties(); ++l) {
    Vector f = county_function(data.predictors(l), B[l]);
    for (int r : data.observations_of_county(l))
      fitted_[r] += county_contribution(data, r, f, period_mean);
  }
}

double ResidualCache::max_relative_drift(const Dataset& data, const std::vector<Matrix>& B,
                                         bool period_mean) const {
  ResidualCache fresh(data, B, period_mean);
  double worst = 0.0;
  for (std::size_t r = 0; r < fitted_.size(); ++r) {
    double d = std::abs(fitted_[r] - fresh.fitted_[r]) / std::max(1.0, std::abs(fresh.fitted_[r]));
    worst = std::max(worst, d);
  }
  return worst;
}

std::vector<double> residual_for(int county, const ResidualCache& cache,
                                 const std::vector<Matrix>& B, const Dataset& data,
                                 bool period_mean) {
  Vector f = county_function(data.predictors(county), B[county]);
  const auto& rs = data.observations_of_county(county);
  std::vector<double> out;
  out.reserve(rs.size());
  for (int r : rs) {
    double own = county_contribution(data, r, f, period_mean);
    out.push_back(data.observations()[r].y - (cache.fitted(r) - own));
  }
  return out;
}

// -------------------------------------------------------------------- ESS

EssResult ess_update_B(int county, std::vector<Matrix>& B, ResidualCache& cache,
                       const Dataset& data, const ClusterLocation& location,
                       const ChainConfig& config, Rng& rng) {
  const auto& rs = data.observations_of_county(county);
  const Matrix& x = data.predictors(county);
  const std::vector<double> target = residual_for(county, cache, B, data, config.period_mean);

  auto contributions = [&](const Matrix& b) {
    Vector f = county_function(x, b);
    std::vector<double> c(rs.size());
    for (std::size_t k = 0; k < rs.size(); ++k)
      c[k] = county_contribution(data, rs[k], f, config.period_mean);
    return c;
  };
  auto loglik = [&](const std::vector<double>& c) {
    double s = 0.0;
    for (std::size_t k = 0; k < rs.size(); ++k) {
      const double d = target[k] - c[k];
      s -= 0.5 * d * d / data.observations()[rs[k]].sigma2;
    }
    return std::isnan(s) ? kNegInf : s;
  };

  MatrixNormal prior(location.lambda_y,
                     rq_covariance(location.kappa, data.grid().time_points, config.jitter));
  const Matrix nu = prior.sample(rng);
  const Matrix current = B[county];
  const std::vector<double> c_old = contributions(current);
  const double level = loglik(c_old) + std::log(rng.uniform_open());

  double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double lo = theta - 2.0 * std::numbers::pi;
  double hi = theta;
  EssResult result;
  for (;;) {
    Matrix proposal = current * std::cos(theta) + nu * std::sin(theta);
    std::vector<double> c_new = contributions(proposal);
    if (loglik(c_new) > level) {
      B[county] = std::move(proposal);
      for (std::size_t k = 0; k < rs.size(); ++k) cache.add(rs[k], c_new[k] - c_old[k]);
      return result;
    }
    if (++result.shrinks >= 100)
      throw NumericalError("elliptical slice bracket did not collapse for county " +
                           data.graph().county_ids[county]);
    if (theta < 0.0)
      lo = theta;
    else
      hi = theta;
    theta = rng.uniform(lo, hi);
  }
}

// ------------------------------------------------------------------ kappa

Matrix kappa_sufficient_stat(const std::vector<Matrix>& B, std::span<const int> members,
                             const Matrix& lambda_y) {
  const auto T = B.front().cols();
  Matrix S = Matrix::Zero(T, T);
  for (int l : members) S.noalias() += B[l].transpose() * lambda_y * B[l];
  return S;
}

double kappa_log_kernel(const RQParams& kappa, int d, const Matrix& S, int n_members, int P,
                        std::span<const double> t, double jitter, const GammaPrior& prior) {
  if (!kappa.valid()) return kNegInf;
  double prior_term = (prior.shape - 1.0) * std::log(kappa[d]) - prior.rate * kappa[d];
  if (n_members == 0) return prior_term;
  Eigen::LLT<Matrix> llt;
  try {
    llt.compute(rq_covariance(kappa, t, jitter));
  } catch (const NumericalError&) {
    return kNegInf;
  }
  if (llt.info() != Eigen::Success) return kNegInf;
  Matrix l = llt.matrixL();
  if ((l.diagonal().array() <= 0.0).any()) return kNegInf;
  const double logdet = log_det_from_cholesky(l);
  const double trace = llt.solve(S).trace();
  double v = -0.5 * n_members * P * logdet - 0.5 * trace + prior_term;
  return std::isfinite(v) ? v : kNegInf;
}

void mh_update_kappa(ClusterLocation& location, int d, const std::vector<Matrix>& B,
                     std::span<const int> members, std::span<const double> t,
                     const BaseMeasure& base, const ChainConfig& config, Rng& rng) {
  const int P = static_cast<int>(location.lambda_y.rows());
  const int n = static_cast<int>(members.size());
  Matrix S = n > 0 ? kappa_sufficient_stat(B, members, location.lambda_y)
                   : Matrix::Zero(static_cast<Eigen::Index>(t.size()),
                                  static_cast<Eigen::Index>(t.size()));
  RQParams k = location.kappa;
  // Target on u = log(kappa_d), with the Jacobian term u.
  auto logf = [&](double u) {
    k[d] = std::exp(u);
    return kappa_log_kernel(k, d, S, n, P, t, config.jitter, base.kappa_prior[d]) + u;
  };
  const double u0 = std::log(location.kappa[d]);
  if (!std::isfinite(logf(u0))) return;  // current value not evaluable; leave unchanged
  SliceOptions opts;
  opts.width = config.slice_width;
  opts.max_steps = config.slice_max_steps;
  // exp() must stay finite and positive.
  opts.lower = -700.0;
  opts.upper = 700.0;
  location.kappa[d] = std::exp(slice_sample(u0, logf, opts, rng));
}

void gibbs_update_lambda_y(ClusterLocation& location, const std::vector<Matrix>& B,
                           std::span<const int> members, std::span<const double> t,
                           const BaseMeasure& base, double jitter, Rng& rng) {
  const auto T = static_cast<double>(t.size());
  Matrix scale_inv = spd_inverse(base.wishart_scale);
  if (!members.empty()) {
    Matrix cinv = spd_inverse(rq_covariance(location.kappa, t, jitter));
    for (int l : members) scale_inv.noalias() += B[l] * cinv * B[l].transpose();
  }
  const double df = base.wishart_df + static_cast<double>(members.size()) * T;
  location.lambda_y = wishart_sample(df, spd_inverse(0.5 * (scale_inv + scale_inv.transpose())), rng);
}

// ------------------------------------------------------------- predictors

namespace {

// Cholesky factor of the Delta full-conditional precision and its mean, both
// on the row-stacked vector (index p * T + j).
std::pair<Matrix, Vector> delta_system(const Matrix& x, const Matrix& h_x,
                                       const ClusterLocation& location, const Matrix& adjacency) {
  const auto P = x.rows();
  const auto T = x.cols();
  const Matrix q = car_precision({location.tau_x, location.rho_x, adjacency});
  Matrix phi(P * T, P * T);
  for (Eigen::Index p = 0; p < P; ++p)
    for (Eigen::Index r = 0; r < P; ++r)
      phi.block(p * T, r * T, T, T) =
          h_x(p, r) * Matrix::Identity(T, T) + location.lambda_x(p, r) * q;
  Vector xv(P * T);
  for (Eigen::Index p = 0; p < P; ++p) xv.segment(p * T, T) = x.row(p).transpose();
  Vector e(P * T);
  for (Eigen::Index p = 0; p < P; ++p) {
    e.segment(p * T, T).setZero();
    for (Eigen::Index r = 0; r < P; ++r) e.segment(p * T, T) += h_x(p, r) * xv.segment(r * T, T);
  }
  Matrix l = cholesky_lower(0.5 * (phi + phi.transpose()));
  Vector mean = e;
  l.triangularView<Eigen::Lower>().solveInPlace(mean);
  l.transpose().triangularView<Eigen::Upper>().solveInPlace(mean);
  return {std::move(l), std::move(mean)};
}

Matrix unstack_rows(const Vector& v, Eigen::Index P, Eigen::Index T) {
  Matrix out(P, T);
  for (Eigen::Index p = 0; p < P; ++p) out.row(p) = v.segment(p * T, T).transpose();
  return out;
}

}  // namespace

Matrix delta_conditional_mean(const Matrix& x, const Matrix& h_x, const ClusterLocation& location,
                              const Matrix& adjacency) {
  return unstack_rows(delta_system(x, h_x, location, adjacency).second, x.rows(), x.cols());
}

Matrix gibbs_update_delta(const Matrix& x, const Matrix& h_x, const ClusterLocation& location,
                          const Matrix& adjacency, Rng& rng) {
  auto [l, mean] = delta_system(x, h_x, location, adjacency);
  Vector z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  l.transpose().triangularView<Eigen::Upper>().solveInPlace(z);
  return unstack_rows(mean + z, x.rows(), x.cols());
}

GammaPrior tau_posterior(const std::vector<Matrix>& delta, std::span<const int> members,
                         const ClusterLocation& location, const Matrix& adjacency,
                         const GammaPrior& prior) {
  const auto T = adjacency.rows();
  const auto P = location.lambda_x.rows();
  const Matrix R = car_precision({1.0, location.rho_x, adjacency});
  double trace = 0.0;
  for (int l : members) trace += (R * delta[l].transpose() * location.lambda_x * delta[l]).trace();
  return {prior.shape + 0.5 * static_cast<double>(members.size() * T * P),
          prior.rate + 0.5 * trace};
}

void gibbs_update_tau(ClusterLocation& location, const std::vector<Matrix>& delta,
                      std::span<const int> members, const Matrix& adjacency,
                      const BaseMeasure& base, Rng& rng) {
  auto post = tau_posterior(delta, members, location, adjacency, base.tau_prior);
  if (!(post.rate > 0.0)) throw std::logic_error("tau posterior rate must be positive");
  location.tau_x = rng.gamma(post.shape, post.rate);
}

double rho_log_kernel(double rho, double tau, const Matrix& adjacency, const Matrix& S_x,
                      int n_members, int P) {
  if (!(rho > -1.0 && rho < 1.0)) return kNegInf;
  double v = 0.5 * tau * rho * (adjacency * S_x).trace();
  if (n_members > 0) {
    Matrix d = adjacency.rowwise().sum().asDiagonal();
    Eigen::LLT<Matrix> llt(d - rho * adjacency);
    if (llt.info() != Eigen::Success) return kNegInf;
    Matrix l = llt.matrixL();
    if ((l.diagonal().array() <= 0.0).any()) return kNegInf;
    v += 0.5 * n_members * P * log_det_from_cholesky(l);
  }
  return std::isfinite(v) ? v : kNegInf;
}

void slice_update_rho(ClusterLocation& location, const std::vector<Matrix>& delta,
                      std::span<const int> members, const Matrix& adjacency,
                      const ChainConfig& config, Rng& rng) {
  const auto T = adjacency.rows();
  const int P = static_cast<int>(location.lambda_x.rows());
  Matrix S = Matrix::Zero(T, T);
  for (int l : members) S.noalias() += delta[l].transpose() * location.lambda_x * delta[l];
  const int n = static_cast<int>(members.size());
  auto logf = [&](double rho) { return rho_log_kernel(rho, location.tau_x, adjacency, S, n, P); };
  SliceOptions opts;
  opts.width = std::min(config.slice_width, 2.0);
  opts.max_steps = config.slice_max_steps;
  opts.lower = -1.0;
  opts.upper = 1.0;
  location.rho_x = slice_sample(location.rho_x, logf, opts, rng);
}

void gibbs_update_lambda_x(ClusterLocation& location, const std::vector<Matrix>& delta,
                           std::span<const int> members, const Matrix& adjacency,
                           const BaseMeasure& base, Rng& rng) {
  const auto T = static_cast<double>(adjacency.rows());
  Matrix scale_inv = spd_inverse(base.wishart_scale);
  const Matrix q = car_precision({location.tau_x, location.rho_x, adjacency});
  for (int l : members) scale_inv.noalias() += delta[l] * q * delta[l].transpose();
  const double df = base.wishart_df + static_cast<double>(members.size()) * T;
  location.lambda_x = wishart_sample(df, spd_inverse(0.5 * (scale_inv + scale_inv.transpose())), rng);
}

Matrix gibbs_update_hx(const Dataset& data, const std::vector<Matrix>& delta,
                       const BaseMeasure& base, Rng& rng) {
  Matrix scale_inv = spd_inverse(base.wishart_scale);
  for (int l = 0; l < data.num_counties(); ++l) {
    Matrix r = data.predictors(l) - delta[l];
    scale_inv.noalias() += r * r.transpose();
  }
  const double df =
      base.wishart_df + static_cast<double>(data.num_counties()) * data.num_years();
  return wishart_sample(df, spd_inverse(0.5 * (scale_inv + scale_inv.transpose())), rng);
}

// ------------------------------------------------------------------ sweep

ModelState initial_state(const Dataset& data, const ChainConfig& config, const BaseMeasure& base) {
  const int N = data.num_counties();
  const int P = data.num_predictors();
  const int T = data.num_years();
  if (base.num_predictors() != P) throw ValidationError("base measure dimension mismatch");
  ModelState s;
  s.coeffs.B.assign(N, Matrix::Zero(P, T));
  ClusterLocation loc;
  loc.lambda_y = Matrix::Identity(P, P);
  loc.lambda_x = Matrix::Identity(P, P);
  if (config.mode == Mode::ppmx) {
    s.coeffs.delta = data.all_predictors();
    s.coeffs.h_x = Matrix::Identity(P, P);
  }
  s.clusters = ClusterState::single_cluster(N, loc, 1.0, config.mode);
  if (config.warm_start && static_cast<long>(N) * P * T <= kMaxJointDim)
    s.coeffs.B = conditional_mean_B(data, s.clusters, data.grid().time_points, config.jitter,
                                    config.period_mean);
  return s;
}

namespace {

// Precision and linear term of the joint Gaussian full conditional of all B.
// Unknowns are county-major, then the stacked rows of B_l (p * T + j).
std::pair<Matrix, Vector> joint_B_system(const Dataset& data, const ClusterState& clusters,
                                         std::span<const double> t, double jitter,
                                         bool period_mean) {
  const int N = data.num_counties();
  const int P = data.num_predictors();
  const int T = data.num_years();
  const Eigen::Index K = P * T;
  Matrix A = Matrix::Zero(N * K, N * K);
  Vector rhs = Vector::Zero(N * K);
  for (int l = 0; l < N; ++l) {
    const auto& loc = clusters.locations[clusters.labels[l]];
    const Matrix cinv = spd_inverse(rq_covariance(loc.kappa, t, jitter));
    for (int p = 0; p < P; ++p)
      for (int r = 0; r < P; ++r)
        A.block(l * K + p * T, l * K + r * T, T, T) += loc.lambda_y(p, r) * cinv;
  }
  std::vector<std::pair<Eigen::Index, double>> a;
  for (int r = 0; r < data.num_observations(); ++r) {
    const auto& o = data.observations()[r];
    const double w = period_weight(data, o.period, period_mean);
    a.clear();
    for (int l : data.graph().members[o.block])
      for (int j : data.periods().years(o.period))
        for (int p = 0; p < P; ++p) a.emplace_back(l * K + p * T + j, w * data.predictors(l)(p, j));
    for (const auto& [i, vi] : a) {
      rhs(i) += vi * o.y / o.sigma2;
      for (const auto& [k, vk] : a) A(i, k) += vi * vk / o.sigma2;
    }
  }
  return {std::move(A), std::move(rhs)};
}

std::vector<Matrix> unstack_B(const Vector& v, int N, int P, int T) {
  std::vector<Matrix> B(N, Matrix(P, T));
  for (int l = 0; l < N; ++l)
    for (int p = 0; p < P; ++p) B[l].row(p) = v.segment((l * P + p) * T, T).transpose();
  return B;
}

}  // namespace

bool use_joint_B(const ChainConfig& config, const Dataset& data) {
  switch (config.b_update) {
    case BUpdate::ess: return false;
    case BUpdate::joint: return true;
    case BUpdate::automatic: break;
  }
  return static_cast<long>(data.num_counties()) * data.num_predictors() * data.num_years() <=
         kMaxJointDim;
}

std::vector<Matrix> conditional_mean_B(const Dataset& data, const ClusterState& clusters,
                                       std::span<const double> t, double jitter,
                                       bool period_mean) {
  auto [A, rhs] = joint_B_system(data, clusters, t, jitter, period_mean);
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success)
    throw NumericalError("joint conditional of B is not positive definite");
  return unstack_B(llt.solve(rhs), data.num_counties(), data.num_predictors(), data.num_years());
}

std::vector<Matrix> gibbs_draw_B_joint(const Dataset& data, const ClusterState& clusters,
                                       std::span<const double> t, double jitter,
                                       bool period_mean, Rng& rng) {
  auto [A, rhs] = joint_B_system(data, clusters, t, jitter, period_mean);
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success)
    throw NumericalError("joint conditional of B is not positive definite");
  Vector draw = llt.solve(rhs);
  Vector z(draw.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  llt.matrixU().solveInPlace(z);
  draw += z;
  return unstack_B(draw, data.num_counties(), data.num_predictors(), data.num_years());
}

SweepDiagnostics gibbs_sweep(ModelState& state, const Dataset& data, const ChainConfig& config,
                             const BaseMeasure& base) {
  SweepDiagnostics diag;
  const std::uint64_t sweep = state.sweep;
  auto stream = [&](std::uint64_t block, std::uint64_t index) {
    return Rng::substream(config.seed, {sweep, block, index});
  };
  auto& B = state.coeffs.B;
  auto& clusters = state.clusters;
  const auto& t = data.grid().time_points;
  const Matrix adjacency = chain_adjacency(data.num_years());

  // Model for Y.
  ResidualCache cache;
  if (use_joint_B(config, data)) {
    Rng rng = stream(kStreamB, 0);
    B = gibbs_draw_B_joint(data, clusters, t, config.jitter, config.period_mean, rng);
    cache = ResidualCache(data, B, config.period_mean);
  } else {
    cache = ResidualCache(data, B, config.period_mean);
    for (int l = 0; l < data.num_counties(); ++l) {
      Rng rng = stream(kStreamB, l);
      diag.ess_shrinks +=
          ess_update_B(l, B, cache, data, clusters.locations[clusters.labels[l]], config, rng).shrinks;
    }
  }

  auto members = cluster_members(clusters);
  parallel_for(members.size(), config.workers, [&](std::size_t m) {
    Rng rng = stream(kStreamKappa, m);
    for (int d = 0; d < 3; ++d)
      mh_update_kappa(clusters.locations[m], d, B, members[m], t, base, config, rng);
  });
  parallel_for(members.size(), config.workers, [&](std::size_t m) {
    Rng rng = stream(kStreamLambdaY, m);
    gibbs_update_lambda_y(clusters.locations[m], B, members[m], t, base, config.jitter, rng);
  });

  {
    Rng rng = stream(kStreamLabels, 0);
    LikelihoodContext ctx{t, adjacency, config.jitter};
    diag.assignment = assign_clusters(
        clusters, B, config.mode == Mode::ppmx ? &state.coeffs.delta : nullptr, base, ctx,
        config.c_star, rng);
  }
  {
    Rng rng = stream(kStreamAlpha, 0);
    clusters.alpha = update_alpha(clusters.alpha, clusters.num_counties(), clusters.num_clusters(),
                                  config.alpha_prior, rng);
  }

  // Model for X.
  if (config.mode == Mode::ppmx) {
    auto& delta = state.coeffs.delta;
    parallel_for(static_cast<std::size_t>(data.num_counties()), config.workers, [&](std::size_t l) {
      Rng rng = stream(kStreamDelta, l);
      delta[l] = gibbs_update_delta(data.predictors(static_cast<int>(l)), state.coeffs.h_x,
                                    clusters.locations[clusters.labels[l]], adjacency, rng);
    });
    members = cluster_members(clusters);
    parallel_for(members.size(), config.workers, [&](std::size_t m) {
      auto& loc = clusters.locations[m];
      Rng rng_tau = stream(kStreamTau, m);
      gibbs_update_tau(loc, delta, members[m], adjacency, base, rng_tau);
      Rng rng_rho = stream(kStreamRho, m);
      slice_update_rho(loc, delta, members[m], adjacency, config, rng_rho);
      Rng rng_lx = stream(kStreamLambdaX, m);
      gibbs_update_lambda_x(loc, delta, members[m], adjacency, base, rng_lx);
    });
    Rng rng = stream(kStreamHx, 0);
    state.coeffs.h_x = gibbs_update_hx(data, delta, base, rng);
  }

  ++state.sweep;
  if (config.cache_check_every > 0 && state.sweep % config.cache_check_every == 0) {
    diag.cache_drift = cache.max_relative_drift(data, B, config.period_mean);
    if (diag.cache_drift > 1e-6) throw std::logic_error("residual cache drifted from recomputation");
  }
  check_state(state, data);
  return diag;
}

void check_state(const ModelState& state, const Dataset& data) {
  const auto& c = state.clusters;
  c.check();
  if (c.num_counties() != data.num_counties()) throw std::logic_error("label vector size mismatch");
  for (const auto& b : state.coeffs.B)
    if (!b.allFinite()) throw std::logic_error("non-finite coefficient");
  for (const auto& loc : c.locations) {
    if (!loc.kappa.valid()) throw std::logic_error("kernel parameter not positive");
    if (!loc.lambda_y.allFinite()) throw std::logic_error("non-finite precision");
    if (c.mode == Mode::ppmx) {
      if (!(loc.tau_x > 0.0)) throw std::logic_error("CAR scale not positive");
      if (!(loc.rho_x > -1.0 && loc.rho_x < 1.0)) throw std::logic_error("CAR rho outside (-1, 1)");
    }
  }
}

std::vector<double> observation_loglik(const Dataset& data, const std::vector<Matrix>& B,
                                       bool period_mean) {
  ResidualCache cache(data, B, period_mean);
  std::vector<double> out(data.num_observations());
  for (int r = 0; r < data.num_observations(); ++r) {
    const auto& o = data.observations()[r];
    const double d = o.y - cache.fitted(r);
    out[r] = -0.5 * std::log(2.0 * std::numbers::pi * o.sigma2) - 0.5 * d * d / o.sigma2;
  }
  return out;
}

}  // namespace multires
