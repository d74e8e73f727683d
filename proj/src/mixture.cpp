#include "multires/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "multires/errors.hpp"

namespace multires {

const char* to_string(Mode mode) { return mode == Mode::ppmx ? "ppmx" : "baseline"; }

Mode parse_mode(const std::string& s) {
  if (s == "baseline") return Mode::baseline;
  if (s == "ppmx") return Mode::ppmx;
  throw ValidationError("unknown mode '" + s + "' (expected baseline or ppmx)");
}

BaseMeasure BaseMeasure::standard(int num_predictors) {
  BaseMeasure base;
  base.wishart_df = num_predictors + 1.0;
  base.wishart_scale = Matrix::Identity(num_predictors, num_predictors);
  return base;
}

ClusterLocation BaseMeasure::draw(Mode mode, Rng& rng) const {
  ClusterLocation loc;
  loc.lambda_y = wishart_sample(wishart_df, wishart_scale, rng);
  for (int d = 0; d < 3; ++d) loc.kappa[d] = rng.gamma(kappa_prior[d].shape, kappa_prior[d].rate);
  if (mode == Mode::ppmx) {
    loc.lambda_x = wishart_sample(wishart_df, wishart_scale, rng);
    loc.tau_x = rng.gamma(tau_prior.shape, tau_prior.rate);
    loc.rho_x = rng.uniform(rho_lower, rho_upper);
  } else {
    loc.lambda_x = Matrix::Identity(num_predictors(), num_predictors());
  }
  return loc;
}

std::vector<int> ClusterState::members(int m) const {
  std::vector<int> out;
  for (int l = 0; l < num_counties(); ++l)
    if (labels[l] == m) out.push_back(l);
  return out;
}

void ClusterState::check() const {
  const int M = num_clusters();
  if (static_cast<int>(counts.size()) != M) throw std::logic_error("cluster counts size mismatch");
  std::vector<int> tally(M, 0);
  for (int s : labels) {
    if (s < 0 || s >= M) throw std::logic_error("cluster label out of range");
    ++tally[s];
  }
  for (int m = 0; m < M; ++m) {
    if (tally[m] != counts[m]) throw std::logic_error("cluster counts disagree with labels");
    if (counts[m] < 1) throw std::logic_error("empty cluster retained");
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::logic_error("concentration not positive");
}

ClusterState ClusterState::single_cluster(int num_counties, ClusterLocation location, double alpha,
                                          Mode mode) {
  ClusterState s;
  s.labels.assign(num_counties, 0);
  s.locations.push_back(std::move(location));
  s.counts.push_back(num_counties);
  s.alpha = alpha;
  s.mode = mode;
  return s;
}

std::vector<int> canonical_labels(std::span<const int> labels) {
  std::unordered_map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

std::vector<double> stick_weights(std::span<const double> v) {
  std::vector<double> p;
  p.reserve(v.size() + 1);
  double remaining = 1.0;
  for (double vh : v) {
    if (!(vh > 0.0 && vh < 1.0)) throw ValidationError("stick fractions must lie in (0, 1)");
    p.push_back(vh * remaining);
    remaining *= 1.0 - vh;
  }
  p.push_back(remaining);
  return p;
}

namespace {

// Samples an index from unnormalized log weights; -1 if all are -inf.
int sample_log_weights(const std::vector<double>& logw, Rng& rng) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double w : logw)
    if (w > mx) mx = w;
  if (!std::isfinite(mx)) return -1;
  double total = 0.0;
  std::vector<double> w(logw.size());
  for (std::size_t i = 0; i < logw.size(); ++i) {
    w[i] = std::exp(logw[i] - mx);
    total += w[i];
  }
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return static_cast<int>(i);
    u -= w[i];
  }
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0.0) return static_cast<int>(i);
  return -1;
}

// log n_m + L for each existing cluster, then log(alpha/c) + L per auxiliary.
std::vector<double> candidate_log_weights(std::span<const int> counts,
                                          std::span<const ClusterLocation> locations,
                                          std::span<const ClusterLocation> aux, double alpha,
                                          const std::function<double(const ClusterLocation&)>& ll) {
  const double log_aux = std::log(alpha / static_cast<double>(aux.size()));
  std::vector<double> logw(locations.size() + aux.size());
  for (std::size_t m = 0; m < locations.size(); ++m)
    logw[m] = std::log(static_cast<double>(counts[m])) + ll(locations[m]);
  for (std::size_t h = 0; h < aux.size(); ++h) logw[locations.size() + h] = log_aux + ll(aux[h]);
  return logw;
}

}  // namespace

std::vector<double> assignment_probabilities(std::span<const int> counts,
                                             std::span<const ClusterLocation> locations,
                                             std::span<const ClusterLocation> aux, double alpha,
                                             int county, const ClusterLogLik& loglik) {
  if (counts.size() != locations.size() || aux.empty())
    throw ValidationError("assignment needs one count per cluster and at least one auxiliary");
  auto logw = candidate_log_weights(counts, locations, aux, alpha, [&](const ClusterLocation& loc) {
    const double v = loglik(county, loc);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  });
  const double mx = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(mx)) return std::vector<double>(logw.size(), 0.0);
  double total = 0.0;
  for (double& w : logw) total += (w = std::exp(w - mx));
  for (double& w : logw) w /= total;
  return logw;
}

AssignmentDiagnostics assign_clusters(ClusterState& state, const ClusterLogLik& loglik,
                                      const BaseMeasure& base, int c_star, Rng& rng) {
  if (c_star < 1) throw ValidationError("c_star must be at least 1");
  AssignmentDiagnostics diag;
  const double ninf = -std::numeric_limits<double>::infinity();

  auto safe_ll = [&](int l, const ClusterLocation& loc) {
    double v;
    try {
      v = loglik(l, loc);
    } catch (const NumericalError&) {
      v = ninf;
    }
    if (!std::isfinite(v)) {
      ++diag.nonfinite_candidates;
      return ninf;
    }
    return v;
  };

  for (int l = 0; l < state.num_counties(); ++l) {
    const int old = state.labels[l];
    --state.counts[old];
    std::vector<ClusterLocation> aux;
    aux.reserve(c_star);
    const bool was_singleton = state.counts[old] == 0;
    if (was_singleton) {
      aux.push_back(std::move(state.locations[old]));
      state.locations.erase(state.locations.begin() + old);
      state.counts.erase(state.counts.begin() + old);
      for (auto& s : state.labels)
        if (s > old) --s;
    }
    while (static_cast<int>(aux.size()) < c_star) aux.push_back(base.draw(state.mode, rng));

    const int M = state.num_clusters();
    auto logw = candidate_log_weights(state.counts, state.locations, aux, state.alpha,
                                      [&](const ClusterLocation& loc) { return safe_ll(l, loc); });

    int pick = sample_log_weights(logw, rng);
    if (pick < 0) {
      ++diag.all_weights_vanished;
      pick = was_singleton ? M : old;  // keep the current location
    }
    if (pick < M) {
      state.labels[l] = pick;
      ++state.counts[pick];
    } else {
      state.locations.push_back(std::move(aux[pick - M]));
      state.counts.push_back(1);
      state.labels[l] = M;
    }
  }
  return diag;
}

ClusterLogLik matnorm_cluster_loglik(const std::vector<Matrix>& coeffs,
                                     const std::vector<Matrix>* deltas,
                                     const LikelihoodContext& ctx, Mode mode) {
  return [&coeffs, deltas, &ctx, mode](int l, const ClusterLocation& loc) {
    MatrixNormal prior_b(loc.lambda_y, rq_covariance(loc.kappa, ctx.time_points, ctx.jitter));
    double ll = prior_b.log_density(coeffs[l]);
    if (mode == Mode::ppmx) {
      Matrix q = car_precision({loc.tau_x, loc.rho_x, ctx.adjacency});
      ll += MatrixNormal::with_column_precision(loc.lambda_x, q).log_density((*deltas)[l]);
    }
    return ll;
  };
}

AssignmentDiagnostics assign_clusters(ClusterState& state, const std::vector<Matrix>& coeffs,
                                      const std::vector<Matrix>* deltas, const BaseMeasure& base,
                                      const LikelihoodContext& ctx, int c_star, Rng& rng) {
  if (state.mode == Mode::ppmx && (deltas == nullptr || deltas->size() != coeffs.size()))
    throw ValidationError("ppmx assignment needs one Delta per county");
  return assign_clusters(state, matnorm_cluster_loglik(coeffs, deltas, ctx, state.mode), base,
                         c_star, rng);
}

AlphaMixture escobar_west_mixture(int num_counties, int num_clusters, double eta,
                                  const GammaPrior& prior) {
  AlphaMixture mix;
  mix.rate = prior.rate - std::log(eta);
  mix.shape_high = prior.shape + num_clusters;
  mix.shape_low = prior.shape + num_clusters - 1.0;
  const double odds = mix.shape_low / (num_counties * mix.rate);
  mix.weight_high = odds / (1.0 + odds);
  return mix;
}

double update_alpha(double alpha, int num_counties, int num_clusters, const GammaPrior& prior,
                    Rng& rng) {
  const double eta = rng.beta(alpha + 1.0, static_cast<double>(num_counties));
  const auto mix = escobar_west_mixture(num_counties, num_clusters, std::max(eta, 1e-300), prior);
  const bool high = rng.uniform() < mix.weight_high || mix.shape_low <= 0.0;
  return rng.gamma(high ? mix.shape_high : mix.shape_low, mix.rate);
}

Matrix cluster_cooccurrence(const std::vector<std::vector<int>>& draws) {
  if (draws.empty()) throw ValidationError("co-clustering needs at least one draw");
  const auto n = static_cast<Eigen::Index>(draws.front().size());
  Matrix out = Matrix::Zero(n, n);
  for (const auto& s : draws) {
    if (static_cast<Eigen::Index>(s.size()) != n) throw ValidationError("draws differ in length");
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (s[i] == s[j]) out(i, j) += 1.0;
  }
  return out / static_cast<double>(draws.size());
}

}  // namespace multires
