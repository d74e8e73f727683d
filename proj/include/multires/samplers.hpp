#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "multires/kernels.hpp"
#include "multires/linkage.hpp"
#include "multires/mixture.hpp"
#include "multires/rng.hpp"

namespace multires {

// How the coefficient block is updated each sweep: county-by-county
// elliptical slice moves, one exact draw from the joint Gaussian full
// conditional, or the joint draw whenever N * P * T <= kMaxJointDim.
enum class BUpdate { automatic, ess, joint };

const char* to_string(BUpdate u);
BUpdate parse_b_update(const std::string& s);

// Largest N * P * T handled by dense joint solves (warm start, joint draw).
inline constexpr long kMaxJointDim = 3000;

struct ChainConfig {
  int n_burn = 2000;
  int n_keep = 1000;
  int thin = 5;
  std::uint64_t seed = 1;
  int c_star = 2;
  Mode mode = Mode::baseline;
  double slice_width = 1.0;
  int slice_max_steps = 32;
  double jitter = kDefaultJitter;
  // Average (rather than sum) the nested years of a multi-year period.
  bool period_mean = false;
  int workers = 1;
  GammaPrior alpha_prior{};
  int cache_check_every = 100;
  // Start B at its conditional mean under the initial locations.
  bool warm_start = true;
  BUpdate b_update = BUpdate::automatic;

  void validate() const;
  std::int64_t total_sweeps() const {
    return static_cast<std::int64_t>(n_burn) + static_cast<std::int64_t>(n_keep) * thin;
  }
};

struct CoefficientState {
  std::vector<Matrix> B;      // per county, P x T (column j = beta_lj)
  std::vector<Matrix> delta;  // per county, P x T (ppmx only)
  Matrix h_x;                 // P x P (ppmx only)
};

struct ModelState {
  CoefficientState coeffs;
  ClusterState clusters;
  std::uint64_t sweep = 0;  // completed sweeps
};

// f_l = (x_l1' beta_l1, ..., x_lT' beta_lT)
Vector county_function(const Matrix& x, const Matrix& b);

// Weight of each nested year in an observation's mean: 1, or 1/|q| under
// the period-mean variant.
double period_weight(const Dataset& data, int period, bool period_mean);

// Contribution of one county's function to observation r.
double county_contribution(const Dataset& data, int r, const Vector& f, bool period_mean);

/// Per-observation fitted sums sum_{l in b} sum_{j in q} f_lj.
class ResidualCache {
 public:
  ResidualCache() = default;
  ResidualCache(const Dataset& data, const std::vector<Matrix>& B, bool period_mean);

  double fitted(int r) const { return fitted_.at(r); }
  const std::vector<double>& fitted() const { return fitted_; }
  void add(int r, double delta) { fitted_.at(r) += delta; }
  // Largest |cached - recomputed| / max(1, |recomputed|).
  double max_relative_drift(const Dataset& data, const std::vector<Matrix>& B,
                            bool period_mean) const;

 private:
  std::vector<double> fitted_;
};

// y_r minus every other county's current contribution, for each r in
// data.observations_of_county(county) (same order).
std::vector<double> residual_for(int county, const ResidualCache& cache,
                                 const std::vector<Matrix>& B, const Dataset& data,
                                 bool period_mean);

struct EssResult {
  int shrinks = 0;
};

// Elliptical slice update of B_l under its cluster's matrix-normal prior and
// the Gaussian likelihood of the county's residual targets. Updates `cache`.
EssResult ess_update_B(int county, std::vector<Matrix>& B, ResidualCache& cache,
                       const Dataset& data, const ClusterLocation& location,
                       const ChainConfig& config, Rng& rng);

// T x T sum over members of B' Lambda B.
Matrix kappa_sufficient_stat(const std::vector<Matrix>& B, std::span<const int> members,
                             const Matrix& lambda_y);

// Log conditional kernel of kappa (all three components at the given
// values), including the gamma prior on component d:
//   -1/2 n P log|C| - 1/2 tr(C^{-1} S) + (a-1) log k_d - b k_d.
// -inf if C cannot be factorized.
double kappa_log_kernel(const RQParams& kappa, int d, const Matrix& S, int n_members, int P,
                        std::span<const double> t, double jitter, const GammaPrior& prior);

// Slice update of log(kappa_d) for one cluster.
void mh_update_kappa(ClusterLocation& location, int d, const std::vector<Matrix>& B,
                     std::span<const int> members, std::span<const double> t,
                     const BaseMeasure& base, const ChainConfig& config, Rng& rng);

void gibbs_update_lambda_y(ClusterLocation& location, const std::vector<Matrix>& B,
                           std::span<const int> members, std::span<const double> t,
                           const BaseMeasure& base, double jitter, Rng& rng);

Matrix delta_conditional_mean(const Matrix& x, const Matrix& h_x, const ClusterLocation& location,
                              const Matrix& adjacency);
// Conjugate draw of Delta_l given X_l, H_x and its cluster's CAR prior.
Matrix gibbs_update_delta(const Matrix& x, const Matrix& h_x, const ClusterLocation& location,
                          const Matrix& adjacency, Rng& rng);

// Shape/rate of the gamma full conditional of tau.
GammaPrior tau_posterior(const std::vector<Matrix>& delta, std::span<const int> members,
                         const ClusterLocation& location, const Matrix& adjacency,
                         const GammaPrior& prior);
void gibbs_update_tau(ClusterLocation& location, const std::vector<Matrix>& delta,
                      std::span<const int> members, const Matrix& adjacency,
                      const BaseMeasure& base, Rng& rng);

// 1/2 n P log|D - rho Omega| + 1/2 tau rho tr(Omega sum Delta' Lambda_x Delta)
double rho_log_kernel(double rho, double tau, const Matrix& adjacency, const Matrix& S_x,
                      int n_members, int P);
void slice_update_rho(ClusterLocation& location, const std::vector<Matrix>& delta,
                      std::span<const int> members, const Matrix& adjacency,
                      const ChainConfig& config, Rng& rng);

// Conjugate Wishart update of Lambda_x (not listed among the published
// updates; needed so predictor-side precisions move between reassignments).
void gibbs_update_lambda_x(ClusterLocation& location, const std::vector<Matrix>& delta,
                           std::span<const int> members, const Matrix& adjacency,
                           const BaseMeasure& base, Rng& rng);

Matrix gibbs_update_hx(const Dataset& data, const std::vector<Matrix>& delta,
                       const BaseMeasure& base, Rng& rng);

struct SweepDiagnostics {
  AssignmentDiagnostics assignment;
  int ess_shrinks = 0;
  double cache_drift = 0.0;  // only set on check sweeps
};

ModelState initial_state(const Dataset& data, const ChainConfig& config, const BaseMeasure& base);

// One full scan: B (ESS or joint draw), kappa, Lambda_y, labels, alpha; then in ppmx mode
// Delta, tau, rho, Lambda_x, H_x. Randomness is keyed by (seed, sweep,
// block, index) so results do not depend on config.workers.
SweepDiagnostics gibbs_sweep(ModelState& state, const Dataset& data, const ChainConfig& config,
                             const BaseMeasure& base);

// Mean of the joint Gaussian full conditional of every B_l given the
// cluster locations (dense solve over N * P * T unknowns).
std::vector<Matrix> conditional_mean_B(const Dataset& data, const ClusterState& clusters,
                                       std::span<const double> t, double jitter,
                                       bool period_mean);

// Exact draw of every B_l from the joint Gaussian full conditional.
std::vector<Matrix> gibbs_draw_B_joint(const Dataset& data, const ClusterState& clusters,
                                       std::span<const double> t, double jitter,
                                       bool period_mean, Rng& rng);

bool use_joint_B(const ChainConfig& config, const Dataset& data);

// Throws std::logic_error on any violated state invariant.
void check_state(const ModelState& state, const Dataset& data);

// log N(y_r | fitted_r, sigma2_r) for every observation.
std::vector<double> observation_loglik(const Dataset& data, const std::vector<Matrix>& B,
                                       bool period_mean);

}  // namespace multires
