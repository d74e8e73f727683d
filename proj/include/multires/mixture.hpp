#pragma once

#include <array>
#include <functional>
#include <string>
#include <span>
#include <vector>

#include "multires/kernels.hpp"
#include "multires/rng.hpp"

namespace multires {

enum class Mode { baseline, ppmx };

const char* to_string(Mode mode);
Mode parse_mode(const std::string& s);

struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;
};

/// One unique location of the Dirichlet process. Predictor-side fields are
/// only meaningful in ppmx mode.
struct ClusterLocation {
  Matrix lambda_y;
  RQParams kappa;
  Matrix lambda_x;
  double tau_x = 1.0;
  double rho_x = 0.0;
};

/// Base distribution G0: Wishart(P+1, I) for the precisions, independent
/// gamma priors on the kernel parameters and CAR scale, uniform CAR
/// autocorrelation. The predictor-side Wishart reuses the response-side one.
struct BaseMeasure {
  double wishart_df = 2.0;
  Matrix wishart_scale;
  std::array<GammaPrior, 3> kappa_prior{};
  GammaPrior tau_prior{};
  double rho_lower = -1.0;
  double rho_upper = 1.0;

  static BaseMeasure standard(int num_predictors);
  int num_predictors() const { return static_cast<int>(wishart_scale.rows()); }
  ClusterLocation draw(Mode mode, Rng& rng) const;
};

struct ClusterState {
  std::vector<int> labels;  // s_l in [0, M)
  std::vector<ClusterLocation> locations;
  std::vector<int> counts;
  double alpha = 1.0;
  Mode mode = Mode::baseline;

  int num_counties() const { return static_cast<int>(labels.size()); }
  int num_clusters() const { return static_cast<int>(locations.size()); }
  // Members of cluster m, ascending.
  std::vector<int> members(int m) const;
  // Throws std::logic_error if labels/counts/locations disagree.
  void check() const;

  static ClusterState single_cluster(int num_counties, ClusterLocation location, double alpha,
                                     Mode mode);
};

// Relabels a partition by order of first occurrence (0, 1, ...).
std::vector<int> canonical_labels(std::span<const int> labels);

// p_h = v_h prod_{k<h}(1 - v_k), followed by the residual mass.
std::vector<double> stick_weights(std::span<const double> v);

// log L(county | location); -inf or NaN gives the candidate zero weight.
using ClusterLogLik = std::function<double(int county, const ClusterLocation& location)>;

struct AssignmentDiagnostics {
  int nonfinite_candidates = 0;
  int all_weights_vanished = 0;
};

// One auxiliary-variable Gibbs scan (Neal's algorithm 8) over all counties
// in index order. For each county: remove it, draw c_star auxiliary
// locations from the base measure (re-using the county's own location when
// it was a singleton), weight existing clusters by n_{-l,m} L and auxiliaries
// by (alpha / c_star) L, sample, drop unused auxiliaries and empty clusters.
AssignmentDiagnostics assign_clusters(ClusterState& state, const ClusterLogLik& loglik,
                                      const BaseMeasure& base, int c_star, Rng& rng);

// Normalized probabilities of the scan's choice for `county`: existing
// clusters (counts exclude the county) followed by the auxiliaries.
std::vector<double> assignment_probabilities(std::span<const int> counts,
                                             std::span<const ClusterLocation> locations,
                                             std::span<const ClusterLocation> aux, double alpha,
                                             int county, const ClusterLogLik& loglik);

struct LikelihoodContext {
  std::span<const double> time_points;
  Matrix adjacency;  // CAR Omega
  double jitter = kDefaultJitter;
};

// Matrix-normal likelihood of B_l (plus Delta_l in ppmx mode) under a location.
ClusterLogLik matnorm_cluster_loglik(const std::vector<Matrix>& coeffs,
                                     const std::vector<Matrix>* deltas,
                                     const LikelihoodContext& ctx, Mode mode);

AssignmentDiagnostics assign_clusters(ClusterState& state, const std::vector<Matrix>& coeffs,
                                      const std::vector<Matrix>* deltas, const BaseMeasure& base,
                                      const LikelihoodContext& ctx, int c_star, Rng& rng);

/// Two-component gamma mixture of the Escobar-West concentration update.
struct AlphaMixture {
  double weight_high;  // weight on Ga(shape_high, rate)
  double shape_high;   // a + M
  double shape_low;    // a + M - 1
  double rate;         // b - log(eta)
};

AlphaMixture escobar_west_mixture(int num_counties, int num_clusters, double eta,
                                  const GammaPrior& prior);
double update_alpha(double alpha, int num_counties, int num_clusters, const GammaPrior& prior,
                    Rng& rng);

// Fraction of draws in which each pair of counties shares a cluster.
Matrix cluster_cooccurrence(const std::vector<std::vector<int>>& draws);

}  // namespace multires
