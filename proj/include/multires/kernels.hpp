#pragma once

#include <Eigen/Dense>
#include <span>

#include "multires/rng.hpp"

namespace multires {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Rational-quadratic covariance parameters.
///   C[j,k] = (1/inverse_scale) * (1 + d^2 / (length_scale * mixing))^(-mixing)
struct RQParams {
  double inverse_scale = 1.0;  // kappa_1
  double length_scale = 1.0;   // kappa_2
  double mixing = 1.0;         // kappa_3

  double& operator[](int d) { return d == 0 ? inverse_scale : (d == 1 ? length_scale : mixing); }
  double operator[](int d) const {
    return d == 0 ? inverse_scale : (d == 1 ? length_scale : mixing);
  }
  bool valid() const { return inverse_scale > 0.0 && length_scale > 0.0 && mixing > 0.0; }
};

inline constexpr double kDefaultJitter = 1e-8;

// T x T rational-quadratic covariance on the given time coordinates.
// `jitter` * (1/inverse_scale) is added to the diagonal. Throws
// NumericalError if an entry is not finite.
Matrix rq_covariance(const RQParams& kappa, std::span<const double> t,
                     double jitter = kDefaultJitter);

// First-order chain adjacency over T ordered time points.
Matrix chain_adjacency(int T);

/// CAR precision tau * (D - rho * Omega), D = diag(row sums of Omega).
struct CARParams {
  double tau = 1.0;
  double rho = 0.0;
  Matrix adjacency;

  void validate() const;
};

Matrix car_precision(const CARParams& params);

// Lower Cholesky factor; throws NumericalError if `a` is not SPD.
Matrix cholesky_lower(const Matrix& a);
double log_det_from_cholesky(const Matrix& lower);
// Inverse of an SPD matrix via its Cholesky factor.
Matrix spd_inverse(const Matrix& a);

/// Zero-mean matrix-variate normal N_{PxT}(row_precision^{-1}, col_covariance):
/// the stacked-rows vector has covariance row_precision^{-1} (x) col_covariance.
/// Factorizes on construction (throws NumericalError on failure).
class MatrixNormal {
 public:
  MatrixNormal(const Matrix& row_precision, const Matrix& col_covariance);
  // Column side given by its precision (CAR parameterization).
  static MatrixNormal with_column_precision(const Matrix& row_precision,
                                            const Matrix& col_precision);

  int rows() const { return static_cast<int>(row_chol_.rows()); }
  int cols() const { return static_cast<int>(col_chol_.rows()); }

  double log_density(const Matrix& x) const;
  // tr(C^{-1} X' Lambda X)
  double quadratic_form(const Matrix& x) const;
  Matrix sample(Rng& rng) const;

  const Matrix& row_precision_cholesky() const { return row_chol_; }
  const Matrix& col_covariance_cholesky() const { return col_chol_; }

 private:
  MatrixNormal() = default;
  void set_constants();

  Matrix row_chol_;  // L with Lambda = L L'
  Matrix col_chol_;  // L with C = L L'
  double log_norm_ = 0.0;
};

// Free-function forms matching the matrix-normal density and sampler.
double matnorm_logdensity(const Matrix& x, const Matrix& row_precision,
                          const Matrix& col_covariance);
Matrix matnorm_sample(const Matrix& row_precision, const Matrix& col_covariance, Rng& rng);

// Wishart draw with E[W] = df * scale (Bartlett decomposition).
Matrix wishart_sample(double df, const Matrix& scale, Rng& rng);

double gamma_logpdf(double x, double shape, double rate);

}  // namespace multires
