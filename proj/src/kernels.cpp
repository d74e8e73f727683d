#include "multires/kernels.hpp"

#include <cmath>
#include <numbers>

#include "multires/errors.hpp"

namespace multires {

Matrix rq_covariance(const RQParams& kappa, std::span<const double> t, double jitter) {
  if (!kappa.valid()) throw NumericalError("rational-quadratic parameters must be positive");
  const auto T = static_cast<Eigen::Index>(t.size());
  const double amplitude = 1.0 / kappa.inverse_scale;
  const double denom = kappa.length_scale * kappa.mixing;
  Matrix c(T, T);
  for (Eigen::Index j = 0; j < T; ++j) {
    c(j, j) = amplitude * (1.0 + jitter);
    for (Eigen::Index k = 0; k < j; ++k) {
      const double d = t[j] - t[k];
      const double v = amplitude * std::pow(1.0 + d * d / denom, -kappa.mixing);
      c(j, k) = v;
      c(k, j) = v;
    }
  }
  if (!c.allFinite()) throw NumericalError("rational-quadratic covariance is not finite");
  return c;
}

Matrix chain_adjacency(int T) {
  Matrix omega = Matrix::Zero(T, T);
  for (int j = 0; j + 1 < T; ++j) {
    omega(j, j + 1) = 1.0;
    omega(j + 1, j) = 1.0;
  }
  return omega;
}

void CARParams::validate() const {
  if (!(tau > 0.0)) throw ValidationError("CAR scale must be positive");
  if (!(rho > -1.0 && rho < 1.0)) throw ValidationError("CAR autocorrelation must be in (-1, 1)");
  if (adjacency.rows() != adjacency.cols()) throw ValidationError("CAR adjacency must be square");
  for (Eigen::Index j = 0; j < adjacency.rows(); ++j) {
    if (adjacency(j, j) != 0.0) throw ValidationError("CAR adjacency needs a zero diagonal");
    for (Eigen::Index k = 0; k < adjacency.cols(); ++k)
      if (adjacency(j, k) != adjacency(k, j) || adjacency(j, k) < 0.0)
        throw ValidationError("CAR adjacency must be symmetric and nonnegative");
  }
}

Matrix car_precision(const CARParams& params) {
  params.validate();
  Matrix d = params.adjacency.rowwise().sum().asDiagonal();
  return params.tau * (d - params.rho * params.adjacency);
}

Matrix cholesky_lower(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("Cholesky factorization failed");
  Matrix l = llt.matrixL();
  if (!l.allFinite() || (l.diagonal().array() <= 0.0).any())
    throw NumericalError("Cholesky factorization failed");
  return l;
}

double log_det_from_cholesky(const Matrix& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

Matrix spd_inverse(const Matrix& a) {
  Matrix l = cholesky_lower(a);
  Matrix inv = Matrix::Identity(a.rows(), a.cols());
  l.triangularView<Eigen::Lower>().solveInPlace(inv);
  l.transpose().triangularView<Eigen::Upper>().solveInPlace(inv);
  return 0.5 * (inv + inv.transpose());
}

// ------------------------------------------------------------ MatrixNormal

MatrixNormal::MatrixNormal(const Matrix& row_precision, const Matrix& col_covariance)
    : row_chol_(cholesky_lower(row_precision)), col_chol_(cholesky_lower(col_covariance)) {
  set_constants();
}

MatrixNormal MatrixNormal::with_column_precision(const Matrix& row_precision,
                                                 const Matrix& col_precision) {
  MatrixNormal mn;
  mn.row_chol_ = cholesky_lower(row_precision);
  mn.col_chol_ = cholesky_lower(spd_inverse(col_precision));
  mn.set_constants();
  return mn;
}

void MatrixNormal::set_constants() {
  const double P = static_cast<double>(rows());
  const double T = static_cast<double>(cols());
  log_norm_ = -0.5 * P * T * std::log(2.0 * std::numbers::pi) +
              0.5 * T * log_det_from_cholesky(row_chol_) -
              0.5 * P * log_det_from_cholesky(col_chol_);
}

double MatrixNormal::quadratic_form(const Matrix& x) const {
  // W = L_row' X, then tr(C^{-1} W'W) = ||L_col^{-1} W'||_F^2.
  Matrix wt = (row_chol_.transpose() * x).transpose();
  col_chol_.triangularView<Eigen::Lower>().solveInPlace(wt);
  return wt.squaredNorm();
}

double MatrixNormal::log_density(const Matrix& x) const {
  return log_norm_ - 0.5 * quadratic_form(x);
}

Matrix MatrixNormal::sample(Rng& rng) const {
  Matrix z(rows(), cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = rng.normal();
  row_chol_.transpose().triangularView<Eigen::Upper>().solveInPlace(z);
  return z * col_chol_.transpose();
}

double matnorm_logdensity(const Matrix& x, const Matrix& row_precision,
                          const Matrix& col_covariance) {
  return MatrixNormal(row_precision, col_covariance).log_density(x);
}

Matrix matnorm_sample(const Matrix& row_precision, const Matrix& col_covariance, Rng& rng) {
  return MatrixNormal(row_precision, col_covariance).sample(rng);
}

Matrix wishart_sample(double df, const Matrix& scale, Rng& rng) {
  const auto P = scale.rows();
  if (!(df > static_cast<double>(P) - 1.0))
    throw NumericalError("Wishart degrees of freedom too small");
  Matrix l = cholesky_lower(0.5 * (scale + scale.transpose()));
  Matrix a = Matrix::Zero(P, P);
  for (Eigen::Index i = 0; i < P; ++i) {
    a(i, i) = std::sqrt(rng.chisq(df - static_cast<double>(i)));
    for (Eigen::Index k = 0; k < i; ++k) a(i, k) = rng.normal();
  }
  Matrix la = l * a;
  Matrix w = la * la.transpose();
  return 0.5 * (w + w.transpose());
}

double gamma_logpdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

}  // namespace multires
