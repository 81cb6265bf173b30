#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "ssp/rng.hpp"

namespace ssp {

inline constexpr double kLog2Pi = 1.8378770664093453;

double logit(double p);
double inverse_logit(double x);

// --- scalar log-densities ---------------------------------------------------

double log_normal_pdf(double x, double mean, double sd);
/// Half-normal on x >= 0 with scale sd (the SD of the underlying normal).
double log_half_normal_pdf(double x, double sd);
double log_half_cauchy_pdf(double x, double scale);
/// Gamma in shape/rate parameterization.
double log_gamma_pdf(double x, double shape, double rate);
double log_beta_pdf(double x, double a, double b);
double log_f_pdf(double x, double d1, double d2);

// --- matrix-variate log-densities -------------------------------------------

double log_multigamma(int dim, double a);
double log_mvn_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                   const Eigen::MatrixXd& sigma);
double log_inverse_wishart_pdf(const Eigen::MatrixXd& x, const Eigen::MatrixXd& psi,
                               double df);

/// Covariance to correlation matrix.
Eigen::MatrixXd cov_to_corr(const Eigen::MatrixXd& sigma);

// --- summaries ----------------------------------------------------------------

/// Linear-interpolation quantile (R type 7). q in [0, 1].
double quantile(std::vector<double> values, double q);
double median(std::vector<double> values);
double mean(const std::vector<double>& values);
/// Sample SD (n-1 denominator); 0 for fewer than two values.
double sample_sd(const std::vector<double>& values);

// --- normal CDF utilities ------------------------------------------------------

double normal_cdf(double x);
/// Inverse standard normal CDF (Acklam's rational approximation, |eps| < 2e-9).
double normal_quantile(double p);

// --- slice sampler ---------------------------------------------------------------

/// Univariate slice sampling with stepping-out and shrinkage (Neal 2003).
/// `log_density` may return -inf outside the support; `x0` must have finite
/// density. Returns the new point and, via `interval_width`, the size of the
/// accepted slice interval (usable for width adaptation).
double slice_sample(const std::function<double(double)>& log_density, double x0,
                    double width, Rng& rng, double* interval_width = nullptr);

}  // namespace ssp
