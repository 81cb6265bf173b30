#include "ssp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ssp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double inverse_logit(double x) {
  // Branch on sign for numerical stability at large |x|.
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_normal_pdf(double x, double mean, double sd) {
  if (!(sd > 0.0)) return kNegInf;
  const double z = (x - mean) / sd;
  return -0.5 * kLog2Pi - std::log(sd) - 0.5 * z * z;
}

double log_half_normal_pdf(double x, double sd) {
  if (x < 0.0 || !(sd > 0.0)) return kNegInf;
  return std::log(2.0) + log_normal_pdf(x, 0.0, sd);
}

double log_half_cauchy_pdf(double x, double scale) {
  if (x < 0.0 || !(scale > 0.0)) return kNegInf;
  return std::log(2.0) - std::log(M_PI * scale * (1.0 + (x / scale) * (x / scale)));
}

double log_gamma_pdf(double x, double shape, double rate) {
  if (x <= 0.0 || shape <= 0.0 || rate <= 0.0) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) -
         rate * x;
}

double log_beta_pdf(double x, double a, double b) {
  if (x <= 0.0 || x >= 1.0) return kNegInf;
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
         (a - 1.0) * std::log(x) + (b - 1.0) * std::log(1.0 - x);
}

double log_f_pdf(double x, double d1, double d2) {
  if (x <= 0.0) return kNegInf;
  const double h1 = 0.5 * d1;
  const double h2 = 0.5 * d2;
  return std::lgamma(h1 + h2) - std::lgamma(h1) - std::lgamma(h2) +
         h1 * std::log(d1 / d2) + (h1 - 1.0) * std::log(x) -
         (h1 + h2) * std::log1p(d1 * x / d2);
}

double log_multigamma(int dim, double a) {
  double r = 0.25 * dim * (dim - 1) * std::log(M_PI);
  for (int j = 0; j < dim; ++j) r += std::lgamma(a - 0.5 * j);
  return r;
}

double log_mvn_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                   const Eigen::MatrixXd& sigma) {
  const int m = static_cast<int>(x.size());
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) return kNegInf;
  double log_det = 0.0;
  for (int i = 0; i < m; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  const Eigen::VectorXd diff = x - mean;
  const double quad = diff.dot(llt.solve(diff));
  return -0.5 * (m * kLog2Pi + log_det + quad);
}

double log_inverse_wishart_pdf(const Eigen::MatrixXd& x, const Eigen::MatrixXd& psi,
                               double df) {
  const int m = static_cast<int>(x.rows());
  Eigen::LLT<Eigen::MatrixXd> llt_x(x);
  Eigen::LLT<Eigen::MatrixXd> llt_psi(psi);
  if (llt_x.info() != Eigen::Success || llt_psi.info() != Eigen::Success) {
    return kNegInf;
  }
  double log_det_x = 0.0;
  double log_det_psi = 0.0;
  for (int i = 0; i < m; ++i) {
    log_det_x += 2.0 * std::log(llt_x.matrixL()(i, i));
    log_det_psi += 2.0 * std::log(llt_psi.matrixL()(i, i));
  }
  const double trace = llt_x.solve(psi).trace();
  return 0.5 * df * log_det_psi - 0.5 * df * m * std::log(2.0) -
         log_multigamma(m, 0.5 * df) - 0.5 * (df + m + 1.0) * log_det_x - 0.5 * trace;
}

Eigen::MatrixXd cov_to_corr(const Eigen::MatrixXd& sigma) {
  const int m = static_cast<int>(sigma.rows());
  Eigen::MatrixXd corr(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      corr(i, j) = sigma(i, j) / std::sqrt(sigma(i, i) * sigma(j, j));
    }
  }
  return corr;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty set");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile level outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double mean(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean of empty set");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double sample_sd(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / (static_cast<double>(values.size()) - 1.0));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) {
    if (p == 0.0) return kNegInf;
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("normal_quantile requires p in (0,1)");
  }
  // Acklam's algorithm.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q;
  double x;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement step.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double slice_sample(const std::function<double(double)>& log_density, double x0,
                    double width, Rng& rng, double* interval_width) {
  const double f0 = log_density(x0);
  if (!std::isfinite(f0)) {
    throw std::runtime_error("slice_sample: current point has non-finite density");
  }
  const double log_y = f0 + std::log(rng.uniform() + 1e-300);

  // Stepping out.
  double lo = x0 - width * rng.uniform();
  double hi = lo + width;
  constexpr int kMaxSteps = 64;
  for (int i = 0; i < kMaxSteps && log_density(lo) > log_y; ++i) lo -= width;
  for (int i = 0; i < kMaxSteps && log_density(hi) > log_y; ++i) hi += width;

  // Shrinkage.
  for (int i = 0; i < 256; ++i) {
    const double x1 = rng.uniform(lo, hi);
    if (log_density(x1) > log_y) {
      if (interval_width != nullptr) *interval_width = hi - lo;
      return x1;
    }
    if (x1 < x0) {
      lo = x1;
    } else {
      hi = x1;
    }
  }
  if (interval_width != nullptr) *interval_width = hi - lo;
  return x0;  // Degenerate slice; keep the current point.
}

}  // namespace ssp
