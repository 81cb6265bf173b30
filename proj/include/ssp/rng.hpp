#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace ssp {

/// Deterministic random source for the samplers.
///
/// All distributions are generated in-library from a mt19937_64 stream so that
/// a fixed seed reproduces draws bit-for-bit regardless of the standard
/// library in use. Each chain owns one Rng.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1).
  double uniform() {
    // 53-bit mantissa resolution.
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via the Marsaglia polar method (no cached spare).
  double normal() {
    for (;;) {
      const double u = 2.0 * uniform() - 1.0;
      const double v = 2.0 * uniform() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) {
        return u * std::sqrt(-2.0 * std::log(s) / s);
      }
    }
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Gamma(shape, rate) via Marsaglia–Tsang.
  double gamma(double shape, double rate);

  double chi_square(double df) { return gamma(0.5 * df, 0.5); }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  /// F(d1, d2) as a ratio of scaled chi-squares.
  double f_dist(double d1, double d2) {
    return (chi_square(d1) / d1) / (chi_square(d2) / d2);
  }

  double half_normal(double sd) { return std::abs(normal(0.0, sd)); }

  double half_cauchy(double scale) {
    // Inverse-CDF of the positive half.
    return scale * std::tan(1.5707963267948966 * uniform());
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z(i) = normal();
    return z;
  }

  /// Draw from MVN(mean, Sigma) with Sigma supplied directly.
  Eigen::VectorXd mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& sigma);

  /// Draw from the Gaussian with canonical parameters: precision Lambda and
  /// linear term eta, i.e. N(Lambda^-1 eta, Lambda^-1).
  Eigen::VectorXd mvn_from_canonical(const Eigen::VectorXd& eta,
                                     const Eigen::MatrixXd& lambda);

  /// Wishart(df, scale) via the Bartlett decomposition. df > dim - 1.
  Eigen::MatrixXd wishart(double df, const Eigen::MatrixXd& scale);

  /// Inverse-Wishart(df, psi): X^-1 with X ~ Wishart(df, psi^-1).
  Eigen::MatrixXd inverse_wishart(double df, const Eigen::MatrixXd& psi);

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace ssp
