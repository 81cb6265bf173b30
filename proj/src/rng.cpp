#include "ssp/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace ssp {

double Rng::gamma(double shape, double rate) {
  if (shape <= 0.0 || rate <= 0.0) {
    throw std::invalid_argument("Rng::gamma requires positive shape and rate");
  }
  if (shape < 1.0) {
    // Boost to shape+1 and scale back.
    const double u = uniform();
    return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return d * v / rate;
    }
  }
}

Eigen::VectorXd Rng::mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("Rng::mvn: covariance not positive definite");
  }
  return mean + llt.matrixL() * normal_vector(static_cast<int>(mean.size()));
}

Eigen::VectorXd Rng::mvn_from_canonical(const Eigen::VectorXd& eta,
                                        const Eigen::MatrixXd& lambda) {
  Eigen::LLT<Eigen::MatrixXd> llt(lambda);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("Rng::mvn_from_canonical: precision not positive definite");
  }
  const Eigen::VectorXd mu = llt.solve(eta);
  // x = mu + L^-T z has covariance Lambda^-1.
  const Eigen::VectorXd z = normal_vector(static_cast<int>(eta.size()));
  return mu + llt.matrixU().solve(z);
}

Eigen::MatrixXd Rng::wishart(double df, const Eigen::MatrixXd& scale) {
  const int m = static_cast<int>(scale.rows());
  if (df <= m - 1) {
    throw std::invalid_argument("Rng::wishart: df must exceed dim - 1");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("Rng::wishart: scale not positive definite");
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    a(i, i) = std::sqrt(chi_square(df - i));
    for (int j = 0; j < i; ++j) a(i, j) = normal();
  }
  const Eigen::MatrixXd la = llt.matrixL() * a;
  return la * la.transpose();
}

Eigen::MatrixXd Rng::inverse_wishart(double df, const Eigen::MatrixXd& psi) {
  const int m = static_cast<int>(psi.rows());
  const Eigen::MatrixXd psi_inv =
      psi.llt().solve(Eigen::MatrixXd::Identity(m, m));
  // Symmetrize against round-off before the Bartlett factorization.
  const Eigen::MatrixXd w = wishart(df, 0.5 * (psi_inv + psi_inv.transpose()));
  Eigen::MatrixXd sigma = w.llt().solve(Eigen::MatrixXd::Identity(m, m));
  return 0.5 * (sigma + sigma.transpose());
}

}  // namespace ssp
