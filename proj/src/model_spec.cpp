#include "ssp/model_spec.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "ssp/stats.hpp"

namespace ssp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void add(std::vector<ParamDecl>& graph, std::string name, std::string prior,
         std::vector<std::string> deps = {}) {
  graph.push_back({std::move(name), std::move(prior), std::move(deps)});
}

std::vector<ParamDecl> intercept_mvn_graph() {
  std::vector<ParamDecl> g;
  add(g, "Sigma_theta", "InverseWishart(I_M, M+1)");
  add(g, "Sigma_alpha", "InverseWishart(I_M, M+1)");
  add(g, "theta", "MVN(0, Sigma_theta)", {"Sigma_theta"});
  add(g, "alpha", "MVN(theta[c], Sigma_alpha)", {"theta", "Sigma_alpha"});
  return g;
}

std::vector<ParamDecl> intercept_diag_graph(const std::string& country_sd_prior) {
  std::vector<ParamDecl> g;
  add(g, "sd_theta", country_sd_prior);
  add(g, "sd_alpha", "HalfNormal(0, 2^2)");
  add(g, "theta", "Normal(0, sd_theta[m]^2)", {"sd_theta"});
  add(g, "alpha", "Normal(theta[c,m], sd_alpha[m]^2)", {"theta", "sd_alpha"});
  return g;
}

}  // namespace

void ModelSpec::validate() const {
  std::set<std::string> names;
  for (const auto& decl : prior_graph) {
    if (decl.prior.empty()) {
      throw ConfigError("parameter '" + decl.name + "' declared without a prior");
    }
    if (!names.insert(decl.name).second) {
      throw ConfigError("parameter '" + decl.name + "' declared twice");
    }
  }
  for (const auto& decl : prior_graph) {
    for (const auto& dep : decl.depends_on) {
      if (names.count(dep) == 0) {
        throw ConfigError("parameter '" + decl.name + "' depends on undeclared '" +
                          dep + "'");
      }
    }
  }
}

ModelSpec build_multivariate_intercept() {
  ModelSpec spec;
  spec.family = ModelFamily::multivariate_intercept;
  spec.name = "multivariate_intercept";
  spec.k_star_mode = KStarMode::anchored;
  spec.prior_graph = intercept_mvn_graph();
  add(spec.prior_graph, "sigma_delta", "HalfNormal(0, 2^2)");
  add(spec.prior_graph, "delta", "Normal(0, sigma_delta^2)", {"sigma_delta"});
  spec.validate();
  return spec;
}

ModelSpec build_zero_covariance() {
  ModelSpec spec;
  spec.family = ModelFamily::zero_covariance;
  spec.name = "zero_covariance";
  spec.k_star_mode = KStarMode::anchored;
  spec.prior_graph = intercept_diag_graph("HalfNormal(0, 2^2)");
  add(spec.prior_graph, "sigma_delta", "HalfNormal(0, 2^2)");
  add(spec.prior_graph, "delta", "Normal(0, sigma_delta^2)", {"sigma_delta"});
  spec.validate();
  return spec;
}

ModelSpec build_multivariate_delta() {
  ModelSpec spec;
  spec.family = ModelFamily::multivariate_delta;
  spec.name = "multivariate_delta";
  spec.k_star_mode = KStarMode::anchored;
  spec.prior_graph = intercept_diag_graph("HalfNormal(0, 2^2)");
  add(spec.prior_graph, "Sigma_delta", "InverseWishart(I_M, M+1)");
  add(spec.prior_graph, "delta", "MVN(0, Sigma_delta) across methods",
      {"Sigma_delta"});
  spec.validate();
  return spec;
}

ModelSpec build_shrinkage() {
  ModelSpec spec;
  spec.family = ModelFamily::shrinkage;
  spec.name = "shrinkage";
  spec.k_star_mode = KStarMode::ar1;
  spec.prior_graph = intercept_diag_graph("HalfCauchy(0, 1)");
  add(spec.prior_graph, "kappa_b2", "kappa_b2/2 ~ F(1,1)");
  add(spec.prior_graph, "a_xi", "2*a_xi ~ Beta(5,10)");
  add(spec.prior_graph, "c_xi", "2*c_xi ~ Beta(5,2)");
  add(spec.prior_graph, "kappa2", "Gamma(c_xi, c_xi/kappa_b2)", {"c_xi", "kappa_b2"});
  add(spec.prior_graph, "xi2", "Gamma(a_xi, a_xi*kappa2[m]/2)", {"a_xi", "kappa2"});
  add(spec.prior_graph, "sigma_beta", "HalfNormal(0, xi2[m])", {"xi2"});
  add(spec.prior_graph, "beta",
      "AR1: beta_k ~ Normal(beta_{k-1}, sigma_beta[m]^2), sum-to-zero",
      {"sigma_beta"});
  spec.validate();
  return spec;
}

ModelSpec build_fully_multivariate() {
  ModelSpec spec;
  spec.family = ModelFamily::fully_multivariate;
  spec.name = "fully_multivariate";
  spec.k_star_mode = KStarMode::ar1;
  spec.prior_graph = intercept_mvn_graph();
  add(spec.prior_graph, "Sigma_beta", "InverseWishart(I_M, M+1)");
  add(spec.prior_graph, "beta",
      "MVN random walk: beta_{.,k} ~ MVN(beta_{.,k-1}, Sigma_beta), sum-to-zero",
      {"Sigma_beta"});
  spec.validate();
  return spec;
}

const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = {
      "multivariate_intercept", "multivariate_delta", "zero_covariance",
      "shrinkage", "fully_multivariate"};
  return names;
}

ModelSpec model_by_name(const std::string& name) {
  if (name == "multivariate_intercept") return build_multivariate_intercept();
  if (name == "multivariate_delta") return build_multivariate_delta();
  if (name == "zero_covariance") return build_zero_covariance();
  if (name == "shrinkage") return build_shrinkage();
  if (name == "fully_multivariate") return build_fully_multivariate();
  std::string msg = "unknown model '" + name + "'; valid models:";
  for (const auto& n : model_names()) msg += " " + n;
  throw ConfigError(msg);
}

Eigen::MatrixXd rw1_precision(int coeff_count) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(coeff_count, coeff_count);
  q(0, 0) = 1.0;  // chain initialized at zero
  for (int k = 1; k < coeff_count; ++k) {
    q(k, k) += 1.0;
    q(k - 1, k - 1) += 1.0;
    q(k - 1, k) -= 1.0;
    q(k, k - 1) -= 1.0;
  }
  return q;
}

namespace {

/// Log density of a zero-mean Gaussian RW1 block conditioned on summing to
/// zero: N_K(beta; 0, sd^2 Q^-1) / N_1(0; 0, sd^2 * 1'Q^-1 1).
double constrained_rw1_logpdf(const Eigen::VectorXd& beta, double sd,
                              const Eigen::MatrixXd& q, double logdet_q,
                              double ones_qinv_ones) {
  if (!(sd > 0.0)) return kNegInf;
  const int k = static_cast<int>(beta.size());
  const double qf = beta.dot(q * beta);
  const double unconstrained = -0.5 * k * kLog2Pi - k * std::log(sd) +
                               0.5 * logdet_q - 0.5 * qf / (sd * sd);
  const double constraint_marginal =
      -0.5 * kLog2Pi - std::log(sd) - 0.5 * std::log(ones_qinv_ones);
  return unconstrained - constraint_marginal;
}

/// Same for the cross-method MVN random walk with M sum-to-zero constraints.
double constrained_mvn_rw_logpdf(const std::vector<Eigen::VectorXd>& beta_by_method,
                                 const Eigen::MatrixXd& sigma,
                                 const Eigen::MatrixXd& q, double logdet_q,
                                 double ones_qinv_ones) {
  const int m_count = static_cast<int>(beta_by_method.size());
  const int k = static_cast<int>(beta_by_method[0].size());
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) return kNegInf;
  double logdet_sigma = 0.0;
  for (int i = 0; i < m_count; ++i) {
    logdet_sigma += 2.0 * std::log(llt.matrixL()(i, i));
  }
  // S = sum_kk' Q_kk' beta_k beta_k' over method vectors beta_k in R^M.
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(m_count, m_count);
  auto col_at = [&](int kk) {
    Eigen::VectorXd v(m_count);
    for (int m = 0; m < m_count; ++m) v(m) = beta_by_method[m](kk);
    return v;
  };
  {
    const Eigen::VectorXd b0 = col_at(0);
    s += b0 * b0.transpose();
    for (int kk = 1; kk < k; ++kk) {
      const Eigen::VectorXd inc = col_at(kk) - col_at(kk - 1);
      s += inc * inc.transpose();
    }
  }
  const double quad = llt.solve(s).trace();
  const double unconstrained = -0.5 * m_count * k * kLog2Pi + 0.5 * m_count * logdet_q -
                               0.5 * k * logdet_sigma - 0.5 * quad;
  const double constraint_marginal =
      -0.5 * m_count * kLog2Pi - 0.5 * m_count * std::log(ones_qinv_ones) -
      0.5 * logdet_sigma;
  return unconstrained - constraint_marginal;
}

}  // namespace

std::vector<std::pair<std::string, double>> model_log_prior_terms(
    const ModelSpec& spec, const ModelData& data, const ParameterState& state) {
  if (spec.family == ModelFamily::multivariate_intercept && !spec.fixed.theta &&
      !spec.fixed.sigma_theta && !spec.fixed.sigma_alpha && !spec.fixed.sigma_delta) {
    return log_prior_terms(data, state);
  }

  const int M = data.n_methods();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(M, M);
  std::vector<std::pair<std::string, double>> terms;

  // Intercept hierarchy.
  if (spec.full_intercept_cov()) {
    if (!spec.fixed.sigma_theta) {
      terms.emplace_back("Sigma_theta", log_inverse_wishart_pdf(
                                            state.global.sigma_theta, eye, M + 1));
    }
    if (!spec.fixed.sigma_alpha) {
      terms.emplace_back("Sigma_alpha", log_inverse_wishart_pdf(
                                            state.global.sigma_alpha, eye, M + 1));
    }
    if (!spec.fixed.theta) {
      for (int c = 0; c < data.n_countries(); ++c) {
        terms.emplace_back("theta[" + data.country_ids[c] + "]",
                           log_mvn_pdf(state.country.theta.row(c).transpose(),
                                       Eigen::VectorXd::Zero(M),
                                       state.global.sigma_theta));
      }
    }
    for (int p = 0; p < data.n_regions(); ++p) {
      terms.emplace_back(
          "alpha[" + data.region_ids[p] + "]",
          log_mvn_pdf(state.region.alpha.row(p).transpose(),
                      state.country.theta.row(data.region_country[p]).transpose(),
                      state.global.sigma_alpha));
    }
  } else {
    const bool cauchy_country = spec.family == ModelFamily::shrinkage;
    for (int m = 0; m < M; ++m) {
      const std::string tok(method_token(data.methods[m]));
      terms.emplace_back("sd_theta[" + tok + "]",
                         cauchy_country
                             ? log_half_cauchy_pdf(state.ext.sd_theta(m), 1.0)
                             : log_half_normal_pdf(state.ext.sd_theta(m), 2.0));
      terms.emplace_back("sd_alpha[" + tok + "]",
                         log_half_normal_pdf(state.ext.sd_alpha(m), 2.0));
    }
    if (!spec.fixed.theta) {
      double t = 0.0;
      for (int c = 0; c < data.n_countries(); ++c) {
        for (int m = 0; m < M; ++m) {
          t += log_normal_pdf(state.country.theta(c, m), 0.0, state.ext.sd_theta(m));
        }
      }
      terms.emplace_back("theta", t);
    }
    double a = 0.0;
    for (int p = 0; p < data.n_regions(); ++p) {
      for (int m = 0; m < M; ++m) {
        a += log_normal_pdf(state.region.alpha(p, m),
                            state.country.theta(data.region_country[p], m),
                            state.ext.sd_alpha(m));
      }
    }
    terms.emplace_back("alpha", a);
  }

  // Rates of change / spline coefficients.
  switch (spec.family) {
    case ModelFamily::multivariate_intercept:
    case ModelFamily::zero_covariance: {
      const double sd = state.global.sigma_delta;
      double t = 0.0;
      if (!(sd > 0.0)) {
        t = kNegInf;
      } else {
        for (int p = 0; p < data.n_regions(); ++p) {
          for (int m = 0; m < M; ++m) {
            const Eigen::VectorXd& d = state.region.delta[p][m];
            t += -0.5 * d.size() * (kLog2Pi + 2.0 * std::log(sd)) -
                 0.5 * d.squaredNorm() / (sd * sd);
          }
        }
      }
      terms.emplace_back("delta", t);
      if (!spec.fixed.sigma_delta) {
        terms.emplace_back("sigma_delta", log_half_normal_pdf(sd, 2.0));
      }
      break;
    }
    case ModelFamily::multivariate_delta: {
      if (!spec.fixed.sigma_delta_mv) {
        terms.emplace_back("Sigma_delta", log_inverse_wishart_pdf(
                                              state.ext.sigma_delta_mv, eye, M + 1));
      }
      double t = 0.0;
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(M);
      for (int p = 0; p < data.n_regions(); ++p) {
        const int steps = data.coeff_count(p) - 1;
        Eigen::VectorXd v(M);
        for (int k = 0; k < steps; ++k) {
          for (int m = 0; m < M; ++m) v(m) = state.region.delta[p][m](k);
          t += log_mvn_pdf(v, zero, state.ext.sigma_delta_mv);
        }
      }
      terms.emplace_back("delta", t);
      break;
    }
    case ModelFamily::shrinkage: {
      const ShrinkageParams& sp = state.ext.shrink;
      double t = 0.0;
      for (int p = 0; p < data.n_regions(); ++p) {
        const int K = data.coeff_count(p);
        const Eigen::MatrixXd q = rw1_precision(K);
        const Eigen::LLT<Eigen::MatrixXd> llt(q);
        double logdet_q = 0.0;
        for (int i = 0; i < K; ++i) logdet_q += 2.0 * std::log(llt.matrixL()(i, i));
        const double oqo = llt.solve(Eigen::VectorXd::Ones(K)).sum();
        for (int m = 0; m < M; ++m) {
          t += constrained_rw1_logpdf(state.ext.beta[p][m], sp.sigma_beta(m), q,
                                      logdet_q, oqo);
        }
      }
      terms.emplace_back("beta", t);
      if (!spec.fixed.sigma_beta) {
        for (int m = 0; m < M; ++m) {
          const std::string tok(method_token(data.methods[m]));
          terms.emplace_back(
              "sigma_beta[" + tok + "]",
              log_half_normal_pdf(sp.sigma_beta(m), std::sqrt(sp.xi2(m))));
          terms.emplace_back(
              "xi2[" + tok + "]",
              log_gamma_pdf(sp.xi2(m), sp.a_xi, 0.5 * sp.a_xi * sp.kappa2(m)));
          terms.emplace_back(
              "kappa2[" + tok + "]",
              log_gamma_pdf(sp.kappa2(m), sp.c_xi, sp.c_xi / sp.kappa_b2));
        }
        // Jacobians of the scaled hyperpriors are constants.
        terms.emplace_back("a_xi",
                           log_beta_pdf(2.0 * sp.a_xi, 5.0, 10.0) + std::log(2.0));
        terms.emplace_back("c_xi",
                           log_beta_pdf(2.0 * sp.c_xi, 5.0, 2.0) + std::log(2.0));
        terms.emplace_back("kappa_b2",
                           log_f_pdf(0.5 * sp.kappa_b2, 1.0, 1.0) - std::log(2.0));
      }
      break;
    }
    case ModelFamily::fully_multivariate: {
      if (!spec.fixed.sigma_beta_mv) {
        terms.emplace_back("Sigma_beta", log_inverse_wishart_pdf(
                                             state.ext.sigma_beta_mv, eye, M + 1));
      }
      double t = 0.0;
      for (int p = 0; p < data.n_regions(); ++p) {
        const int K = data.coeff_count(p);
        const Eigen::MatrixXd q = rw1_precision(K);
        const Eigen::LLT<Eigen::MatrixXd> llt(q);
        double logdet_q = 0.0;
        for (int i = 0; i < K; ++i) logdet_q += 2.0 * std::log(llt.matrixL()(i, i));
        const double oqo = llt.solve(Eigen::VectorXd::Ones(K)).sum();
        t += constrained_mvn_rw_logpdf(state.ext.beta[p], state.ext.sigma_beta_mv, q,
                                       logdet_q, oqo);
      }
      terms.emplace_back("beta", t);
      break;
    }
  }
  return terms;
}

double model_log_prior(const ModelSpec& spec, const ModelData& data,
                       const ParameterState& state) {
  double total = 0.0;
  for (const auto& [name, value] : model_log_prior_terms(spec, data, state)) {
    total += value;
  }
  return total;
}

std::vector<std::pair<std::string, double>> model_log_likelihood_terms(
    const ModelSpec& spec, const ModelData& data, const ParameterState& state) {
  if (spec.anchored()) return log_likelihood_terms(data, state);

  std::vector<std::pair<std::string, double>> terms;
  for (int p = 0; p < data.n_regions(); ++p) {
    for (int m = 0; m < data.n_methods(); ++m) {
      const CellObservations& cell = data.cells[p][m];
      if (cell.n() == 0) continue;
      const Eigen::VectorXd psi =
          Eigen::VectorXd::Constant(cell.n(), state.region.alpha(p, m)) +
          cell.B * state.ext.beta[p][m];
      double ll = 0.0;
      for (int i = 0; i < cell.n(); ++i) {
        const double r = cell.z(i) - psi(i);
        ll += 0.5 * std::log(cell.prec(i)) - 0.5 * kLog2Pi -
              0.5 * r * r * cell.prec(i);
      }
      terms.emplace_back("likelihood[" + data.region_ids[p] + "," +
                             std::string(method_token(data.methods[m])) + "]",
                         ll);
    }
  }
  return terms;
}

double model_log_likelihood(const ModelSpec& spec, const ModelData& data,
                            const ParameterState& state) {
  double total = 0.0;
  for (const auto& [name, value] : model_log_likelihood_terms(spec, data, state)) {
    total += value;
  }
  return total;
}

}  // namespace ssp
