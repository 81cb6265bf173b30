#include "ssp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ssp/rng.hpp"
#include "ssp/stats.hpp"

namespace ssp {

SimulationTruth desk_scale_scenario(std::uint64_t seed) {
  SimulationTruth truth;
  truth.seed = seed;
  // Moderate generating hyperparameters keep the shares away from the
  // boundaries; draw them from the priors instead by clearing these fields.
  const int M = static_cast<int>(truth.methods.size());
  Eigen::MatrixXd sigma_theta(M, M), sigma_alpha(M, M);
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j) {
      sigma_theta(i, j) = (i == j) ? 0.49 : 0.49 * 0.3;
      sigma_alpha(i, j) = (i == j) ? 0.16 : 0.16 * 0.5;
    }
  }
  truth.sigma_theta = sigma_theta;
  truth.sigma_alpha = sigma_alpha;
  truth.sigma_delta = 0.15;
  return truth;
}

SimulatedData simulate_dataset(const SimulationTruth& truth) {
  if (truth.countries <= 0 || truth.regions_per_country <= 0 ||
      truth.methods.empty() || truth.design.empty()) {
    throw ConfigError("simulation scenario must have countries, regions, methods "
                      "and survey years");
  }
  for (const auto& pt : truth.design) {
    if (!truth.window.contains(pt.year)) {
      throw ConfigError("survey design year outside the time window");
    }
    if (!(pt.logit_se > 0.0)) throw ConfigError("survey SE must be positive");
  }

  Rng rng(truth.seed);
  const int M = static_cast<int>(truth.methods.size());
  const int C = truth.countries;
  const int P = C * truth.regions_per_country;

  ParameterState st;
  st.global.sigma_theta = truth.sigma_theta.value_or(Eigen::MatrixXd::Zero(M, M));
  if (!truth.sigma_theta) {
    st.global.sigma_theta =
        rng.inverse_wishart(M + 1, Eigen::MatrixXd::Identity(M, M));
  }
  st.global.sigma_alpha = truth.sigma_alpha.value_or(Eigen::MatrixXd::Zero(M, M));
  if (!truth.sigma_alpha) {
    st.global.sigma_alpha =
        rng.inverse_wishart(M + 1, Eigen::MatrixXd::Identity(M, M));
  }
  st.global.sigma_delta = truth.sigma_delta.value_or(0.0);
  if (!truth.sigma_delta) st.global.sigma_delta = rng.half_normal(2.0);

  // Country and region levels.
  st.country.theta.resize(C, M);
  for (int c = 0; c < C; ++c) {
    if (truth.theta) {
      st.country.theta.row(c) = truth.theta->row(c);
    } else {
      st.country.theta.row(c) =
          rng.mvn(Eigen::VectorXd::Zero(M), st.global.sigma_theta).transpose();
    }
  }
  st.region.alpha.resize(P, M);
  for (int p = 0; p < P; ++p) {
    const int c = p / truth.regions_per_country;
    if (truth.alpha) {
      st.region.alpha.row(p) = truth.alpha->row(p);
    } else {
      st.region.alpha.row(p) =
          rng.mvn(st.country.theta.row(c).transpose(), st.global.sigma_alpha)
              .transpose();
    }
  }

  // Anchored basis shared by all regions: every region's latest survey is the
  // last design year.
  int anchor_year = truth.design.front().year;
  for (const auto& pt : truth.design) anchor_year = std::max(anchor_year, pt.year);
  const KnotVector knots = place_knots(truth.window, anchor_year,
                                       truth.spline.knot_spacing,
                                       truth.spline.degree);
  const int K = knots.basis_count();
  const int anchor_idx = anchor_coefficient(knots);

  st.region.delta.resize(P);
  for (int p = 0; p < P; ++p) {
    st.region.delta[p].assign(M, Eigen::VectorXd::Zero(K - 1));
    for (int m = 0; m < M; ++m) {
      if (!truth.zero_delta) {
        for (int k = 0; k < K - 1; ++k) {
          st.region.delta[p][m](k) = rng.normal(0.0, st.global.sigma_delta);
        }
      }
    }
  }

  // Observations: logit(y) = psi + noise, mapped back with an SE that the
  // delta-method transform inverts exactly.
  std::vector<Eigen::VectorXd> design_rows;
  design_rows.reserve(truth.design.size());
  for (const auto& pt : truth.design) {
    design_rows.push_back(basis_row(knots, pt.year));
  }

  std::vector<Observation> observations;
  auto pad2 = [](int v) {
    return (v < 10 ? "0" : "") + std::to_string(v);
  };
  for (int p = 0; p < P; ++p) {
    const int c = p / truth.regions_per_country;
    const std::string country_id = "c" + pad2(c + 1);
    const std::string region_id = country_id + "_r" + pad2(p % truth.regions_per_country + 1);
    for (int m = 0; m < M; ++m) {
      const Eigen::VectorXd beta =
          reconstruct_beta(st.region.alpha(p, m), st.region.delta[p][m], anchor_idx);
      for (std::size_t d = 0; d < truth.design.size(); ++d) {
        const double psi = design_rows[d].dot(beta);
        const double z = psi + rng.normal(0.0, truth.design[d].logit_se);
        double y = inverse_logit(z);
        y = std::clamp(y, 1e-12, 1.0 - 1e-12);
        Observation obs;
        obs.country_id = country_id;
        obs.region_id = region_id;
        obs.method = truth.methods[m];
        obs.year = truth.design[d].year;
        obs.proportion_public = y;
        obs.se_proportion = truth.design[d].logit_se * y * (1.0 - y);
        observations.push_back(std::move(obs));
      }
    }
  }

  SimulatedData out{Dataset::from_observations(std::move(observations), truth.window),
                    ModelData{}, std::move(st), LatentTrajectory{}};
  out.data = ModelData::build(out.dataset, truth.spline);
  out.psi = latent_trajectory(out.data, out.truth, /*anchored=*/true);
  return out;
}

// --- reference sampler -------------------------------------------------------------

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Hand-rolled Cholesky kept separate from the Eigen path the samplers use.
struct OwnChol {
  bool ok = false;
  Eigen::MatrixXd l;
  double logdet = 0.0;

  explicit OwnChol(const Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    l = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j) {
        double s = a(i, j);
        for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        if (i == j) {
          if (s <= 0.0) return;
          l(i, i) = std::sqrt(s);
          logdet += 2.0 * std::log(l(i, i));
        } else {
          l(i, j) = s / l(j, j);
        }
      }
    }
    ok = true;
  }

  double quad_inv(const Eigen::VectorXd& v) const {
    // v' A^-1 v via forward substitution.
    Eigen::VectorXd w = v;
    const int n = static_cast<int>(l.rows());
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < i; ++k) w(i) -= l(i, k) * w(k);
      w(i) /= l(i, i);
    }
    return w.squaredNorm();
  }

  double trace_inv(const Eigen::MatrixXd& b) const {
    // tr(A^-1 B) = sum of quad_inv over columns of B^(1/2)... computed column
    // by column: tr(A^-1 B) = sum_j e_j' A^-1 B e_j.
    const int n = static_cast<int>(l.rows());
    double tr = 0.0;
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd w = b.col(j);
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < i; ++k) w(i) -= l(i, k) * w(k);
        w(i) /= l(i, i);
      }
      for (int i = n - 1; i >= 0; --i) {
        for (int k = i + 1; k < n; ++k) w(i) -= l(k, i) * w(k);
        w(i) /= l(i, i);
      }
      tr += w(j);
    }
    return tr;
  }
};

double own_lgamma_multi(int dim, double a) {
  double r = 0.25 * dim * (dim - 1) * std::log(M_PI);
  for (int j = 0; j < dim; ++j) r += std::lgamma(a - 0.5 * j);
  return r;
}

double own_normal_lpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.918938533204672742 - std::log(sd) - 0.5 * z * z;
}

double own_mvn_lpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                    const OwnChol& chol) {
  if (!chol.ok) return kNegInf;
  const int n = static_cast<int>(x.size());
  return -0.918938533204672742 * n - 0.5 * chol.logdet -
         0.5 * chol.quad_inv(x - mean);
}

double own_iw_lpdf(const Eigen::MatrixXd& x, double df) {
  // Scale matrix fixed at the identity.
  const int m = static_cast<int>(x.rows());
  const OwnChol chol(x);
  if (!chol.ok) return kNegInf;
  return -0.5 * df * m * std::log(2.0) - own_lgamma_multi(m, 0.5 * df) -
         0.5 * (df + m + 1.0) * chol.logdet -
         0.5 * chol.trace_inv(Eigen::MatrixXd::Identity(m, m));
}

struct RefLayout {
  bool free_theta = true;
  bool free_sigma_theta = true;
  bool free_sigma_alpha = true;
  bool free_sigma_delta = true;
  int n_theta = 0, n_alpha = 0, n_delta = 0, n_vech = 0;
  int dim = 0;
  std::vector<std::string> names;
};

}  // namespace

double ReferenceResult::mean_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("unknown reference parameter: " + name);
  return mean[static_cast<std::size_t>(it - names.begin())];
}

double ReferenceResult::mcse_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("unknown reference parameter: " + name);
  return mcse[static_cast<std::size_t>(it - names.begin())];
}

ReferenceResult reference_posterior(const ModelSpec& spec, const ModelData& data,
                                    const ReferenceOptions& options) {
  if (spec.family != ModelFamily::multivariate_intercept) {
    throw ConfigError("the reference sampler covers the multivariate-intercept "
                      "model only");
  }
  const int M = data.n_methods();
  const int C = data.n_countries();
  const int P = data.n_regions();

  RefLayout lay;
  lay.free_theta = !spec.fixed.theta.has_value();
  lay.free_sigma_theta = !spec.fixed.sigma_theta.has_value();
  lay.free_sigma_alpha = !spec.fixed.sigma_alpha.has_value();
  lay.free_sigma_delta = !spec.fixed.sigma_delta.has_value();
  lay.n_theta = lay.free_theta ? C * M : 0;
  lay.n_alpha = P * M;
  for (int p = 0; p < P; ++p) lay.n_delta += M * (data.coeff_count(p) - 1);
  lay.n_vech = M * (M + 1) / 2;
  lay.dim = lay.n_theta + lay.n_alpha + lay.n_delta +
            (lay.free_sigma_theta ? lay.n_vech : 0) +
            (lay.free_sigma_alpha ? lay.n_vech : 0) + (lay.free_sigma_delta ? 1 : 0);
  if (lay.dim > 30) {
    throw ConfigError("reference sampler supports at most 30 free parameters, got " +
                      std::to_string(lay.dim));
  }

  auto tok = [&](int m) { return std::string(method_token(data.methods[m])); };
  if (lay.free_theta) {
    for (int c = 0; c < C; ++c) {
      for (int m = 0; m < M; ++m) {
        lay.names.push_back("theta[" + data.country_ids[c] + "," + tok(m) + "]");
      }
    }
  }
  for (int p = 0; p < P; ++p) {
    for (int m = 0; m < M; ++m) {
      lay.names.push_back("alpha[" + data.region_ids[p] + "," + tok(m) + "]");
    }
  }
  for (int p = 0; p < P; ++p) {
    for (int m = 0; m < M; ++m) {
      for (int k = 1; k < data.coeff_count(p); ++k) {
        lay.names.push_back("delta[" + data.region_ids[p] + "," + tok(m) + "," +
                            std::to_string(k) + "]");
      }
    }
  }
  auto vech_names = [&](const std::string& base) {
    for (int i = 1; i <= M; ++i) {
      for (int j = i; j <= M; ++j) {
        lay.names.push_back(base + "[" + std::to_string(i) + "," +
                            std::to_string(j) + "]");
      }
    }
  };
  if (lay.free_sigma_theta) vech_names("Sigma_theta");
  if (lay.free_sigma_alpha) vech_names("Sigma_alpha");
  if (lay.free_sigma_delta) lay.names.push_back("sigma_delta");

  // Scratch state used by the density evaluation.
  Eigen::MatrixXd theta(C, M), alpha(P, M), sigma_theta(M, M), sigma_alpha(M, M);
  if (spec.fixed.theta) theta = *spec.fixed.theta;
  if (spec.fixed.sigma_theta) sigma_theta = *spec.fixed.sigma_theta;
  if (spec.fixed.sigma_alpha) sigma_alpha = *spec.fixed.sigma_alpha;
  double sigma_delta = spec.fixed.sigma_delta.value_or(0.1);
  std::vector<std::vector<Eigen::VectorXd>> delta(P);
  for (int p = 0; p < P; ++p) {
    delta[p].assign(M, Eigen::VectorXd::Zero(data.coeff_count(p) - 1));
  }

  auto unpack = [&](const Eigen::VectorXd& x) {
    int idx = 0;
    if (lay.free_theta) {
      for (int c = 0; c < C; ++c) {
        for (int m = 0; m < M; ++m) theta(c, m) = x(idx++);
      }
    }
    for (int p = 0; p < P; ++p) {
      for (int m = 0; m < M; ++m) alpha(p, m) = x(idx++);
    }
    for (int p = 0; p < P; ++p) {
      for (int m = 0; m < M; ++m) {
        for (int k = 0; k < data.coeff_count(p) - 1; ++k) {
          delta[p][m](k) = x(idx++);
        }
      }
    }
    auto read_vech = [&](Eigen::MatrixXd& s) {
      for (int i = 0; i < M; ++i) {
        for (int j = i; j < M; ++j) {
          s(i, j) = x(idx);
          s(j, i) = x(idx);
          ++idx;
        }
      }
    };
    if (lay.free_sigma_theta) read_vech(sigma_theta);
    if (lay.free_sigma_alpha) read_vech(sigma_alpha);
    if (lay.free_sigma_delta) sigma_delta = x(idx++);
  };

  // Brute-force joint density: every term evaluated from scratch with local
  // density code and a naive coefficient recursion.
  auto log_post = [&](const Eigen::VectorXd& x) {
    unpack(x);
    if (!(sigma_delta > 0.0)) return kNegInf;
    const OwnChol chol_theta(sigma_theta);
    const OwnChol chol_alpha(sigma_alpha);
    if (!chol_theta.ok || !chol_alpha.ok) return kNegInf;

    double lp = 0.0;
    if (lay.free_sigma_theta) lp += own_iw_lpdf(sigma_theta, M + 1);
    if (lay.free_sigma_alpha) lp += own_iw_lpdf(sigma_alpha, M + 1);
    if (lay.free_sigma_delta) {
      lp += std::log(2.0) + own_normal_lpdf(sigma_delta, 0.0, 2.0);
    }
    if (lay.free_theta) {
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(M);
      for (int c = 0; c < C; ++c) {
        lp += own_mvn_lpdf(theta.row(c).transpose(), zero, chol_theta);
      }
    }
    for (int p = 0; p < P; ++p) {
      lp += own_mvn_lpdf(alpha.row(p).transpose(),
                         theta.row(data.region_country[p]).transpose(), chol_alpha);
    }
    for (int p = 0; p < P; ++p) {
      const int K = data.coeff_count(p);
      for (int m = 0; m < M; ++m) {
        for (int k = 0; k < K - 1; ++k) {
          lp += own_normal_lpdf(delta[p][m](k), 0.0, sigma_delta);
        }
        // Coefficients by direct recursion, then the Gaussian data model.
        Eigen::VectorXd beta(K);
        beta(data.anchor[p]) = alpha(p, m);
        for (int k = data.anchor[p] + 1; k < K; ++k) {
          beta(k) = beta(k - 1) + delta[p][m](k - 1);
        }
        for (int k = data.anchor[p] - 1; k >= 0; --k) {
          beta(k) = beta(k + 1) - delta[p][m](k);
        }
        const CellObservations& cell = data.cells[p][m];
        for (int i = 0; i < cell.n(); ++i) {
          double psi = 0.0;
          for (int k = 0; k < K; ++k) psi += beta(k) * cell.B(i, k);
          const double sd = 1.0 / std::sqrt(cell.prec(i));
          lp += own_normal_lpdf(cell.z(i), psi, sd);
        }
      }
    }
    return lp;
  };

  // Starting point: zeros with identity covariances.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(lay.dim);
  {
    int idx = lay.n_theta + lay.n_alpha + lay.n_delta;
    auto ident_vech = [&]() {
      for (int i = 0; i < M; ++i) {
        for (int j = i; j < M; ++j) x(idx++) = (i == j) ? 1.0 : 0.0;
      }
    };
    if (lay.free_sigma_theta) ident_vech();
    if (lay.free_sigma_alpha) ident_vech();
    if (lay.free_sigma_delta) x(idx++) = 0.5;
  }

  Rng rng(options.seed);
  double current = log_post(x);
  if (!std::isfinite(current)) {
    throw Error("reference sampler: non-finite density at the starting point");
  }

  Eigen::VectorXd steps = Eigen::VectorXd::Constant(lay.dim, options.initial_step);
  Eigen::VectorXd accepted_in_window = Eigen::VectorXd::Zero(lay.dim);
  long window_count = 0;

  const long post_iters = options.iterations - options.burn_in;
  if (post_iters <= 0) throw ConfigError("reference budget smaller than burn-in");
  const int B = options.batches;
  const long batch_len = std::max<long>(1, post_iters / B);

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(lay.dim);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(lay.dim);
  Eigen::MatrixXd batch_means = Eigen::MatrixXd::Zero(B, lay.dim);
  Eigen::VectorXd batch_accum = Eigen::VectorXd::Zero(lay.dim);
  long kept = 0;
  long long accept_count = 0;
  long long propose_count = 0;

  for (long iter = 0; iter < options.iterations; ++iter) {
    const bool adapting = iter < options.burn_in;
    for (int j = 0; j < lay.dim; ++j) {
      const double old = x(j);
      x(j) = old + steps(j) * rng.normal();
      const double proposal = log_post(x);
      const double log_u = std::log(rng.uniform() + 1e-300);
      if (proposal - current > log_u) {
        current = proposal;
        if (adapting) accepted_in_window(j) += 1.0;
        if (!adapting) ++accept_count;
      } else {
        x(j) = old;
      }
      if (!adapting) ++propose_count;
    }
    if (adapting) {
      ++window_count;
      if (window_count == 100) {
        for (int j = 0; j < lay.dim; ++j) {
          const double rate = accepted_in_window(j) / 100.0;
          steps(j) *= std::exp(0.5 * (rate - 0.44));
          steps(j) = std::clamp(steps(j), 1e-4, 10.0);
        }
        accepted_in_window.setZero();
        window_count = 0;
      }
    } else {
      sum += x;
      sum_sq += x.cwiseProduct(x);
      batch_accum += x;
      ++kept;
      if (kept % batch_len == 0) {
        const long b = kept / batch_len - 1;
        if (b < B) batch_means.row(b) = (batch_accum / batch_len).transpose();
        batch_accum.setZero();
      }
    }
  }

  ReferenceResult result;
  result.names = lay.names;
  result.budget_warning = post_iters < 1000L * lay.dim;
  result.acceptance_rate =
      propose_count > 0 ? static_cast<double>(accept_count) / propose_count : 0.0;
  const double n = static_cast<double>(kept);
  const long used_batches = std::min<long>(B, kept / batch_len);
  for (int j = 0; j < lay.dim; ++j) {
    const double m = sum(j) / n;
    result.mean.push_back(m);
    result.sd.push_back(std::sqrt(std::max(0.0, sum_sq(j) / n - m * m)));
    std::vector<double> bm;
    for (long b = 0; b < used_batches; ++b) bm.push_back(batch_means(b, j));
    result.mcse.push_back(sample_sd(bm) / std::sqrt(static_cast<double>(used_batches)));
  }
  return result;
}

}  // namespace ssp
