#include "ssp/process_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ssp/stats.hpp"

namespace ssp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

int ModelData::year_row(int year) const {
  if (year < window.start_year || year > window.end_year) {
    throw ValidationError("year " + std::to_string(year) + " off the model grid");
  }
  return year - window.start_year;
}

int ModelData::country_of_region_id(const std::string& region) const {
  const auto it = std::find(region_ids.begin(), region_ids.end(), region);
  if (it == region_ids.end()) return -1;
  return region_country[static_cast<std::size_t>(it - region_ids.begin())];
}

int ModelData::region_count_of_country(int c) const {
  int n = 0;
  for (int rc : region_country) n += (rc == c);
  return n;
}

ModelData ModelData::build(const Dataset& ds, const SplineConfig& spline) {
  ModelData md;
  md.window = ds.time_window();
  md.spline = spline;
  md.methods = ds.methods();
  md.region_ids = ds.regions();
  md.country_ids = ds.countries();
  for (int y = md.window.start_year; y <= md.window.end_year; ++y) {
    md.grid_years.push_back(y);
  }

  auto country_index = [&](const std::string& c) {
    return static_cast<int>(std::lower_bound(md.country_ids.begin(),
                                             md.country_ids.end(), c) -
                            md.country_ids.begin());
  };
  auto method_index = [&](Method m) {
    return static_cast<int>(std::find(md.methods.begin(), md.methods.end(), m) -
                            md.methods.begin());
  };

  const int n_regions = md.n_regions();
  const int n_methods = md.n_methods();
  md.region_country.resize(n_regions);
  md.knots.resize(n_regions);
  md.basis.resize(n_regions);
  md.anchor.resize(n_regions);
  md.diff_transform.resize(n_regions);
  md.cells.assign(n_regions, std::vector<CellObservations>(n_methods));

  std::vector<double> grid(md.grid_years.begin(), md.grid_years.end());
  for (int p = 0; p < n_regions; ++p) {
    const std::string& region = md.region_ids[p];
    md.region_country[p] = country_index(ds.region_index().at(region));
    const int anchor_year = ds.last_survey_year().at(region);
    md.knots[p] =
        place_knots(md.window, anchor_year, spline.knot_spacing, spline.degree);
    md.basis[p] = build_basis(md.knots[p], grid);
    md.anchor[p] = anchor_coefficient(md.knots[p]);
    md.diff_transform[p] =
        anchored_difference_transform(md.knots[p].basis_count(), md.anchor[p]);
  }

  // Group observations into cells.
  std::vector<std::vector<std::vector<std::pair<int, LogitObservation>>>> raw(
      n_regions,
      std::vector<std::vector<std::pair<int, LogitObservation>>>(n_methods));
  for (const auto& obs : ds.observations()) {
    const int p = static_cast<int>(std::lower_bound(md.region_ids.begin(),
                                                    md.region_ids.end(),
                                                    obs.region_id) -
                                   md.region_ids.begin());
    const int m = method_index(obs.method);
    raw[p][m].emplace_back(md.year_row(obs.year), to_logit(obs));
  }

  for (int p = 0; p < n_regions; ++p) {
    const int K = md.knots[p].basis_count();
    for (int m = 0; m < n_methods; ++m) {
      CellObservations& cell = md.cells[p][m];
      const auto& entries = raw[p][m];
      const int n = static_cast<int>(entries.size());
      cell.z.resize(n);
      cell.prec.resize(n);
      cell.B.resize(n, K);
      cell.X.resize(n, K - 1);
      for (int i = 0; i < n; ++i) {
        cell.grid_rows.push_back(entries[i].first);
        cell.z(i) = entries[i].second.logit_value;
        const double se = std::max(entries[i].second.logit_se, kLogitSeFloor);
        cell.prec(i) = 1.0 / (se * se);
        cell.B.row(i) = md.basis[p].values.row(entries[i].first);
      }
      cell.X = cell.B * md.diff_transform[p];
      const Eigen::MatrixXd pb = cell.prec.asDiagonal() * cell.B;
      const Eigen::MatrixXd px = cell.prec.asDiagonal() * cell.X;
      cell.G_beta = cell.B.transpose() * pb;
      cell.G_delta = cell.X.transpose() * px;
      cell.u_beta = pb.colwise().sum().transpose();
      cell.u_delta = px.colwise().sum().transpose();
      cell.xz_beta = pb.transpose() * cell.z;
      cell.xz_delta = px.transpose() * cell.z;
      cell.prec_sum = cell.prec.sum();
      cell.prec_z_sum = cell.prec.dot(cell.z);
    }
  }
  return md;
}

Eigen::VectorXd reconstruct_beta(double alpha, const Eigen::VectorXd& delta,
                                 int k_star) {
  const int K = static_cast<int>(delta.size()) + 1;
  if (k_star < 0 || k_star >= K) {
    throw ConfigError("anchor index outside the coefficient range");
  }
  Eigen::VectorXd beta(K);
  beta(k_star) = alpha;
  for (int k = k_star + 1; k < K; ++k) beta(k) = beta(k - 1) + delta(k - 1);
  for (int k = k_star - 1; k >= 0; --k) beta(k) = beta(k + 1) - delta(k);
  return beta;
}

Eigen::MatrixXd anchored_difference_transform(int coeff_count, int k_star) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(coeff_count, coeff_count - 1);
  for (int k = k_star + 1; k < coeff_count; ++k) {
    for (int j = k_star; j <= k - 1; ++j) t(k, j) = 1.0;
  }
  for (int k = 0; k < k_star; ++k) {
    for (int j = k; j <= k_star - 1; ++j) t(k, j) = -1.0;
  }
  return t;
}

LatentTrajectory latent_trajectory(const ModelData& data, const ParameterState& state,
                                   bool anchored) {
  LatentTrajectory traj;
  traj.psi.resize(data.n_regions());
  for (int p = 0; p < data.n_regions(); ++p) {
    const int K = data.coeff_count(p);
    Eigen::MatrixXd psi(data.grid_size(), data.n_methods());
    for (int m = 0; m < data.n_methods(); ++m) {
      if (anchored) {
        const Eigen::VectorXd& delta = state.region.delta[p][m];
        if (static_cast<int>(delta.size()) + 1 != K) {
          throw Error("rate-of-change vector length does not match the basis");
        }
        const Eigen::VectorXd beta =
            reconstruct_beta(state.region.alpha(p, m), delta, data.anchor[p]);
        psi.col(m) = data.basis[p].values * beta;
      } else {
        const Eigen::VectorXd& beta = state.ext.beta[p][m];
        if (static_cast<int>(beta.size()) != K) {
          throw Error("coefficient vector length does not match the basis");
        }
        psi.col(m) = Eigen::VectorXd::Constant(data.grid_size(),
                                               state.region.alpha(p, m)) +
                     data.basis[p].values * beta;
      }
    }
    traj.psi[p] = std::move(psi);
  }
  return traj;
}

std::vector<std::pair<std::string, double>> log_prior_terms(
    const ModelData& data, const ParameterState& state) {
  const int M = data.n_methods();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(M, M);
  std::vector<std::pair<std::string, double>> terms;

  terms.emplace_back("Sigma_theta",
                     log_inverse_wishart_pdf(state.global.sigma_theta, eye, M + 1));
  terms.emplace_back("Sigma_alpha",
                     log_inverse_wishart_pdf(state.global.sigma_alpha, eye, M + 1));
  for (int c = 0; c < data.n_countries(); ++c) {
    terms.emplace_back(
        "theta[" + data.country_ids[c] + "]",
        log_mvn_pdf(state.country.theta.row(c).transpose(), Eigen::VectorXd::Zero(M),
                    state.global.sigma_theta));
  }
  for (int p = 0; p < data.n_regions(); ++p) {
    terms.emplace_back(
        "alpha[" + data.region_ids[p] + "]",
        log_mvn_pdf(state.region.alpha.row(p).transpose(),
                    state.country.theta.row(data.region_country[p]).transpose(),
                    state.global.sigma_alpha));
  }
  const double sd = state.global.sigma_delta;
  double delta_term = 0.0;
  if (!(sd > 0.0)) {
    delta_term = kNegInf;
  } else {
    for (int p = 0; p < data.n_regions(); ++p) {
      for (int m = 0; m < data.n_methods(); ++m) {
        const Eigen::VectorXd& d = state.region.delta[p][m];
        delta_term += -0.5 * d.size() * (kLog2Pi + 2.0 * std::log(sd)) -
                      0.5 * d.squaredNorm() / (sd * sd);
      }
    }
  }
  terms.emplace_back("delta", delta_term);
  terms.emplace_back("sigma_delta", log_half_normal_pdf(sd, 2.0));
  return terms;
}

double log_prior(const ModelData& data, const ParameterState& state) {
  double total = 0.0;
  for (const auto& [name, value] : log_prior_terms(data, state)) total += value;
  return total;
}

std::vector<std::pair<std::string, double>> log_likelihood_terms(
    const ModelData& data, const ParameterState& state) {
  std::vector<std::pair<std::string, double>> terms;
  for (int p = 0; p < data.n_regions(); ++p) {
    for (int m = 0; m < data.n_methods(); ++m) {
      const CellObservations& cell = data.cells[p][m];
      if (cell.n() == 0) continue;
      const Eigen::VectorXd psi =
          Eigen::VectorXd::Constant(cell.n(), state.region.alpha(p, m)) +
          cell.X * state.region.delta[p][m];
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

double log_likelihood(const ModelData& data, const ParameterState& state) {
  double total = 0.0;
  for (const auto& [name, value] : log_likelihood_terms(data, state)) total += value;
  return total;
}

void grad_alpha_delta(const ModelData& data, const ParameterState& state,
                      Eigen::MatrixXd* g_alpha,
                      std::vector<std::vector<Eigen::VectorXd>>* g_delta) {
  const int P = data.n_regions();
  const int M = data.n_methods();
  g_alpha->setZero(P, M);
  g_delta->assign(P, std::vector<Eigen::VectorXd>(M));

  const Eigen::MatrixXd alpha_prec =
      state.global.sigma_alpha.llt().solve(Eigen::MatrixXd::Identity(M, M));
  const double delta_prec =
      1.0 / (state.global.sigma_delta * state.global.sigma_delta);

  for (int p = 0; p < P; ++p) {
    const Eigen::VectorXd resid_prior =
        state.region.alpha.row(p).transpose() -
        state.country.theta.row(data.region_country[p]).transpose();
    const Eigen::VectorXd prior_grad = -alpha_prec * resid_prior;
    for (int m = 0; m < M; ++m) {
      const CellObservations& cell = data.cells[p][m];
      const Eigen::VectorXd& delta = state.region.delta[p][m];
      double ga = prior_grad(m);
      Eigen::VectorXd gd = -delta_prec * delta;
      if (cell.n() > 0) {
        const Eigen::VectorXd resid =
            cell.z - Eigen::VectorXd::Constant(cell.n(), state.region.alpha(p, m)) -
            cell.X * delta;
        const Eigen::VectorXd wr = cell.prec.asDiagonal() * resid;
        ga += wr.sum();
        gd += cell.X.transpose() * wr;
      }
      (*g_alpha)(p, m) = ga;
      (*g_delta)[p][m] = gd;
    }
  }
}

}  // namespace ssp
