#include "ssp/validation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>

#include "ssp/stats.hpp"

namespace ssp {

double mare(const std::vector<double>& y, const std::vector<double>& y_hat) {
  if (y.empty() || y.size() != y_hat.size()) {
    throw ValidationError("mare: empty or misaligned inputs");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y_hat[i] > 0.0)) throw ValidationError("mare: estimate must be positive");
    sum += std::abs(y[i] - y_hat[i]) / y_hat[i];
  }
  return 100.0 * sum / static_cast<double>(y.size());
}

double sape(const std::vector<double>& y, const std::vector<double>& y_hat,
            const std::vector<double>& sd_hat) {
  if (y.empty() || y.size() != y_hat.size() || y.size() != sd_hat.size()) {
    throw ValidationError("sape: empty or misaligned inputs");
  }
  std::vector<double> standardized(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(sd_hat[i] > 0.0)) {
      throw ValidationError("sape: predictive SD must be positive");
    }
    standardized[i] = std::abs(y[i] - y_hat[i]) / sd_hat[i];
  }
  return 1.4826 * median(std::move(standardized));
}

double rmse(const std::vector<double>& y, const std::vector<double>& y_hat) {
  if (y.empty() || y.size() != y_hat.size()) {
    throw ValidationError("rmse: empty or misaligned inputs");
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
  }
  return 100.0 * std::sqrt(ss / static_cast<double>(y.size()));
}

CoverageResult coverage(const std::vector<double>& y, const std::vector<double>& lo,
                        const std::vector<double>& hi) {
  if (y.empty() || y.size() != lo.size() || y.size() != hi.size()) {
    throw ValidationError("coverage: empty or misaligned inputs");
  }
  long inside = 0, above = 0, below = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (lo[i] > hi[i]) throw ValidationError("coverage: interval with lo > hi");
    if (y[i] > hi[i]) {
      ++above;
    } else if (y[i] < lo[i]) {
      ++below;
    } else {
      ++inside;
    }
  }
  const double n = static_cast<double>(y.size());
  return {100.0 * inside / n, 100.0 * above / n, 100.0 * below / n};
}

double median_pi_width_pct(const std::vector<double>& lo,
                           const std::vector<double>& hi) {
  if (lo.empty() || lo.size() != hi.size()) {
    throw ValidationError("pi width: empty or misaligned inputs");
  }
  std::vector<double> widths(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) widths[i] = 100.0 * (hi[i] - lo[i]);
  return median(std::move(widths));
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Draws an RW1 path (chain initialized at zero) conditioned to sum to zero.
Eigen::VectorXd constrained_rw1_draw(int K, double sd, const Eigen::VectorXd& qinv_ones,
                                     Rng& rng) {
  Eigen::VectorXd beta(K);
  beta(0) = rng.normal(0.0, sd);
  for (int k = 1; k < K; ++k) beta(k) = beta(k - 1) + rng.normal(0.0, sd);
  return beta - qinv_ones * (beta.sum() / qinv_ones.sum());
}

struct UnseenRegionBasis {
  KnotVector knots;
  int anchor = 0;
  Eigen::MatrixXd diff_transform;
  Eigen::VectorXd qinv_ones;  // Q^-1 1 for constrained prior draws
};

}  // namespace

std::vector<PredictiveCell> posterior_predictive_cells(const DrawStore& draws,
                                                       const ModelData& train_data,
                                                       const Dataset& test,
                                                       std::uint64_t noise_seed) {
  const ModelSpec spec = model_by_name(draws.model_name);
  const bool anchored = spec.anchored();
  const long S = draws.total_draws();
  const int M = train_data.n_methods();
  if (S == 0) throw Error("empty draw store");

  // Group test observations by region, in deterministic order.
  struct TestCell {
    Observation obs;
    double se_eff;  // floored logit-scale SE
    int method_idx;
  };
  std::map<std::string, std::vector<TestCell>> groups;
  for (const auto& obs : test.observations()) {
    const auto mit =
        std::find(train_data.methods.begin(), train_data.methods.end(), obs.method);
    if (mit == train_data.methods.end()) {
      throw ValidationError("test method '" + std::string(method_token(obs.method)) +
                            "' absent from the training data");
    }
    TestCell cell;
    cell.obs = obs;
    cell.se_eff = std::max(to_logit(obs).logit_se, kLogitSeFloor);
    cell.method_idx = static_cast<int>(mit - train_data.methods.begin());
    groups[obs.region_id].push_back(std::move(cell));
  }

  // Fallback anchor years for regions absent from training.
  std::map<std::string, int> country_latest;
  int global_latest = train_data.window.start_year;
  for (int p = 0; p < train_data.n_regions(); ++p) {
    const int anchor_year = static_cast<int>(
        train_data.knots[p].interior_knots[train_data.knots[p].k_star_index]);
    auto [it, inserted] = country_latest.emplace(
        train_data.country_ids[train_data.region_country[p]], anchor_year);
    if (!inserted) it->second = std::max(it->second, anchor_year);
    global_latest = std::max(global_latest, anchor_year);
  }

  Rng rng(noise_seed);
  ParameterState state = initialize(spec, train_data, 0);
  std::vector<PredictiveCell> out;

  for (auto& [region_id, cells] : groups) {
    const auto rit = std::find(train_data.region_ids.begin(),
                               train_data.region_ids.end(), region_id);
    const bool seen = rit != train_data.region_ids.end();
    const int p =
        seen ? static_cast<int>(rit - train_data.region_ids.begin()) : -1;

    UnseenRegionBasis fallback;
    std::string country;
    int country_idx = -1;
    if (seen) {
      country_idx = train_data.region_country[p];
    } else {
      country = test.region_index().at(region_id);
      const auto cit = std::find(train_data.country_ids.begin(),
                                 train_data.country_ids.end(), country);
      if (cit != train_data.country_ids.end()) {
        country_idx = static_cast<int>(cit - train_data.country_ids.begin());
      }
      const auto fit = country_latest.find(country);
      const int anchor_year =
          fit != country_latest.end() ? fit->second : global_latest;
      fallback.knots = place_knots(train_data.window, anchor_year,
                                   train_data.spline.knot_spacing,
                                   train_data.spline.degree);
      fallback.anchor = anchor_coefficient(fallback.knots);
      fallback.diff_transform = anchored_difference_transform(
          fallback.knots.basis_count(), fallback.anchor);
      const int K = fallback.knots.basis_count();
      fallback.qinv_ones = rw1_precision(K).llt().solve(Eigen::VectorXd::Ones(K));
    }

    // Basis rows at the test years.
    const int n_cells = static_cast<int>(cells.size());
    std::vector<Eigen::VectorXd> rows(n_cells);
    for (int i = 0; i < n_cells; ++i) {
      const double year = cells[i].obs.year;
      rows[i] = seen ? basis_row(train_data.knots[p], year)
                     : basis_row(fallback.knots, year);
    }

    Eigen::MatrixXd pred(S, n_cells);
    long s = 0;
    const int K = seen ? train_data.coeff_count(p) : fallback.knots.basis_count();
    for (const auto& chain : draws.chains) {
      for (long i = 0; i < chain.rows(); ++i, ++s) {
        draws.registry.unpack(chain.row(i).transpose(), &state);

        // Coefficients for this region under the current draw.
        Eigen::MatrixXd beta(K, M);
        Eigen::VectorXd alpha(M);
        if (seen) {
          for (int m = 0; m < M; ++m) {
            alpha(m) = state.region.alpha(p, m);
            beta.col(m) = anchored
                              ? reconstruct_beta(alpha(m), state.region.delta[p][m],
                                                 train_data.anchor[p])
                              : state.ext.beta[p][m];
          }
        } else {
          // New region: push the draw's hyperparameters through the hierarchy.
          Eigen::VectorXd theta(M);
          if (country_idx >= 0) {
            theta = state.country.theta.row(country_idx).transpose();
          } else if (spec.full_intercept_cov()) {
            theta = rng.mvn(Eigen::VectorXd::Zero(M), state.global.sigma_theta);
          } else {
            for (int m = 0; m < M; ++m) {
              theta(m) = rng.normal(0.0, state.ext.sd_theta(m));
            }
          }
          if (spec.full_intercept_cov()) {
            alpha = rng.mvn(theta, state.global.sigma_alpha);
          } else {
            for (int m = 0; m < M; ++m) {
              alpha(m) = rng.normal(theta(m), state.ext.sd_alpha(m));
            }
          }
          switch (spec.family) {
            case ModelFamily::multivariate_intercept:
            case ModelFamily::zero_covariance: {
              for (int m = 0; m < M; ++m) {
                Eigen::VectorXd delta(K - 1);
                for (int k = 0; k < K - 1; ++k) {
                  delta(k) = rng.normal(0.0, state.global.sigma_delta);
                }
                beta.col(m) = reconstruct_beta(alpha(m), delta, fallback.anchor);
              }
              break;
            }
            case ModelFamily::multivariate_delta: {
              Eigen::MatrixXd delta(K - 1, M);
              const Eigen::VectorXd zero = Eigen::VectorXd::Zero(M);
              for (int k = 0; k < K - 1; ++k) {
                delta.row(k) = rng.mvn(zero, state.ext.sigma_delta_mv).transpose();
              }
              for (int m = 0; m < M; ++m) {
                beta.col(m) = reconstruct_beta(alpha(m), delta.col(m),
                                               fallback.anchor);
              }
              break;
            }
            case ModelFamily::shrinkage: {
              for (int m = 0; m < M; ++m) {
                beta.col(m) = constrained_rw1_draw(
                    K, state.ext.shrink.sigma_beta(m), fallback.qinv_ones, rng);
              }
              break;
            }
            case ModelFamily::fully_multivariate: {
              Eigen::MatrixXd walk(K, M);
              Eigen::VectorXd prev = Eigen::VectorXd::Zero(M);
              for (int k = 0; k < K; ++k) {
                prev = rng.mvn(prev, state.ext.sigma_beta_mv);
                walk.row(k) = prev.transpose();
              }
              for (int m = 0; m < M; ++m) {
                const Eigen::VectorXd col = walk.col(m);
                beta.col(m) =
                    col - fallback.qinv_ones *
                              (col.sum() / fallback.qinv_ones.sum());
              }
              break;
            }
          }
        }

        for (int i_cell = 0; i_cell < n_cells; ++i_cell) {
          const int m = cells[i_cell].method_idx;
          double psi = rows[i_cell].dot(beta.col(m));
          if (!anchored) psi += alpha(m);
          const double z = psi + rng.normal(0.0, cells[i_cell].se_eff);
          pred(s, i_cell) = inverse_logit(z);
        }
      }
    }

    for (int i = 0; i < n_cells; ++i) {
      std::vector<double> samples(pred.col(i).data(), pred.col(i).data() + S);
      PredictiveCell cell;
      cell.region_id = region_id;
      cell.method = cells[i].obs.method;
      cell.year = cells[i].obs.year;
      cell.y_obs = cells[i].obs.proportion_public;
      cell.sd_hat = sample_sd(samples);
      std::sort(samples.begin(), samples.end());
      cell.y_hat = quantile_sorted(samples, 0.5);
      cell.lo80 = quantile_sorted(samples, 0.10);
      cell.hi80 = quantile_sorted(samples, 0.90);
      cell.lo95 = quantile_sorted(samples, 0.025);
      cell.hi95 = quantile_sorted(samples, 0.975);
      out.push_back(std::move(cell));
    }
  }
  return out;
}

MetricReport compute_metrics(const std::string& model_name,
                             const std::vector<PredictiveCell>& cells) {
  if (cells.empty()) throw ValidationError("empty test set");
  std::vector<double> y, y_hat, sd_hat, lo80, hi80, lo95, hi95;
  for (const auto& c : cells) {
    y.push_back(c.y_obs);
    y_hat.push_back(c.y_hat);
    sd_hat.push_back(c.sd_hat);
    lo80.push_back(c.lo80);
    hi80.push_back(c.hi80);
    lo95.push_back(c.lo95);
    hi95.push_back(c.hi95);
  }
  MetricReport report;
  report.model_name = model_name;
  report.mare_pct = mare(y, y_hat);
  report.sape = sape(y, y_hat, sd_hat);
  report.rmse_pct = rmse(y, y_hat);
  const CoverageResult c80 = coverage(y, lo80, hi80);
  const CoverageResult c95 = coverage(y, lo95, hi95);
  report.coverage_80_pct = c80.coverage_pct;
  report.coverage_95_pct = c95.coverage_pct;
  report.pct_above_95_pi = c95.pct_above;
  report.pct_below_95_pi = c95.pct_below;
  report.median_pi_width_95_pct = median_pi_width_pct(lo95, hi95);
  report.n_test = static_cast<long>(cells.size());
  return report;
}

std::vector<MetricReport> run_validation(const std::vector<std::string>& model_names,
                                         const Dataset& ds,
                                         const ValidationConfig& config) {
  auto [train, test] = split_train_test(ds, config.cutoff_year);
  if (test.empty()) throw ValidationError("empty test set after the cutoff");

  std::vector<MetricReport> reports;
  for (const auto& name : model_names) {
    const ModelSpec spec = model_by_name(name);
    const ModelData data = ModelData::build(train, config.spline);
    const DrawStore draws = run_chains(spec, data, config.sampler);
    const auto cells = posterior_predictive_cells(
        draws, data, test, config.sampler.seed ^ 0x9e3779b97f4a7c15ull);
    reports.push_back(compute_metrics(name, cells));
  }
  return reports;
}

void write_validation_csv(std::ostream& out,
                          const std::vector<MetricReport>& reports) {
  out << "model_name,mare_pct,sape,coverage_80_pct,coverage_95_pct,rmse_pct,"
         "median_pi_width_95_pct,pct_above_95_pi,pct_below_95_pi,n_test\n";
  out.precision(10);
  for (const auto& r : reports) {
    out << r.model_name << ',' << r.mare_pct << ',' << r.sape << ','
        << r.coverage_80_pct << ',' << r.coverage_95_pct << ',' << r.rmse_pct << ','
        << r.median_pi_width_95_pct << ',' << r.pct_above_95_pi << ','
        << r.pct_below_95_pi << ',' << r.n_test << '\n';
  }
}

void write_validation_json(std::ostream& out,
                           const std::vector<MetricReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    arr.push_back({{"model_name", r.model_name},
                   {"mare_pct", r.mare_pct},
                   {"sape", r.sape},
                   {"coverage_80_pct", r.coverage_80_pct},
                   {"coverage_95_pct", r.coverage_95_pct},
                   {"rmse_pct", r.rmse_pct},
                   {"median_pi_width_95_pct", r.median_pi_width_95_pct},
                   {"pct_above_95_pi", r.pct_above_95_pi},
                   {"pct_below_95_pi", r.pct_below_95_pi},
                   {"n_test", r.n_test}});
  }
  out << arr.dump(2) << '\n';
}

}  // namespace ssp
