#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "ssp/sampler.hpp"

namespace ssp {

// --- metrics --------------------------------------------------------------------

/// Mean absolute relative error in percent; the denominator is the estimate.
double mare(const std::vector<double>& y, const std::vector<double>& y_hat);

/// Robust standardized absolute prediction error: 1.4826 x median(|y-yhat|/sd).
double sape(const std::vector<double>& y, const std::vector<double>& y_hat,
            const std::vector<double>& sd_hat);

/// Root mean square error in percentage points of proportion.
double rmse(const std::vector<double>& y, const std::vector<double>& y_hat);

struct CoverageResult {
  double coverage_pct = 0;
  double pct_above = 0;
  double pct_below = 0;
};

CoverageResult coverage(const std::vector<double>& y, const std::vector<double>& lo,
                        const std::vector<double>& hi);

/// Median interval width in percentage points.
double median_pi_width_pct(const std::vector<double>& lo,
                           const std::vector<double>& hi);

// --- out-of-sample protocol -------------------------------------------------------

/// Posterior-predictive summary of one held-out cell (proportion scale). The
/// predictive draws include the observation-level noise of the cell itself.
struct PredictiveCell {
  std::string region_id;
  Method method = Method::sterilization;
  int year = 0;
  double y_obs = 0;
  double y_hat = 0;   // predictive median
  double sd_hat = 0;  // predictive SD
  double lo80 = 0, hi80 = 0;
  double lo95 = 0, hi95 = 0;
};

struct MetricReport {
  std::string model_name;
  double mare_pct = 0;
  double sape = 0;
  double coverage_80_pct = 0;
  double coverage_95_pct = 0;
  double rmse_pct = 0;
  double median_pi_width_95_pct = 0;
  double pct_above_95_pi = 0;
  double pct_below_95_pi = 0;
  long n_test = 0;
};

/// Evaluates the posterior predictive at every test observation. Regions (or
/// whole countries) absent from training get trajectories drawn through the
/// hierarchy per kept draw.
std::vector<PredictiveCell> posterior_predictive_cells(const DrawStore& draws,
                                                       const ModelData& train_data,
                                                       const Dataset& test,
                                                       std::uint64_t noise_seed);

MetricReport compute_metrics(const std::string& model_name,
                             const std::vector<PredictiveCell>& cells);

struct ValidationConfig {
  int cutoff_year = 2015;
  SplineConfig spline;
  SamplerConfig sampler;
};

/// Fits each named model on the pre-cutoff data and scores it on the rest.
std::vector<MetricReport> run_validation(const std::vector<std::string>& model_names,
                                         const Dataset& ds,
                                         const ValidationConfig& config);

void write_validation_csv(std::ostream& out, const std::vector<MetricReport>& reports);
void write_validation_json(std::ostream& out,
                           const std::vector<MetricReport>& reports);

}  // namespace ssp
