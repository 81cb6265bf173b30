#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssp/model_spec.hpp"
#include "ssp/process_model.hpp"

namespace ssp {

struct SurveyPoint {
  int year = 0;
  double logit_se = 0.15;  // observation noise on the logit scale
};

/// Generative scenario: hierarchy sizes, survey design, and optionally pinned
/// parameters (anything unset is drawn from its prior).
struct SimulationTruth {
  int countries = 3;
  int regions_per_country = 4;
  std::vector<Method> methods = {Method::pill, Method::injectable};
  TimeWindow window = {1995, 2030};
  SplineConfig spline;
  std::vector<SurveyPoint> design = {{2000, 0.15}, {2006, 0.15}, {2011, 0.15},
                                     {2015, 0.15}};
  std::uint64_t seed = 1;

  std::optional<Eigen::MatrixXd> sigma_theta;
  std::optional<Eigen::MatrixXd> sigma_alpha;
  std::optional<double> sigma_delta;
  std::optional<Eigen::MatrixXd> theta;  // countries x M
  std::optional<Eigen::MatrixXd> alpha;  // regions x M
  bool zero_delta = false;               // pin all rates of change at zero
};

struct SimulatedData {
  Dataset dataset;
  ModelData data;           // built from the simulated dataset
  ParameterState truth;     // generating parameters
  LatentTrajectory psi;     // latent truth on the full grid
};

/// Runs the main model generatively: draws unpinned parameters from their
/// priors, builds the latent trajectories, and emits noisy observations. The
/// returned proportions are exact (no ingestion clamping).
SimulatedData simulate_dataset(const SimulationTruth& truth);

/// Desk-scale default: 3 countries x 4 regions x 2 methods x 4 survey years.
SimulationTruth desk_scale_scenario(std::uint64_t seed = 1);

// --- brute-force reference sampler -------------------------------------------------

struct ReferenceOptions {
  long iterations = 1000000;
  long burn_in = 100000;
  std::uint64_t seed = 9;
  int batches = 50;
  double initial_step = 0.25;
};

struct ReferenceResult {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<double> mcse;  // batch-means Monte Carlo SE of the mean
  double acceptance_rate = 0.0;
  bool budget_warning = false;

  double mean_of(const std::string& name) const;
  double mcse_of(const std::string& name) const;
};

/// Componentwise random-walk Metropolis over the full joint posterior of the
/// multivariate-intercept model, with no conjugate shortcuts and its own
/// density code. Intended as an independent cross-check at toy scale; the
/// free parameter count must not exceed 30.
ReferenceResult reference_posterior(const ModelSpec& spec, const ModelData& data,
                                    const ReferenceOptions& options);

}  // namespace ssp
