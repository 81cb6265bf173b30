#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "ssp/basis.hpp"
#include "ssp/data.hpp"
#include "ssp/types.hpp"

namespace ssp {

/// Lower bound applied to logit-scale SEs when observations enter the
/// likelihood, so a single near-zero survey SE cannot dominate the fit.
inline constexpr double kLogitSeFloor = 0.01;

struct SplineConfig {
  int degree = 3;
  double knot_spacing = 5.0;
};

/// Observations of one (region, method) cell mapped onto the model grid,
/// with the cross products the conjugate updates need.
struct CellObservations {
  std::vector<int> grid_rows;
  Eigen::VectorXd z;     // logit-scale observations
  Eigen::VectorXd prec;  // 1 / floored logit SE^2

  // Design caches. X holds the anchored-difference rows (basis times the
  // difference transform), B the raw basis rows.
  Eigen::MatrixXd X, B;
  Eigen::MatrixXd G_delta, G_beta;    // X'PX, B'PB
  Eigen::VectorXd u_delta, u_beta;    // X'P1, B'P1
  Eigen::VectorXd xz_delta, xz_beta;  // X'Pz, B'Pz
  double prec_sum = 0.0;
  double prec_z_sum = 0.0;

  int n() const { return static_cast<int>(z.size()); }
};

/// A dataset prepared for fitting: region/country/method indexing, the
/// per-region anchored bases, and per-cell observation caches. Immutable.
class ModelData {
 public:
  static ModelData build(const Dataset& ds, const SplineConfig& spline);

  int n_regions() const { return static_cast<int>(region_ids.size()); }
  int n_countries() const { return static_cast<int>(country_ids.size()); }
  int n_methods() const { return static_cast<int>(methods.size()); }
  int coeff_count(int p) const { return knots[p].basis_count(); }
  int grid_size() const { return static_cast<int>(grid_years.size()); }
  int year_row(int year) const;
  int country_of_region_id(const std::string& region) const;
  int region_count_of_country(int c) const;

  std::vector<std::string> region_ids;
  std::vector<std::string> country_ids;
  std::vector<Method> methods;
  std::vector<int> region_country;           // region index -> country index
  std::vector<KnotVector> knots;             // per region
  std::vector<BasisMatrix> basis;            // per region, over the full grid
  std::vector<int> anchor;                   // anchored coefficient per region
  std::vector<Eigen::MatrixXd> diff_transform;  // T_p: K x (K-1)
  std::vector<int> grid_years;
  std::vector<std::vector<CellObservations>> cells;  // [region][method]
  TimeWindow window;
  SplineConfig spline;
};

// --- parameter state ---------------------------------------------------------

struct GlobalParams {
  Eigen::MatrixXd sigma_theta;  // M x M country-level covariance
  Eigen::MatrixXd sigma_alpha;  // M x M region-level covariance
  double sigma_delta = 0.1;     // SD of the rates of change
};

struct CountryParams {
  Eigen::MatrixXd theta;  // C x M
};

struct RegionParams {
  Eigen::MatrixXd alpha;                            // P x M anchored levels
  std::vector<std::vector<Eigen::VectorXd>> delta;  // [p][m], length K_p - 1
};

struct ShrinkageParams {
  Eigen::VectorXd sigma_beta;  // per method
  Eigen::VectorXd xi2;         // per method
  Eigen::VectorXd kappa2;      // per method
  double a_xi = 0.25;
  double c_xi = 0.4;
  double kappa_b2 = 2.0;
};

/// Parameters used only by the alternative model families.
struct VariantParams {
  Eigen::VectorXd sd_theta;     // per-method country-level SDs
  Eigen::VectorXd sd_alpha;     // per-method region-level SDs
  Eigen::MatrixXd sigma_delta_mv;  // cross-method covariance of rates of change
  Eigen::MatrixXd sigma_beta_mv;   // cross-method covariance of coefficient steps
  std::vector<std::vector<Eigen::VectorXd>> beta;  // [p][m], length K_p
  ShrinkageParams shrink;
};

struct ParameterState {
  GlobalParams global;
  CountryParams country;
  RegionParams region;
  VariantParams ext;
};

struct LatentTrajectory {
  std::vector<Eigen::MatrixXd> psi;  // per region: grid x M, logit scale
};

// --- operations ---------------------------------------------------------------

/// Builds the K spline coefficients outward from the anchored one:
/// beta[k_star] = alpha, downward steps subtract rates of change, upward
/// steps add them; consecutive differences of the result equal delta.
Eigen::VectorXd reconstruct_beta(double alpha, const Eigen::VectorXd& delta,
                                 int k_star);

/// T with beta = alpha * 1 + T * delta for the given anchor.
Eigen::MatrixXd anchored_difference_transform(int coeff_count, int k_star);

/// Latent logit-scale trajectories on the full grid. `anchored` selects the
/// anchored-difference parameterization; otherwise psi = alpha + B beta.
LatentTrajectory latent_trajectory(const ModelData& data, const ParameterState& state,
                                   bool anchored = true);

/// Joint log prior of the multivariate-intercept model (hierarchical MVN
/// levels, inverse-Wishart covariances, zero-centered rates of change,
/// half-normal sigma_delta).
double log_prior(const ModelData& data, const ParameterState& state);

/// Same value broken into named terms (used to pin down a non-finite
/// initialization).
std::vector<std::pair<std::string, double>> log_prior_terms(
    const ModelData& data, const ParameterState& state);

/// Gaussian observation log likelihood of the multivariate-intercept model.
double log_likelihood(const ModelData& data, const ParameterState& state);

std::vector<std::pair<std::string, double>> log_likelihood_terms(
    const ModelData& data, const ParameterState& state);

/// Analytic gradient of log_prior + log_likelihood in the level and
/// rate-of-change coordinates.
void grad_alpha_delta(const ModelData& data, const ParameterState& state,
                      Eigen::MatrixXd* g_alpha,
                      std::vector<std::vector<Eigen::VectorXd>>* g_delta);

}  // namespace ssp
