#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssp/model_spec.hpp"
#include "ssp/process_model.hpp"

namespace ssp {

struct SamplerConfig {
  long iterations = 80000;
  long burn_in = 10000;
  long thin = 35;
  int chains = 4;
  std::uint64_t seed = 2024;
  double slice_width = 1.0;  // initial width; adapted during burn-in only
  bool parallel_chains = true;

  long kept_per_chain() const { return (iterations - burn_in) / thin; }
  void validate() const;
};

/// Name/offset map between the sampled state and a flat draw vector. Only
/// free (non-fixed) parameters are registered.
class ParamRegistry {
 public:
  struct Block {
    std::string id;  // update-block label, shared by its scalars
    int offset = 0;
    int size = 0;
  };

  static ParamRegistry build(const ModelSpec& spec, const ModelData& data);

  int dim() const { return dim_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  int index_of(const std::string& scalar_name) const;
  const std::string& block_of(int scalar_index) const;

  Eigen::VectorXd pack(const ParameterState& state) const;
  /// Writes the free blocks into an already-shaped state.
  void unpack(const Eigen::VectorXd& draw, ParameterState* state) const;

  // Layout facts needed by pack/unpack and fast readers.
  bool has_theta = false, has_alpha = true, has_delta = false, has_beta = false;
  bool has_sigma_theta = false, has_sigma_alpha = false, has_sd_theta = false,
       has_sd_alpha = false, has_sigma_delta = false, has_sigma_delta_mv = false,
       has_sigma_beta_mv = false, has_shrinkage = false;
  int theta_ofs = -1, alpha_ofs = -1;
  std::vector<int> coeff_region_ofs;  // per region start of delta/beta
  int sigma_theta_ofs = -1, sigma_alpha_ofs = -1, sd_theta_ofs = -1,
      sd_alpha_ofs = -1, sigma_delta_ofs = -1, sigma_delta_mv_ofs = -1,
      sigma_beta_mv_ofs = -1, shrink_ofs = -1;
  int n_countries = 0, n_regions = 0, n_methods = 0;
  std::vector<int> coeff_len;  // per region: K-1 (anchored) or K (ar1)

 private:
  int dim_ = 0;
  std::vector<std::string> names_;
  std::vector<Block> blocks_;
  std::vector<int> scalar_block_;
  std::map<std::string, int> index_;
};

/// Thinned post-burn-in draws of all chains plus run metadata.
struct DrawStore {
  std::string model_name;
  ModelFamily family = ModelFamily::multivariate_intercept;
  KStarMode k_star_mode = KStarMode::anchored;
  std::vector<Method> methods;
  SamplerConfig config;
  std::vector<std::uint64_t> chain_seeds;
  ParamRegistry registry;
  std::vector<Eigen::MatrixXd> chains;  // each kept x dim
  std::map<std::string, double> acceptance_rates;  // per update block

  int n_chains() const { return static_cast<int>(chains.size()); }
  long kept() const { return chains.empty() ? 0 : chains.front().rows(); }
  long total_draws() const { return kept() * n_chains(); }
  /// Per-chain series of one scalar parameter.
  std::vector<Eigen::VectorXd> column(const std::string& scalar_name) const;
};

/// Data-informed starting point: levels at the latest logit observation
/// (falling back to the country mean, then zero), zero rates of change,
/// identity covariances.
ParameterState initialize(const ModelSpec& spec, const ModelData& data,
                          std::uint64_t seed);

/// Runs the Metropolis-within-Gibbs sampler. Chains execute concurrently,
/// each owning the RNG stream seeded by config.seed + chain index.
DrawStore run_chains(const ModelSpec& spec, const ModelData& data,
                     const SamplerConfig& config);

// --- convergence diagnostics ---------------------------------------------------

/// Rank-normalized split R-hat; +inf for constant chains.
double r_hat(const DrawStore& draws, const std::string& parameter);
double r_hat_from_chains(const std::vector<Eigen::VectorXd>& chains);

/// Rank-normalized bulk effective sample size.
double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);

struct ConvergenceRow {
  std::string parameter;
  double r_hat = 0.0;
  double ess = 0.0;
  double acceptance_rate = 1.0;
  bool constant = false;  // diagnostic flag for the +inf sentinel
};

std::vector<ConvergenceRow> convergence_report(const DrawStore& draws);

}  // namespace ssp
