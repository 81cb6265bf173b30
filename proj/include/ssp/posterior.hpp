#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "ssp/sampler.hpp"

namespace ssp {

/// Point estimate and 95% interval for one (region, method, year) cell, for
/// both sectors. Private-sector values come from 1 - public per draw, so the
/// compositional identity holds draw-wise (not between summary rows).
struct TrajectorySummary {
  std::string region_id;
  Method method = Method::sterilization;
  int year = 0;
  double public_median = 0, public_lower = 0, public_upper = 0;
  double private_median = 0, private_lower = 0, private_upper = 0;
};

enum class CorrelationLevel { national, subnational };

struct CorrelationSummary {
  CorrelationLevel level = CorrelationLevel::national;
  std::vector<Method> methods;
  Eigen::MatrixXd correlation;  // elementwise posterior medians
};

struct YearSummaryRow {
  Method method = Method::sterilization;
  double public_median = 0, public_sd = 0;
  double private_median = 0, private_sd = 0;
};

/// Per-draw share trajectories reduced to medians and central 95% intervals.
std::vector<TrajectorySummary> summarize_trajectories(const DrawStore& draws,
                                                      const ModelData& data);

/// Posterior median of the cross-method correlation matrix behind the level
/// parameters (country covariance for national, region covariance for
/// subnational). Diagonal-hierarchy variants report the identity.
CorrelationSummary correlation_summary(const DrawStore& draws,
                                       CorrelationLevel level);

/// Cross-region spread of the per-region posterior-median shares in `year`.
std::vector<YearSummaryRow> year_summary(const DrawStore& draws,
                                         const ModelData& data, int year);

void write_trajectories_csv(std::ostream& out,
                            const std::vector<TrajectorySummary>& rows);
void write_correlations_csv(std::ostream& out,
                            const std::vector<CorrelationSummary>& summaries);
void write_year_summary_csv(std::ostream& out, const std::vector<YearSummaryRow>& rows,
                            int year);

}  // namespace ssp
