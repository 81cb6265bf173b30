#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ssp/types.hpp"

namespace ssp {

/// One survey-based public-share proportion with its sampling SE.
struct Observation {
  std::string country_id;
  std::string region_id;
  Method method = Method::sterilization;
  int year = 0;
  double proportion_public = 0.0;  // in (0,1) after ingestion clamping
  double se_proportion = 0.0;      // proportion scale, > 0
};

/// The observation mapped to the logit scale via the delta method.
struct LogitObservation {
  double logit_value = 0.0;
  double logit_se = 0.0;
};

/// logit(p) with SE/(p(1-p)). Pure transform; requires 0 < p < 1 and SE > 0.
LogitObservation to_logit(const Observation& obs);

/// Column names for the ingestion CSV; defaults match the canonical header.
struct SchemaConfig {
  std::string country_col = "country_id";
  std::string region_col = "region_id";
  std::string method_col = "method";
  std::string year_col = "year";
  std::string proportion_col = "prop_public";
  std::string se_col = "se_prop";
};

/// Immutable collection of observations with the region/country index and the
/// per-region latest survey year. Safe to share across threads once built.
class Dataset {
 public:
  /// Validates invariants (strict proportions in (0,1), positive SEs, unique
  /// keys, one country per region). `allow_empty` permits an empty test split.
  static Dataset from_observations(std::vector<Observation> observations,
                                   TimeWindow window, bool allow_empty = false,
                                   std::vector<std::string> warnings = {});

  const std::vector<Observation>& observations() const { return observations_; }
  const std::map<std::string, std::string>& region_index() const {
    return region_index_;
  }
  const std::map<std::string, int>& last_survey_year() const {
    return last_survey_year_;
  }
  /// Distinct methods present, in enum order. The model dimension M.
  const std::vector<Method>& methods() const { return methods_; }
  TimeWindow time_window() const { return window_; }
  std::vector<std::string> regions() const;
  std::vector<std::string> countries() const;
  const std::vector<std::string>& warnings() const { return warnings_; }
  bool empty() const { return observations_.empty(); }
  std::size_t size() const { return observations_.size(); }

 private:
  Dataset() = default;

  std::vector<Observation> observations_;
  std::map<std::string, std::string> region_index_;
  std::map<std::string, int> last_survey_year_;
  std::vector<Method> methods_;
  TimeWindow window_;
  std::vector<std::string> warnings_;
};

/// Reads the ingestion CSV. Proportions at or beyond 0.005/0.995 are clamped
/// into that band with a warning recorded on the Dataset; rows outside [0,1]
/// are rejected.
Dataset parse_dataset(const std::filesystem::path& path,
                      const SchemaConfig& schema = {},
                      TimeWindow window = {1990, 2030});

/// Train: observations with year < cutoff. Test: year >= cutoff (may be
/// empty). Throws if the training side is empty.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, int cutoff_year);

}  // namespace ssp
