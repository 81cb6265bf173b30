#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>

#include "ssp/sampler.hpp"

namespace ssp {

/// Writes to `<path>.tmp` and renames into place so readers never see a
/// partial file.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer);

/// Everything needed to reload a fit and project from it: the draws plus the
/// region/basis metadata of the model they were sampled under.
struct FitArtifact {
  DrawStore draws;
  TimeWindow window;
  SplineConfig spline;
  std::vector<std::string> region_ids;
  std::vector<std::string> country_ids;
  std::vector<int> region_country;
  std::vector<int> region_anchor_year;
  std::vector<Method> methods;
};

FitArtifact make_artifact(DrawStore draws, const ModelData& data);

/// Rebuilds bases and indexing from artifact metadata. The returned model
/// data carries no observations; it supports trajectory reconstruction only.
ModelData model_data_from_artifact(const FitArtifact& artifact);

void save_fit(const std::filesystem::path& path, const FitArtifact& artifact);
FitArtifact load_fit(const std::filesystem::path& path);

/// Long-format dump: one row per kept draw per parameter.
void write_draws_csv(std::ostream& out, const DrawStore& draws);

void write_convergence_json(std::ostream& out,
                            const std::vector<ConvergenceRow>& rows);

}  // namespace ssp
