#include "ssp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "ssp/stats.hpp"

namespace ssp {

namespace {

constexpr double kClampLow = 0.005;
constexpr double kClampHigh = 0.995;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Splits one CSV record, honoring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

}  // namespace

std::optional<Method> method_from_token(std::string_view token) {
  if (token == "sterilization") return Method::sterilization;
  if (token == "pill") return Method::pill;
  if (token == "implant") return Method::implant;
  if (token == "iud") return Method::iud;
  if (token == "injectable") return Method::injectable;
  return std::nullopt;
}

std::string_view method_token(Method m) {
  switch (m) {
    case Method::sterilization: return "sterilization";
    case Method::pill: return "pill";
    case Method::implant: return "implant";
    case Method::iud: return "iud";
    case Method::injectable: return "injectable";
  }
  return "unknown";
}

LogitObservation to_logit(const Observation& obs) {
  const double p = obs.proportion_public;
  if (!(p > 0.0 && p < 1.0)) {
    throw ValidationError("to_logit requires a proportion strictly inside (0,1)");
  }
  if (!(obs.se_proportion > 0.0)) {
    throw ValidationError("to_logit requires a positive SE");
  }
  LogitObservation out;
  out.logit_value = logit(p);
  out.logit_se = obs.se_proportion / (p * (1.0 - p));
  return out;
}

Dataset Dataset::from_observations(std::vector<Observation> observations,
                                   TimeWindow window, bool allow_empty,
                                   std::vector<std::string> warnings) {
  if (window.end_year < window.start_year) {
    throw ConfigError("time window end precedes start");
  }
  if (observations.empty() && !allow_empty) {
    throw ValidationError("empty dataset");
  }
  Dataset ds;
  ds.window_ = window;
  ds.warnings_ = std::move(warnings);

  std::set<std::tuple<std::string, Method, int>> keys;
  std::set<Method> methods;
  for (const auto& obs : observations) {
    if (!(obs.proportion_public > 0.0 && obs.proportion_public < 1.0)) {
      throw ValidationError("observation proportion outside (0,1) for region '" +
                            obs.region_id + "'");
    }
    if (!(obs.se_proportion > 0.0)) {
      throw ValidationError("observation SE must be positive for region '" +
                            obs.region_id + "'");
    }
    if (!window.contains(obs.year)) {
      throw ValidationError("observation year " + std::to_string(obs.year) +
                            " outside the time window for region '" + obs.region_id +
                            "'");
    }
    const auto key = std::make_tuple(obs.region_id, obs.method, obs.year);
    if (!keys.insert(key).second) {
      throw ValidationError("duplicate (region, method, year) key: (" +
                            obs.region_id + ", " +
                            std::string(method_token(obs.method)) + ", " +
                            std::to_string(obs.year) + ")");
    }
    const auto it = ds.region_index_.find(obs.region_id);
    if (it == ds.region_index_.end()) {
      ds.region_index_.emplace(obs.region_id, obs.country_id);
    } else if (it->second != obs.country_id) {
      throw ValidationError("region '" + obs.region_id +
                            "' mapped to two countries: '" + it->second + "' and '" +
                            obs.country_id + "'");
    }
    auto [year_it, inserted] = ds.last_survey_year_.emplace(obs.region_id, obs.year);
    if (!inserted) year_it->second = std::max(year_it->second, obs.year);
    methods.insert(obs.method);
  }
  ds.methods_.assign(methods.begin(), methods.end());
  ds.observations_ = std::move(observations);
  return ds;
}

std::vector<std::string> Dataset::regions() const {
  std::vector<std::string> out;
  out.reserve(region_index_.size());
  for (const auto& [region, country] : region_index_) out.push_back(region);
  return out;
}

std::vector<std::string> Dataset::countries() const {
  std::set<std::string> set;
  for (const auto& [region, country] : region_index_) set.insert(country);
  return {set.begin(), set.end()};
}

Dataset parse_dataset(const std::filesystem::path& path, const SchemaConfig& schema,
                      TimeWindow window) {
  std::ifstream in(path);
  if (!in) {
    throw MissingArtifactError("cannot open dataset file: " + path.string());
  }
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw SchemaError("dataset file is empty: " + path.string());
  }
  // Strip a UTF-8 BOM if present.
  if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    header_line.erase(0, 3);
  }
  const auto header = split_csv_line(header_line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw SchemaError("missing required column '" + name + "' in " +
                        path.string());
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_country = column(schema.country_col);
  const std::size_t c_region = column(schema.region_col);
  const std::size_t c_method = column(schema.method_col);
  const std::size_t c_year = column(schema.year_col);
  const std::size_t c_prop = column(schema.proportion_col);
  const std::size_t c_se = column(schema.se_col);

  std::vector<Observation> observations;
  std::vector<std::string> warnings;
  std::string line;
  std::size_t row = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    const std::size_t needed =
        std::max({c_country, c_region, c_method, c_year, c_prop, c_se}) + 1;
    if (fields.size() < needed) {
      throw ValidationError("row " + std::to_string(row) + ": too few fields");
    }
    Observation obs;
    obs.country_id = fields[c_country];
    obs.region_id = fields[c_region];
    const auto method = method_from_token(fields[c_method]);
    if (!method) {
      throw ValidationError(
          "row " + std::to_string(row) + ": unknown method token '" +
          fields[c_method] +
          "' (expected one of: sterilization, pill, implant, iud, injectable)");
    }
    obs.method = *method;
    try {
      obs.year = std::stoi(fields[c_year]);
      obs.proportion_public = std::stod(fields[c_prop]);
      obs.se_proportion = std::stod(fields[c_se]);
    } catch (const std::exception&) {
      throw ValidationError("row " + std::to_string(row) + ": non-numeric field");
    }
    if (obs.proportion_public < 0.0 || obs.proportion_public > 1.0 ||
        !std::isfinite(obs.proportion_public)) {
      throw ValidationError("row " + std::to_string(row) +
                            ": proportion outside [0,1]");
    }
    if (!(obs.se_proportion > 0.0) || !std::isfinite(obs.se_proportion)) {
      throw ValidationError("row " + std::to_string(row) + ": SE must be positive");
    }
    // Boundary clamp ahead of the logit transform.
    if (obs.proportion_public <= kClampLow) {
      warnings.push_back("row " + std::to_string(row) + ": proportion " +
                         std::to_string(obs.proportion_public) + " clamped to " +
                         std::to_string(kClampLow));
      obs.proportion_public = kClampLow;
    } else if (obs.proportion_public >= kClampHigh) {
      warnings.push_back("row " + std::to_string(row) + ": proportion " +
                         std::to_string(obs.proportion_public) + " clamped to " +
                         std::to_string(kClampHigh));
      obs.proportion_public = kClampHigh;
    }
    observations.push_back(std::move(obs));
  }
  if (observations.empty()) {
    throw ValidationError("empty dataset: " + path.string());
  }
  return Dataset::from_observations(std::move(observations), window, false,
                                    std::move(warnings));
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, int cutoff_year) {
  if (!ds.time_window().contains(cutoff_year)) {
    throw ConfigError("cutoff year " + std::to_string(cutoff_year) +
                      " outside the time window");
  }
  std::vector<Observation> train;
  std::vector<Observation> test;
  for (const auto& obs : ds.observations()) {
    (obs.year < cutoff_year ? train : test).push_back(obs);
  }
  if (train.empty()) {
    throw ValidationError("empty training set: no observations before " +
                          std::to_string(cutoff_year));
  }
  return {Dataset::from_observations(std::move(train), ds.time_window()),
          Dataset::from_observations(std::move(test), ds.time_window(), true)};
}

}  // namespace ssp
