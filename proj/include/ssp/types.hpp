#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ssp {

/// Base class for all library errors.
class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input structure (missing columns, bad header).
class SchemaError : public Error {
  using Error::Error;
};

/// Row- or value-level input problems (bad proportions, duplicate keys, empty data).
class ValidationError : public Error {
  using Error::Error;
};

/// Invalid run configuration (bad sampler schedule, unknown model name, bad window).
class ConfigError : public Error {
  using Error::Error;
};

/// A required on-disk artifact (draws, input file) is missing.
class MissingArtifactError : public Error {
  using Error::Error;
};

/// The five modern contraceptive methods tracked by the model.
enum class Method : int {
  sterilization = 0,
  pill = 1,
  implant = 2,
  iud = 3,
  injectable = 4,
};

inline constexpr int kMethodVocabulary = 5;

std::optional<Method> method_from_token(std::string_view token);
std::string_view method_token(Method m);

/// Inclusive calendar-year window covering estimation and projection.
struct TimeWindow {
  int start_year = 1990;
  int end_year = 2030;

  int length() const { return end_year - start_year + 1; }
  bool contains(int year) const { return year >= start_year && year <= end_year; }
};

}  // namespace ssp
