#pragma once

#include <stdexcept>
#include <string>

namespace gpf {

/// A configuration or argument failed validation. The message names the
/// offending field.
class ValidationError : public std::invalid_argument {
public:
  ValidationError(const std::string& field, const std::string& reason)
      : std::invalid_argument(field + ": " + reason), field_(field) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// Training produced a non-finite value.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A persisted file (checkpoint, token stream, config) is malformed.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace gpf
