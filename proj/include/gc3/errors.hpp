#pragma once

#include <stdexcept>
#include <string>

namespace gc3 {

/// Invalid model or training configuration. The message names the field.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& problem)
      : std::invalid_argument(field + ": " + problem), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace gc3
