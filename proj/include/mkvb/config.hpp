#pragma once

// Run configuration: INI-style `key = value` entries grouped in sections,
// checked against a fixed schema, plus builders for the model objects.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mkvb/coefficients.hpp"
#include "mkvb/engine.hpp"
#include "mkvb/solver.hpp"
#include "mkvb/transport.hpp"

namespace mkvb {

struct ConfigKey {
  std::string name;  // "section.key"
  std::string default_value;
  std::string description;
};

/// Every accepted key with its default.
const std::vector<ConfigKey>& config_schema();

class RunConfig {
 public:
  /// All schema defaults.
  RunConfig();

  /// Reads an INI file; throws ConfigError naming the first unknown or
  /// malformed key.
  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);

  /// Sets "section.key" to value; throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  /// Applies "section.key=value".
  void apply_override(const std::string& assignment);

  const std::string& text(const std::string& key) const;
  double real(const std::string& key) const;
  /// Nonnegative integer.
  std::uint64_t integer(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;
  std::vector<std::size_t> integers(const std::string& key) const;
  bool is_set(const std::string& key) const { return !text(key).empty(); }

  /// Resolved values in schema order.
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

SimulationGrid make_grid(const RunConfig& cfg);
CoefficientPtr make_coefficients(const RunConfig& cfg);
InitialCondition make_initial_condition(const RunConfig& cfg);
SimulationOptions make_simulation_options(const RunConfig& cfg);
W1Options make_w1_options(const RunConfig& cfg);

}  // namespace mkvb
