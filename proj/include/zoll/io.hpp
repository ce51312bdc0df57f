#pragma once

#include "zoll/critical.hpp"
#include "zoll/diagnostics.hpp"
#include "zoll/morse.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace zoll {

struct CoverSettings {
  std::optional<Vec> point;     // ambient coordinates, normalized on use
  std::optional<double> energy;
  int grid = 20;                // points of the grid run
  int directions = 16;          // initial directions per point
  bool operator==(const CoverSettings&) const = default;
};

/// Everything a CLI run needs, read from TOML.
struct RunConfig {
  ModelSpec metric;
  IntegratorSettings integrator;
  double delta = 0.0;
  std::optional<int> k;
  /// Auto-k: k = ceil(k_threshold(target_length, delta, rho)) + 1.
  std::optional<double> target_length;
  SearchConfig search;
  DiagnosticConfig diagnostics;
  CoverSettings cover;
  /// Fraction of failed multistart starts above which `find` exits with 3.
  double max_failure_fraction = 0.5;
  std::string output = "out";
  std::uint64_t seed = 1;
  int workers = 1;

  bool operator==(const RunConfig&) const = default;

  ModelPtr model() const;
  int resolved_k(const MetricModel& model) const;
  LoopParams loop_params(const ModelPtr& model) const;
  /// Search and diagnostic settings with the run's seed and worker count applied.
  SearchConfig search_settings() const;
  DiagnosticConfig diagnostic_settings() const;
};

/// Parses TOML; ConfigError messages name the offending field.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string serialize_run_config(const RunConfig& config);

/// "%.17g"
std::string format_double(double x);

nlohmann::json to_json(const Vec& v);
Vec vec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelSpec& spec);
nlohmann::json to_json(const CriticalPoint& cp);
/// Rebuilds a critical point (model, configuration, classification) from its JSON.
CriticalPoint critical_point_from_json(const nlohmann::json& j, IntegratorSettings settings = {});
nlohmann::json to_json(const SpectralReport& r);
nlohmann::json to_json(const ClosureScan& scan);
nlohmann::json to_json(const CoverageResult& c);
nlohmann::json to_json(const DiagnosticReport& r);

std::string diagnostic_csv_header();
std::string diagnostic_csv_row(const DiagnosticReport& r);

}  // namespace zoll
