#pragma once

#include "zoll/critical.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace zoll {

enum class Verdict { Zoll, Besse, NonBesse };
std::string to_string(Verdict v);

struct PeriodCluster {
  double period = 0.0;  // mean
  double spread = 0.0;  // max - min
  int count = 0;
};

struct ClosureScan {
  int samples = 0;
  int closed = 0;
  int failures = 0;  // integrator failures
  double closure_fraction = 0.0;
  std::vector<PeriodCluster> clusters;  // ascending period
  Verdict verdict = Verdict::NonBesse;
  /// Common period: the single cluster for Zoll, a common multiple for Besse.
  std::optional<double> period;
};

struct DiagnosticConfig {
  int scan_samples = 200;
  double t_max = 20.0;
  double period_tol = 1e-4;
  int coverage_samples = 100;
  double cone_half_angle = 0.2;
  double angle_tol = 0.05;
  int coverage_iterations = 60;
  /// Critical levels within this distance of 4 delta^2 count as the minimum.
  double level_margin = 1e-2;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const;
  bool operator==(const DiagnosticConfig&) const = default;
};

/// Samples (q, v) on the unit tangent bundle, detects closure and clusters the
/// minimal periods (single linkage, gap 10 tol). Throws InconclusiveScan when
/// more than 1% of the samples hit integrator failures.
ClosureScan besse_zoll_scan(const MetricModel& model, int samples, double t_max, double tol,
                            std::uint64_t seed, int workers = 1);

struct CoverageWitness {
  Vec q;
  Vec u;
  std::string reason;
};

struct CoverageResult {
  double energy = 0.0;
  int samples = 0;
  int hits = 0;
  double fraction = 0.0;
  std::vector<CoverageWitness> witnesses;  // missed samples
};

/// Fraction of sampled (q, u) hit by Ev on critical points of energy `level`:
/// pinned searches from q with the direction confined to a cone around u.
CoverageResult ev_coverage(const LoopParams& params, double level, CriticalKind kind,
                           const SearchConfig& search, const DiagnosticConfig& diag);

struct DiagnosticReport {
  std::string model;
  ClosureScan scan;
  std::vector<EnergyLevel> levels;
  int multistart_failures = 0;
  std::optional<double> lowest_energy;  // lowest critical value above 4 delta^2
  std::optional<CriticalKind> lowest_kind;
  /// Geodesic period at the lowest level: sqrt(E), or sqrt(E) - 2 delta for zig-zags.
  std::optional<double> lowest_period;
  std::optional<CoverageResult> coverage;
  std::string statement;
};

DiagnosticReport minmax_gap_report(const LoopParams& params, const SearchConfig& search,
                                   const DiagnosticConfig& diag);

}  // namespace zoll
