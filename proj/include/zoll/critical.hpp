#pragma once

#include "zoll/loopspace.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace zoll {

enum class CriticalKind { GlobalMinimum, SmoothGeodesic, ZigZag };

std::string to_string(CriticalKind kind);
CriticalKind parse_kind(const std::string& name);

struct CriticalPoint {
  LoopConfig config;
  double energy = 0.0;
  CriticalKind kind = CriticalKind::SmoothGeodesic;
  double gradient_norm = 0.0;
  TangentVector ev;
  /// sqrt(E) for smooth geodesics, sqrt(E) - 2 delta for zig-zags.
  std::optional<double> period;
  int iterations = 0;

  /// Unit initial direction of the underlying closed geodesic at q_0.
  Vec geodesic_direction() const;
};

struct SearchConfig {
  enum class Mode { Saddle, Descent };

  int max_iterations = 200;
  double gradient_tol = 1e-8;
  /// Below this gradient norm steps are pure Newton (kernel directions dropped).
  double newton_switch = 1e-3;
  /// Largest step (chart coordinate norm) per iteration.
  double trust_radius = 0.25;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_rejections = 40;
  Mode mode = Mode::Saddle;

  std::uint64_t seed = 1;
  int samples = 48;
  int workers = 1;
  double energy_min = 0.0;
  double energy_max = std::numeric_limits<double>::infinity();

  /// Relative energy gap separating distinct critical values.
  double energy_gap = 1e-6;
  double ev_angle_gap = 1e-3;
  /// Point distance below which a re-sampled geodesic matches a configuration.
  double shift_tol = 1e-5;

  double cos_aligned = 0.999;
  double smooth_tol = 1e-6;

  void validate() const;
  bool operator==(const SearchConfig&) const = default;
};

/// Kind of a critical configuration from its joint velocities; throws
/// UnclassifiableCritical for mixed or non-smooth patterns.
CriticalKind classify(const LoopConfig& config, double cos_tol = 0.999, double smooth_tol = 1e-6);

struct RefineOptions {
  /// Keep q_0 fixed (drops its coordinates from the search).
  bool pinned = false;
  /// Reject iterates whose direction u leaves this cone around the initial u.
  std::optional<double> cone_half_angle;
};

/// Drives the configuration to a critical point of the energy. Throws
/// MaxIterations or BoundaryEscape.
CriticalPoint refine(const LoopConfig& init, const SearchConfig& search,
                     const RefineOptions& options = {});

/// Wraps a critical configuration (no further iterations) after checking
/// criticality and classifying it.
CriticalPoint make_critical_point(const LoopConfig& config, double gradient_norm, int iterations);

/// Zig-zag sample of the closed geodesic t -> exp_q(t u) of length `length`:
/// q_0 = gamma(0), q_1 = gamma(delta), then back along gamma from q_1 to q_0.
LoopConfig sample_zigzag(const LoopParams& params, const Vec& q, const Vec& u, double length);

/// Zig-zag critical point over the same geodesic as `smooth`, sharing q_0 and q_1.
CriticalPoint make_zigzag(const CriticalPoint& smooth, const LoopParams& params,
                          const SearchConfig& search = {});

/// True when `b` is `a` up to a shift of the base point along the same geodesic.
bool same_critical_family(const CriticalPoint& a, const CriticalPoint& b,
                          const SearchConfig& search);

struct EnergyLevel {
  double energy = 0.0;
  CriticalKind kind = CriticalKind::SmoothGeodesic;
  int count = 0;
};

/// Critical values grouped with the relative gap of `search`.
std::vector<EnergyLevel> energy_levels(const std::vector<CriticalPoint>& points,
                                       double relative_gap);

struct MultistartResult {
  std::vector<CriticalPoint> points;  // deduplicated, ascending energy
  int starts = 0;
  int failures = 0;
};

/// Survey of critical points from seeded random starts. Global minima are
/// always reported (one representative); other points only inside
/// [energy_min, energy_max].
MultistartResult multistart(const LoopParams& params, const SearchConfig& search);

/// Critical point with q_0 = q at energy `target` (relative tolerance
/// `energy_tol`), searched over `directions` initial directions at q.
std::optional<CriticalPoint> find_through_point(const LoopParams& params, const Vec& q,
                                                double target, const SearchConfig& search,
                                                int directions = 16, double energy_tol = 1e-6);

/// Initial directions at q: evenly spaced for n = 2, Fibonacci-sphere in a
/// g-orthonormal frame for n = 3, seeded random otherwise.
std::vector<Vec> direction_grid(const MetricModel& model, const Vec& q, int count,
                                std::uint64_t seed = 1);

}  // namespace zoll
