#include "zoll/diagnostics.hpp"

#include "zoll/errors.hpp"
#include "zoll/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace zoll {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Zoll: return "Zoll";
    case Verdict::Besse: return "Besse";
    case Verdict::NonBesse: return "NonBesse";
  }
  return "?";
}

void DiagnosticConfig::validate() const {
  if (scan_samples < 1) throw ConfigError("diagnostics.scan_samples must be positive");
  if (!(t_max > 0.0)) throw ConfigError("diagnostics.t_max must be positive");
  if (!(period_tol > 0.0)) throw ConfigError("diagnostics.period_tol must be positive");
  if (coverage_samples < 1) throw ConfigError("diagnostics.coverage_samples must be positive");
  if (!(cone_half_angle > 0.0)) throw ConfigError("diagnostics.cone_half_angle must be positive");
  if (!(angle_tol > 0.0)) throw ConfigError("diagnostics.angle_tol must be positive");
  if (coverage_iterations < 1) throw ConfigError("diagnostics.coverage_iterations must be positive");
  if (!(level_margin >= 0.0)) throw ConfigError("diagnostics.level_margin must be non-negative");
  if (workers < 1) throw ConfigError("diagnostics.workers must be positive");
}

namespace {

std::uint64_t sample_seed(std::uint64_t seed, int i, std::uint64_t stream) {
  std::uint64_t z = seed * 0x2545f4914f6cdd1dULL + stream * 0x9e3779b97f4a7c15ULL +
                    static_cast<std::uint64_t>(i) + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Smallest common multiple of the cluster periods with integer ratios up to 12.
std::optional<double> common_period(const std::vector<PeriodCluster>& clusters, double tol) {
  const double base = clusters.back().period;
  for (int m = 1; m <= 12; ++m) {
    const double cand = m * base;
    bool ok = true;
    for (const auto& c : clusters) {
      const double r = cand / c.period;
      if (std::abs(r - std::round(r)) * c.period > 10.0 * tol * std::round(r)) {
        ok = false;
        break;
      }
    }
    if (ok) return cand;
  }
  return std::nullopt;
}

}  // namespace

ClosureScan besse_zoll_scan(const MetricModel& model, int samples, double t_max, double tol,
                            std::uint64_t seed, int workers) {
  if (samples < 1) throw DomainError("scan needs at least one sample");
  std::vector<std::optional<double>> periods(static_cast<std::size_t>(samples));
  std::vector<char> failed(static_cast<std::size_t>(samples), 0);
  parallel_for(samples, workers, [&](int i) {
    std::mt19937_64 rng(sample_seed(seed, i, 1));
    const Vec q = sample_point(model.dim(), rng);
    const Vec v = sample_unit_direction(model, q, rng);
    try {
      periods[static_cast<std::size_t>(i)] = detect_closure(model, q, v, t_max, tol);
    } catch (const IntegratorFailure&) {
      failed[static_cast<std::size_t>(i)] = 1;
    }
  });

  ClosureScan scan;
  scan.samples = samples;
  std::vector<double> closed;
  for (int i = 0; i < samples; ++i) {
    if (failed[static_cast<std::size_t>(i)]) ++scan.failures;
    if (periods[static_cast<std::size_t>(i)]) closed.push_back(*periods[static_cast<std::size_t>(i)]);
  }
  if (scan.failures > 0.01 * samples)
    throw InconclusiveScan(
        fmt::format("{} of {} samples hit integrator failures", scan.failures, samples));
  scan.closed = static_cast<int>(closed.size());
  scan.closure_fraction = static_cast<double>(scan.closed) / samples;

  std::sort(closed.begin(), closed.end());
  for (std::size_t i = 0; i < closed.size(); ++i) {
    if (i == 0 || closed[i] - closed[i - 1] > 10.0 * tol) scan.clusters.push_back({0.0, 0.0, 0});
    auto& c = scan.clusters.back();
    c.period += closed[i];
    ++c.count;
  }
  std::size_t at = 0;
  for (auto& c : scan.clusters) {
    c.spread = closed[at + static_cast<std::size_t>(c.count) - 1] - closed[at];
    at += static_cast<std::size_t>(c.count);
    c.period /= c.count;
  }

  if (scan.closed == samples) {
    if (scan.clusters.size() == 1) {
      scan.verdict = Verdict::Zoll;
      scan.period = scan.clusters.front().period;
    } else if (auto p = common_period(scan.clusters, tol)) {
      scan.verdict = Verdict::Besse;
      scan.period = p;
    }
  }
  return scan;
}

CoverageResult ev_coverage(const LoopParams& params, double level, CriticalKind kind,
                           const SearchConfig& search, const DiagnosticConfig& diag) {
  params.validate();
  diag.validate();
  if (kind == CriticalKind::GlobalMinimum)
    throw DomainError("coverage is measured at a positive critical level");
  const MetricModel& model = *params.model;
  const double root = std::sqrt(level);
  const double len = kind == CriticalKind::ZigZag ? root - 2.0 * params.delta : root;

  SearchConfig s = search;
  s.max_iterations = diag.coverage_iterations;
  RefineOptions opt;
  opt.pinned = true;
  opt.cone_half_angle = diag.cone_half_angle;

  const int n = diag.coverage_samples;
  std::vector<Vec> qs(static_cast<std::size_t>(n)), us(static_cast<std::size_t>(n));
  std::vector<std::string> miss(static_cast<std::size_t>(n));
  parallel_for(n, diag.workers, [&](int i) {
    std::mt19937_64 rng(sample_seed(diag.seed, i, 2));
    const Vec q = sample_point(model.dim(), rng);
    const Vec u = sample_unit_direction(model, q, rng);
    qs[static_cast<std::size_t>(i)] = q;
    us[static_cast<std::size_t>(i)] = u;
    std::string& reason = miss[static_cast<std::size_t>(i)];
    try {
      const LoopConfig init = kind == CriticalKind::ZigZag ? sample_zigzag(params, q, u, len)
                                                            : sample_closed_geodesic(params, q, u, len);
      const CriticalPoint cp = refine(init, s, opt);
      const double angle = std::acos(std::clamp(
          model.inner(q, cp.ev.vec, u) / (cp.ev.norm * model.norm(q, u)), -1.0, 1.0));
      if (std::abs(cp.energy - level) > search.energy_gap * level)
        reason = fmt::format("converged at energy {:.17g}", cp.energy);
      else if (cp.kind != kind)
        reason = fmt::format("converged to a {}", to_string(cp.kind));
      else if (angle > diag.angle_tol)
        reason = fmt::format("Ev direction off by {:.6g} rad", angle);
    } catch (const Error& e) {
      reason = e.what();
    }
  });

  CoverageResult out;
  out.energy = level;
  out.samples = n;
  for (int i = 0; i < n; ++i) {
    if (miss[static_cast<std::size_t>(i)].empty()) {
      ++out.hits;
    } else {
      out.witnesses.push_back({qs[static_cast<std::size_t>(i)], us[static_cast<std::size_t>(i)],
                               miss[static_cast<std::size_t>(i)]});
    }
  }
  out.fraction = static_cast<double>(out.hits) / n;
  return out;
}

DiagnosticReport minmax_gap_report(const LoopParams& params, const SearchConfig& search,
                                   const DiagnosticConfig& diag) {
  params.validate();
  search.validate();
  diag.validate();
  const MetricModel& model = *params.model;
  DiagnosticReport r;
  r.model = model.name();
  r.scan = besse_zoll_scan(model, diag.scan_samples, diag.t_max, diag.period_tol, diag.seed,
                           diag.workers);

  const MultistartResult ms = multistart(params, search);
  r.multistart_failures = ms.failures;
  r.levels = energy_levels(ms.points, search.energy_gap);
  const double floor = 4.0 * params.delta * params.delta + diag.level_margin;
  for (const auto& level : r.levels) {
    if (level.kind == CriticalKind::GlobalMinimum || level.energy <= floor) continue;
    r.lowest_energy = level.energy;
    r.lowest_kind = level.kind;
    const double root = std::sqrt(level.energy);
    r.lowest_period = level.kind == CriticalKind::ZigZag ? root - 2.0 * params.delta : root;
    break;
  }

  if (!r.lowest_energy) {
    r.statement = "no critical level above the minimum was found; coverage not measured";
    return r;
  }
  r.coverage = ev_coverage(params, *r.lowest_energy, *r.lowest_kind, search, diag);
  const bool full = r.coverage->hits == r.coverage->samples;
  if (full && r.scan.verdict == Verdict::Zoll) {
    r.statement = fmt::format(
        "full Ev coverage at the lowest level and a Zoll scan: consistent with both min-max "
        "values equal to l^2 = {:.17g}",
        *r.lowest_energy);
  } else if (!full) {
    r.statement = fmt::format(
        "Ev misses {} of {} sampled unit vectors at the lowest level: the min-max values must "
        "separate",
        r.coverage->samples - r.coverage->hits, r.coverage->samples);
  } else {
    r.statement = "full Ev coverage at the lowest level but the closure scan is not Zoll";
  }
  return r;
}

}  // namespace zoll
