#include "zoll/critical.hpp"

#include "zoll/errors.hpp"
#include "zoll/morse.hpp"
#include "zoll/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

namespace zoll {

std::string to_string(CriticalKind kind) {
  switch (kind) {
    case CriticalKind::GlobalMinimum: return "GlobalMinimum";
    case CriticalKind::SmoothGeodesic: return "SmoothGeodesic";
    case CriticalKind::ZigZag: return "ZigZag";
  }
  return "?";
}

CriticalKind parse_kind(const std::string& name) {
  if (name == "GlobalMinimum") return CriticalKind::GlobalMinimum;
  if (name == "SmoothGeodesic") return CriticalKind::SmoothGeodesic;
  if (name == "ZigZag") return CriticalKind::ZigZag;
  throw ConfigError(fmt::format("unknown critical point kind '{}'", name));
}

Vec CriticalPoint::geodesic_direction() const { return ev.vec / ev.norm; }

void SearchConfig::validate() const {
  if (max_iterations < 1) throw ConfigError("search.max_iterations must be positive");
  if (!(gradient_tol > 0.0)) throw ConfigError("search.gradient_tol must be positive");
  if (!(newton_switch > 0.0)) throw ConfigError("search.newton_switch must be positive");
  if (!(trust_radius > 0.0)) throw ConfigError("search.trust_radius must be positive");
  if (!(armijo > 0.0 && armijo < 1.0)) throw ConfigError("search.armijo must lie in (0, 1)");
  if (!(backtrack > 0.0 && backtrack < 1.0))
    throw ConfigError("search.backtrack must lie in (0, 1)");
  if (max_rejections < 1) throw ConfigError("search.max_rejections must be positive");
  if (samples < 0) throw ConfigError("search.samples must be non-negative");
  if (workers < 1) throw ConfigError("search.workers must be positive");
  if (!(energy_min < energy_max)) throw ConfigError("search.energy window is empty");
  if (!(energy_gap > 0.0) || !(ev_angle_gap > 0.0) || !(shift_tol > 0.0))
    throw ConfigError("search deduplication thresholds must be positive");
  if (!(cos_aligned > 0.0 && cos_aligned < 1.0))
    throw ConfigError("search.cos_aligned must lie in (0, 1)");
  if (!(smooth_tol > 0.0)) throw ConfigError("search.smooth_tol must be positive");
}

namespace {

double g_cos(const MetricModel& m, const Vec& x, const Vec& a, const Vec& b) {
  return m.inner(x, a, b) / (m.norm(x, a) * m.norm(x, b));
}

bool is_minimum_energy(const LoopConfig& c) {
  const double e0 = 4.0 * c.params().delta * c.params().delta;
  return std::abs(c.energy() - e0) < 1e-6 * e0;
}

}  // namespace

CriticalKind classify(const LoopConfig& config, double cos_tol, double smooth_tol) {
  const MetricModel& m = *config.params().model;
  for (int i = 2; i < config.k(); ++i) {
    const Vec vm = config.velocity_minus(i);
    const double mis = m.norm(config.point(i), vm - config.velocity_plus(i)) /
                       m.norm(config.point(i), vm);
    if (!(mis < smooth_tol))
      throw UnclassifiableCritical(
          fmt::format("joint {} is not smooth (relative mismatch {:.3g})", i, mis));
  }
  const double c0 = g_cos(m, config.point(0), config.velocity_minus(0), config.velocity_plus(0));
  const double c1 = g_cos(m, config.point(1), config.velocity_minus(1), config.velocity_plus(1));
  if (c0 > cos_tol && c1 > cos_tol) return CriticalKind::SmoothGeodesic;
  if (c0 < -cos_tol && c1 < -cos_tol)
    return is_minimum_energy(config) ? CriticalKind::GlobalMinimum : CriticalKind::ZigZag;
  throw UnclassifiableCritical(
      fmt::format("mixed velocity pattern at joints 0 and 1 (cos {:.6f}, {:.6f})", c0, c1));
}

CriticalPoint make_critical_point(const LoopConfig& config, double gradient_norm,
                                  int iterations) {
  CriticalPoint cp{config, config.energy(), classify(config), gradient_norm, ev_map(config),
                   std::nullopt, iterations};
  const double root = std::sqrt(cp.energy);
  if (cp.kind == CriticalKind::SmoothGeodesic) cp.period = root;
  if (cp.kind == CriticalKind::ZigZag) cp.period = root - 2.0 * config.params().delta;
  return cp;
}

namespace {

struct Iterate {
  std::unique_ptr<ChartCoordinates> coords;
  LoopConfig config;
  Eigen::VectorXd gradient;
};

Iterate make_iterate(const PrimeChart& chart, bool pinned, const LoopConfig* reuse) {
  auto coords = std::make_unique<ChartCoordinates>(chart, pinned);
  auto ev = coords->evaluate(Eigen::VectorXd::Zero(coords->dimension()), reuse);
  return {std::move(coords), std::move(ev.config), std::move(ev.gradient)};
}

}  // namespace

CriticalPoint refine(const LoopConfig& init, const SearchConfig& search,
                     const RefineOptions& options) {
  search.validate();
  const MetricModel& model = *init.params().model;
  const PrimeChart start = PrimeChart::from_config(init);
  const Vec axis = start.u;
  const double cone_cos =
      options.cone_half_angle ? std::cos(*options.cone_half_angle) : -2.0;

  Iterate cur = make_iterate(start, options.pinned, &init);
  double gn = cur.gradient.norm();
  double mu = -1.0;
  int iter = 0;
  bool last_domain_failure = false;

  while (gn >= search.gradient_tol) {
    if (iter >= search.max_iterations)
      throw MaxIterations(fmt::format("no critical point after {} iterations (|grad| = {:.3g})",
                                      iter, gn));
    ++iter;
    const int d = cur.coords->dimension();
    const bool descent = search.mode == SearchConfig::Mode::Descent && gn > search.newton_switch;

    Eigen::VectorXd lambda, proj;
    Eigen::MatrixXd vecs;
    if (!descent) {
      const HessianResult h = hessian(*cur.coords, &cur.config);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.matrix);
      lambda = es.eigenvalues();
      vecs = es.eigenvectors();
      proj = vecs.transpose() * cur.gradient;
      if (mu < 0.0) mu = 1e-2 * lambda.cwiseAbs().maxCoeff() * lambda.cwiseAbs().maxCoeff();
    }
    const bool newton = !descent && gn < search.newton_switch;
    auto make_step = [&](double damping) -> Eigen::VectorXd {
      if (descent) return -cur.gradient;
      const double scale = lambda.cwiseAbs().maxCoeff();
      Eigen::VectorXd coef = Eigen::VectorXd::Zero(d);
      for (int j = 0; j < d; ++j) {
        const double l = lambda(j);
        if (newton) {
          if (std::abs(l) > 1e-7 * scale) coef(j) = -proj(j) / l;
        } else {
          coef(j) = -l * proj(j) / (l * l + damping);
        }
      }
      return vecs * coef;
    };

    double t = 1.0;
    double damping = mu;
    bool accepted = false;
    for (int rej = 0; rej < search.max_rejections; ++rej) {
      Eigen::VectorXd step = make_step(damping) * t;
      const double sn = step.norm();
      if (sn > search.trust_radius) step *= search.trust_radius / sn;
      try {
        const PrimeChart trial_chart = cur.coords->point(step);
        if (options.cone_half_angle) {
          const Vec ax = project_tangent(trial_chart.q0, axis);
          if (g_cos(model, trial_chart.q0, ax, trial_chart.u) < cone_cos)
            throw DomainError("direction left the search cone");
        }
        Iterate trial = make_iterate(trial_chart, options.pinned, &cur.config);
        const double tn = trial.gradient.norm();
        bool ok;
        if (descent) {
          const double e0 = cur.config.energy();
          ok = trial.config.energy() <= e0 - search.armijo * gn * step.norm();
        } else {
          ok = tn < gn;
        }
        if (ok) {
          cur = std::move(trial);
          gn = tn;
          accepted = true;
          last_domain_failure = false;
          if (!descent && !newton) mu = std::max(damping / 3.0, 1e-12);
          break;
        }
        last_domain_failure = false;
      } catch (const DomainError&) {
        last_domain_failure = true;
      } catch (const ConvergenceFailure&) {
        last_domain_failure = true;
      }
      if (descent || newton) {
        t *= search.backtrack;
      } else {
        damping *= 4.0;
      }
    }
    if (!accepted) {
      if (last_domain_failure)
        throw BoundaryEscape(fmt::format("search left the domain (|grad| = {:.3g})", gn));
      throw MaxIterations(
          fmt::format("line search failed after {} iterations (|grad| = {:.3g})", iter, gn));
    }
  }

  double full = gn;
  if (options.pinned) {
    full = make_iterate(PrimeChart::from_config(cur.config), false, &cur.config).gradient.norm();
    if (!(full < std::max(100.0 * search.gradient_tol, 1e-6)))
      throw ConvergenceFailure(fmt::format(
          "pinned search converged to a loop with a corner at q_0 (|grad| = {:.3g})", full));
  }
  return make_critical_point(cur.config, full, iter);
}

LoopConfig sample_zigzag(const LoopParams& params, const Vec& q, const Vec& u, double length) {
  params.validate();
  const MetricModel& model = *params.model;
  const double delta = params.delta;
  const int k = params.k;
  const double kbar = k_threshold(length + 2.0 * delta, delta, params.rho());
  if (!(k > kbar))
    throw DomainError(fmt::format("k = {} does not exceed the zig-zag threshold {:.6g}", k, kbar));
  Vec unit = project_tangent(q, u);
  unit /= model.norm(q, unit);
  const FlowResult f = geodesic_flow(model, q, unit, delta);
  std::vector<Vec> points{q, f.x};
  const double step = (length + delta) / (k - 1);
  Vec x = f.x, v = -f.v;
  for (int i = 2; i < k; ++i) {
    const FlowResult g = geodesic_flow(model, x, v, step);
    x = g.x;
    v = g.v;
    points.push_back(x);
  }
  return LoopConfig::build(params, std::move(points), nullptr,
                           SegmentLog{unit * delta, f.v * delta, delta});
}

CriticalPoint make_zigzag(const CriticalPoint& smooth, const LoopParams& params,
                          const SearchConfig& search) {
  if (smooth.kind != CriticalKind::SmoothGeodesic || !smooth.period)
    throw DomainError("zig-zag construction needs a smooth closed geodesic");
  const LoopConfig c =
      sample_zigzag(params, smooth.config.point(0), smooth.geodesic_direction(), *smooth.period);
  const double gn = gradient(PrimeChart::from_config(c)).norm();
  if (gn < search.gradient_tol) return make_critical_point(c, gn, 0);
  return refine(c, search);
}

namespace {

// Shortest point of the closed geodesic (q, u, length) to `target`, refined
// by golden section; returns (t, distance).
std::pair<double, double> closest_on_geodesic(const MetricModel& model, const Vec& q, const Vec& u,
                                              double length, const Vec& target) {
  double best_t = 0.0, best_d = (q - target).norm();
  struct S {
    double t;
    Vec x, v;
  };
  std::vector<S> samples;
  trace_geodesic(model, q, u, length, 0.02, [&](double t, const Vec& x, const Vec& v) {
    samples.push_back({t, x, v});
    return true;
  });
  std::size_t idx = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double d = (samples[i].x - target).norm();
    if (d < best_d) {
      best_d = d;
      best_t = samples[i].t;
      idx = i;
    }
  }
  const S& from = samples[idx == 0 ? 0 : idx - 1];
  double a = from.t;
  double b = idx + 1 < samples.size() ? samples[idx + 1].t : samples[idx].t;
  auto f = [&](double t) {
    return (geodesic_flow(model, from.x, from.v, t - from.t).x - target).norm();
  };
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 1e-12 * std::max(1.0, b)) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  const double t = 0.5 * (a + b);
  const double dt = f(t);
  if (dt < best_d) return {t, dt};
  return {best_t, best_d};
}

}  // namespace

bool same_critical_family(const CriticalPoint& a, const CriticalPoint& b,
                          const SearchConfig& search) {
  if (a.kind != b.kind) return false;
  if (std::abs(a.energy - b.energy) > search.energy_gap * std::max(1.0, a.energy)) return false;
  if (a.kind == CriticalKind::GlobalMinimum) return true;
  const MetricModel& model = *a.config.params().model;
  const double len = *b.period;
  const Vec ub = b.geodesic_direction();
  // The zig-zag runs its geodesic backwards after the first segment; both
  // kinds are determined by (q_0, direction, length).
  const auto [t, d] = closest_on_geodesic(model, b.config.point(0), ub, len, a.config.point(0));
  if (d > 1e-3) return false;
  const FlowResult f = geodesic_flow(model, b.config.point(0), ub, t);
  if (g_cos(model, f.x, f.v, a.geodesic_direction()) < search.cos_aligned) return false;
  try {
    const LoopConfig re = a.kind == CriticalKind::SmoothGeodesic
                              ? sample_closed_geodesic(a.config.params(), f.x, f.v, len)
                              : sample_zigzag(a.config.params(), f.x, f.v, len);
    double worst = 0.0;
    for (int i = 0; i < re.k(); ++i)
      worst = std::max(worst, (re.point(i) - a.config.point(i)).norm());
    return worst < search.shift_tol;
  } catch (const Error&) {
    return false;
  }
}

std::vector<EnergyLevel> energy_levels(const std::vector<CriticalPoint>& points,
                                       double relative_gap) {
  std::vector<const CriticalPoint*> sorted;
  for (const auto& p : points) sorted.push_back(&p);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](auto* a, auto* b) { return a->energy < b->energy; });
  std::vector<EnergyLevel> out;
  std::vector<double> sums;
  for (const auto* p : sorted) {
    bool merged = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double e = sums[i] / out[i].count;
      if (out[i].kind == p->kind && std::abs(p->energy - e) <= relative_gap * std::max(1.0, e)) {
        ++out[i].count;
        sums[i] += p->energy;
        out[i].energy = sums[i] / out[i].count;
        merged = true;
        break;
      }
    }
    if (!merged) {
      out.push_back({p->energy, p->kind, 1});
      sums.push_back(p->energy);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const EnergyLevel& a, const EnergyLevel& b) { return a.energy < b.energy; });
  return out;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 step over (seed, index)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// First local minimum of the phase-space return distance on [lo, hi].
double near_return(const MetricModel& model, const Vec& q, const Vec& u, double lo, double hi) {
  double best_t = -1.0, best_f = 1e300;
  double prev2 = 1e300, prev = 1e300, prev_t = 0.0;
  trace_geodesic(model, q, u, hi, 0.02, [&](double t, const Vec& x, const Vec& v) {
    const double f = std::sqrt((x - q).squaredNorm() + (v - u).squaredNorm());
    if (prev_t >= lo && prev < prev2 && prev <= f && prev < best_f) {
      best_f = prev;
      best_t = prev_t;
    }
    prev2 = prev;
    prev = f;
    prev_t = t;
    return true;
  });
  return best_t;
}

}  // namespace

MultistartResult multistart(const LoopParams& params, const SearchConfig& search) {
  params.validate();
  search.validate();
  const MetricModel& model = *params.model;
  const double delta = params.delta;
  const double reach = params.rho() * std::sqrt(static_cast<double>(params.k - 1));
  const double e_lo = std::sqrt(std::max(search.energy_min, 0.0));
  const double e_hi = std::sqrt(std::min(search.energy_max, sup_energy(params)));
  // lengths admissible for the two sampling constructions, intersected with the window
  const double s_lo = std::max(2.0 * delta, 0.98 * e_lo);
  const double s_hi = std::min(delta + 0.98 * reach, 1.02 * e_hi);
  const double z_lo = std::max(2.0 * delta, 0.98 * e_lo - 2.0 * delta);
  const double z_hi = std::min(0.98 * reach - delta, 1.02 * e_hi - 2.0 * delta);

  MultistartResult out;
  out.starts = search.samples;
  std::vector<std::optional<CriticalPoint>> found(static_cast<std::size_t>(search.samples));
  parallel_for(search.samples, search.workers, [&](int i) {
    std::mt19937_64 rng(mix_seed(search.seed, static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    try {
      const Vec q = sample_point(model.dim(), rng);
      const Vec u = sample_unit_direction(model, q, rng);
      std::optional<LoopConfig> init;
      switch (i % 4) {
        case 0:
        case 1: {
          if (!(s_lo < s_hi)) break;
          double len = s_lo + (s_hi - s_lo) * unit(rng);
          if (i % 4 == 0) {
            const double t = near_return(model, q, u, s_lo, s_hi);
            if (t > 0.0) len = t;
          }
          init = sample_closed_geodesic(params, q, u, len);
          break;
        }
        case 2: {
          if (!(z_lo < z_hi)) break;
          double len = z_lo + (z_hi - z_lo) * unit(rng);
          const double t = near_return(model, q, u, z_lo, z_hi);
          if (t > 0.0 && unit(rng) < 0.75) len = t;
          init = sample_zigzag(params, q, u, len);
          break;
        }
        default:
          init = random_config(params, rng);
      }
      if (!init) init = random_config(params, rng);
      found[static_cast<std::size_t>(i)] = refine(*init, search);
    } catch (const Error&) {
      // counted below
    }
  });

  std::vector<CriticalPoint> kept;
  bool have_minimum = false;
  for (auto& f : found) {
    if (!f) {
      ++out.failures;
      continue;
    }
    if (f->kind == CriticalKind::GlobalMinimum) {
      if (!have_minimum) kept.push_back(std::move(*f));
      have_minimum = true;
      continue;
    }
    if (f->energy < search.energy_min || f->energy > search.energy_max) continue;
    bool dup = false;
    for (const auto& k : kept)
      if (same_critical_family(*f, k, search) || same_critical_family(k, *f, search)) {
        dup = true;
        break;
      }
    if (!dup) kept.push_back(std::move(*f));
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const CriticalPoint& a, const CriticalPoint& b) { return a.energy < b.energy; });
  out.points = std::move(kept);
  return out;
}

std::vector<Vec> direction_grid(const MetricModel& model, const Vec& q, int count,
                                std::uint64_t seed) {
  const Mat frame = tangent_frame(model, q);
  const int n = model.dim();
  std::vector<Vec> out;
  if (n == 2) {
    for (int j = 0; j < count; ++j) {
      const double a = 2.0 * std::numbers::pi * j / count;
      out.push_back(frame.col(0) * std::cos(a) + frame.col(1) * std::sin(a));
    }
  } else if (n == 3) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int j = 0; j < count; ++j) {
      const double z = 1.0 - (2.0 * j + 1.0) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double a = golden * j;
      out.push_back(frame.col(0) * (r * std::cos(a)) + frame.col(1) * (r * std::sin(a)) +
                    frame.col(2) * z);
    }
  } else {
    std::mt19937_64 rng(seed);
    for (int j = 0; j < count; ++j) out.push_back(sample_unit_direction(model, q, rng));
  }
  return out;
}

std::optional<CriticalPoint> find_through_point(const LoopParams& params, const Vec& q,
                                                double target, const SearchConfig& search,
                                                int directions, double energy_tol) {
  params.validate();
  const double delta = params.delta;
  if (!(target > 4.0 * delta * delta && target < sup_energy(params)))
    throw DomainError(fmt::format("target energy {} outside (4 delta^2, sup)", target));
  const double len = std::sqrt(target);
  const Vec base = normalize_point(q);
  RefineOptions pinned;
  pinned.pinned = true;
  for (const Vec& u : direction_grid(*params.model, base, directions, search.seed)) {
    for (int shape = 0; shape < 2; ++shape) {
      try {
        const LoopConfig init = shape == 0 ? sample_closed_geodesic(params, base, u, len)
                                           : sample_zigzag(params, base, u, len - 2.0 * delta);
        CriticalPoint cp = refine(init, search, pinned);
        if (cp.kind != CriticalKind::GlobalMinimum &&
            std::abs(cp.energy - target) < energy_tol * target)
          return cp;
      } catch (const Error&) {
        // try the next start
      }
    }
  }
  return std::nullopt;
}

}  // namespace zoll
