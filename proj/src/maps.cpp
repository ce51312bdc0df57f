#include "zoll/errors.hpp"
#include "zoll/manifold.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace zoll {

Vec normalize_point(const Vec& x) { return x / x.norm(); }

Vec project_tangent(const Vec& x, const Vec& v) { return v - (x.dot(v) / x.squaredNorm()) * x; }

TangentVector TangentVector::make(const MetricModel& model, const Vec& base, const Vec& vec) {
  TangentVector out;
  out.base = base;
  out.vec = project_tangent(base, vec);
  out.norm = model.norm(base, out.vec);
  return out;
}

namespace {

// Gram-Schmidt in the g inner product over the tangent projections of the
// coordinate axes, least normal axes first.
Mat gram_schmidt(const MetricModel& model, const Vec& x, const Mat& start) {
  const int big_n = static_cast<int>(x.size());
  const int n = big_n - 1;
  const Mat g = model.metric(x);
  Mat basis(big_n, n);
  int count = 0;
  auto add = [&](Vec c) {
    c = project_tangent(x, c);
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < count; ++j) c -= basis.col(j).dot(g * c) * basis.col(j);
    const double nrm = std::sqrt(std::max(0.0, c.dot(g * c)));
    if (nrm < 1e-6) return;
    basis.col(count++) = c / nrm;
  };
  for (int j = 0; j < start.cols() && count < n; ++j) add(start.col(j));
  std::vector<int> order(big_n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(x(a)) < std::abs(x(b)); });
  for (int idx : order) {
    if (count == n) break;
    add(Vec::Unit(big_n, idx));
  }
  if (count != n) throw Error("failed to build a tangent frame");
  return basis;
}

}  // namespace

Mat tangent_frame(const MetricModel& model, const Vec& x) {
  return gram_schmidt(model, x, Mat(x.size(), 0));
}

Mat complement_frame(const MetricModel& model, const Vec& x, const Vec& u) {
  Mat start(x.size(), 1);
  start.col(0) = u;
  const Mat full = gram_schmidt(model, x, start);
  return full.rightCols(full.cols() - 1);
}

Vec sample_point(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vec x(n + 1);
  do {
    for (int i = 0; i <= n; ++i) x(i) = normal(rng);
  } while (x.norm() < 1e-8);
  return x / x.norm();
}

Vec sample_unit_direction(const MetricModel& model, const Vec& x, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  const Mat frame = tangent_frame(model, x);
  Vec c(frame.cols());
  do {
    for (int i = 0; i < c.size(); ++i) c(i) = normal(rng);
  } while (c.norm() < 1e-8);
  return frame * (c / c.norm());
}

Vec exp_map(const MetricModel& model, const Vec& q, const Vec& v, bool checked) {
  const double nv = model.norm(q, v);
  if (checked && nv >= model.injectivity_radius())
    throw DomainError(fmt::format("|v| = {} is not below the injectivity radius {}", nv,
                                  model.injectivity_radius()));
  if (nv == 0.0) return q;
  return geodesic_flow(model, q, v, 1.0).x;
}

LogResult log_map_detailed(const MetricModel& model, const Vec& q, const Vec& p,
                           const Vec* guess) {
  const double rho = model.injectivity_radius();
  LogResult out;
  Vec v, end;
  if (model.uses_closed_form() && model.closed_form_log(q, p, v, end)) {
    out.initial = TangentVector::make(model, q, v);
    if (out.initial.norm >= rho)
      throw DomainError(fmt::format("distance {} is not below the injectivity radius {}",
                                    out.initial.norm, rho));
    out.end_velocity = end;
    return out;
  }

  const int big_n = static_cast<int>(q.size());
  if ((p - q).norm() == 0.0) {
    out.initial = TangentVector::make(model, q, Vec::Zero(big_n));
    out.end_velocity = Vec::Zero(big_n);
    return out;
  }
  if (guess != nullptr) {
    v = project_tangent(q, *guess);
  } else {
    const Vec w = project_tangent(q, p - q);
    const double wn = w.norm();
    if (wn == 0.0) throw DomainError("antipodal points have no unique connecting geodesic");
    // Round-sphere angle along the projected chord as first estimate.
    v = w * (std::atan2(wn, q.dot(p)) / wn);
  }

  const double start_norm = model.norm(q, v);

  // Euclidean orthonormal basis of T_q for the Newton unknowns.
  const Mat basis = [&] {
    Eigen::HouseholderQR<Mat> qr(q);
    const Mat full = qr.householderQ() * Mat::Identity(big_n, big_n);
    return Mat(full.rightCols(big_n - 1));
  }();
  SensMat seeds = SensMat::Zero(2 * big_n, big_n - 1);
  seeds.bottomRows(big_n) = basis;

  constexpr int kMaxIter = 60;
  constexpr double kTol = 1e-13;
  FlowResult f = geodesic_flow(model, q, v, 1.0, &seeds);
  double res = (f.x - p).norm();
  int it = 0;
  for (; it < kMaxIter && res > kTol; ++it) {
    const Mat jac = f.sens.topRows(big_n);
    const Vec step = jac.colPivHouseholderQr().solve(p - f.x);
    double lambda = 1.0;
    bool improved = false;
    for (int back = 0; back < 30; ++back) {
      Vec trial = v + lambda * (basis * step);
      if (model.norm(q, trial) >= 1.5 * rho) {
        lambda *= 0.5;
        continue;
      }
      FlowResult ft = geodesic_flow(model, q, trial, 1.0, &seeds);
      const double rt = (ft.x - p).norm();
      if (rt < res || (lambda == 1.0 && rt < 1e-10)) {
        v = trial;
        f = std::move(ft);
        res = rt;
        improved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!improved) break;
  }
  // Noise floor of the integrator: accept a small plateau.
  if (res > 1e-11) {
    if (std::max(start_norm, model.norm(q, v)) >= 0.8 * rho)
      throw DomainError(fmt::format(
          "no geodesic found below the injectivity radius {} (residual {:.3g})", rho, res));
    throw ConvergenceFailure(
        fmt::format("geodesic shooting stalled after {} iterations, residual {:.3g}", it, res));
  }
  out.initial = TangentVector::make(model, q, v);
  if (out.initial.norm >= rho)
    throw DomainError(
        fmt::format("distance {} is not below the injectivity radius {}", out.initial.norm, rho));
  out.end_velocity = project_tangent(f.x, f.v);
  out.iterations = it;
  return out;
}

TangentVector log_map(const MetricModel& model, const Vec& q, const Vec& p) {
  return log_map_detailed(model, q, p).initial;
}

double dist(const MetricModel& model, const Vec& q, const Vec& p) {
  return log_map(model, q, p).norm;
}

std::optional<double> detect_closure(const MetricModel& model, const Vec& q, const Vec& v,
                                     double t_max, double tol) {
  if (!(t_max > 0.0)) throw DomainError("t_max must be positive");
  auto phase = [&](const Vec& x, const Vec& w) {
    return std::sqrt((x - q).squaredNorm() + (w - v).squaredNorm());
  };

  struct Sample {
    double t;
    Vec x, v;
    double f;
  };
  constexpr double kSpacing = 0.05;
  const double leave = std::max(0.05, 100.0 * tol);
  std::vector<Sample> samples;
  bool left = false;
  std::optional<double> found;

  // Golden-section refinement on [a, b], shooting from the sample at a.
  auto refine = [&](const Sample& from, double b) -> std::pair<double, double> {
    auto f_at = [&](double t) {
      if (t <= from.t) return from.f;
      const FlowResult r = geodesic_flow(model, from.x, from.v, t - from.t);
      return phase(r.x, r.v);
    };
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = from.t;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = f_at(c), fd = f_at(d);
    while (b - a > 1e-11 * std::max(1.0, b)) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - gr * (b - a);
        fc = f_at(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + gr * (b - a);
        fd = f_at(d);
      }
    }
    const double t = 0.5 * (a + b);
    return {t, f_at(t)};
  };

  auto consider = [&](std::size_t i) {
    // samples[i] is a discrete local minimum
    const Sample& lo = samples[i - 1];
    const double hi = samples[i + 1].t;
    if (samples[i].f > 0.5) return false;
    const auto [t, f] = refine(lo, hi);
    if (f < tol) {
      found = t;
      return true;
    }
    return false;
  };

  trace_geodesic(model, q, v, t_max, kSpacing, [&](double t, const Vec& x, const Vec& w) {
    const double f = phase(x, w);
    if (!left) {
      if (f > leave) left = true;
      samples.clear();
      samples.push_back({t, x, w, f});
      return true;
    }
    samples.push_back({t, x, w, f});
    const std::size_t m = samples.size();
    if (m >= 3 && samples[m - 2].f <= samples[m - 3].f && samples[m - 2].f < samples[m - 1].f &&
        consider(m - 2))
      return false;
    if (m > 3) samples.erase(samples.begin(), samples.begin() + static_cast<long>(m - 3));
    return true;
  });
  if (found) return found;
  // A return right at t_max has no right neighbour; check the tail.
  if (samples.size() >= 2 && samples.back().f < 0.5 &&
      samples.back().f <= samples[samples.size() - 2].f) {
    const auto [t, f] = refine(samples[samples.size() - 2], samples.back().t);
    if (f < tol) return t;
  }
  return std::nullopt;
}

std::vector<Vec> geodesic_polyline(const MetricModel& model, const Vec& q, const Vec& v,
                                   double t_end, int samples) {
  std::vector<Vec> out;
  out.reserve(samples + 1);
  out.push_back(q);
  Vec x = q, w = v;
  for (int i = 1; i <= samples; ++i) {
    const FlowResult f = geodesic_flow(model, x, w, t_end / samples);
    x = f.x;
    w = f.v;
    out.push_back(x);
  }
  return out;
}

}  // namespace zoll
