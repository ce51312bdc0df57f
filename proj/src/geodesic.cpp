#include "zoll/errors.hpp"
#include "zoll/manifold.hpp"

#include <boost/numeric/odeint.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace zoll {

namespace odeint = boost::numeric::odeint;

Vec Christoffel::contract(const Vec& a, const Vec& b) const {
  Vec out = Vec::Zero(size_);
  for (int k = 0; k < size_; ++k)
    for (int i = 0; i < size_; ++i)
      for (int j = 0; j < size_; ++j) out(k) += (*this)(k, i, j) * a(i) * b(j);
  return out;
}

Christoffel levi_civita(const Mat& metric, std::span<const Mat> derivatives) {
  const int n = static_cast<int>(metric.rows());
  const Mat inv = metric.inverse();
  Christoffel first(n);  // Gamma_{l,ij}
  for (int l = 0; l < n; ++l)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        first(l, i, j) =
            0.5 * (derivatives[i](l, j) + derivatives[j](l, i) - derivatives[l](i, j));
  Christoffel out(n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += inv(k, l) * first(l, i, j);
        out(k, i, j) = s;
      }
  return out;
}

namespace {

std::vector<Mat> metric_derivatives(const MetricModel& model, const Vec& x) {
  std::vector<Mat> d;
  d.reserve(x.size());
  for (int k = 0; k < x.size(); ++k) d.push_back(model.metric_derivative(x, k));
  return d;
}

// Gamma_amb(v, v) of the ambient form G, or zero for constant forms.
Vec ambient_quadratic(const MetricModel& model, const Vec& x, const Vec& v, const Mat& g) {
  const int n = static_cast<int>(x.size());
  if (model.constant_metric()) return Vec::Zero(n);
  Vec p = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    const Mat d = model.metric_derivative(x, i);
    p += v(i) * (d * v);
    p(i) -= 0.5 * v.dot(d * v);
  }
  return g.llt().solve(p);
}

}  // namespace

Christoffel christoffel(const MetricModel& model, const Vec& x) {
  const int n = static_cast<int>(x.size());
  const Mat g = model.metric(x);
  Christoffel amb = model.constant_metric() ? Christoffel(n)
                                            : levi_civita(g, metric_derivatives(model, x));
  const Vec normal = g.llt().solve(x);
  const double s = x.dot(normal);
  Christoffel out(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double xg = 0.0;
      for (int m = 0; m < n; ++m) xg += x(m) * amb(m, i, j);
      const double c = (xg - (i == j ? 1.0 : 0.0)) / s;
      for (int k = 0; k < n; ++k) out(k, i, j) = amb(k, i, j) - normal(k) * c;
    }
  return out;
}

Vec geodesic_acceleration(const MetricModel& model, const Vec& x, const Vec& v) {
  const Mat g = model.metric(x);
  const auto llt = g.llt();
  const Vec normal = llt.solve(x);
  const Vec gam = ambient_quadratic(model, x, v, g);
  const double lambda = (x.dot(gam) - v.dot(v)) / x.dot(normal);
  return -gam + lambda * normal;
}

void acceleration_jacobian(const MetricModel& model, const Vec& x, const Vec& v, Mat& dx,
                           Mat& dv) {
  const int n = static_cast<int>(x.size());
  if (model.constant_metric()) {
    const Mat inv = model.metric(x).inverse();
    const Vec normal = inv * x;
    const double s = x.dot(normal);
    const double vv = v.dot(v);
    dv = -2.0 / s * normal * v.transpose();
    dx = -vv / s * (inv - 2.0 / s * normal * normal.transpose());
    return;
  }
  constexpr double h = 1e-6;
  dx.resize(n, n);
  dv.resize(n, n);
  for (int j = 0; j < n; ++j) {
    Vec xp = x, xm = x, vp = v, vm = v;
    xp(j) += h;
    xm(j) -= h;
    vp(j) += h;
    vm(j) -= h;
    dx.col(j) = (geodesic_acceleration(model, xp, v) - geodesic_acceleration(model, xm, v)) / (2 * h);
    dv.col(j) = (geodesic_acceleration(model, x, vp) - geodesic_acceleration(model, x, vm)) / (2 * h);
  }
}

namespace {

using State = std::vector<double>;

struct GeodesicSystem {
  const MetricModel* model;
  int n;
  int cols;

  void operator()(const State& y, State& dy, double) const {
    const Eigen::Map<const Eigen::VectorXd> all(y.data(), static_cast<Eigen::Index>(y.size()));
    const Vec x = all.head(n);
    const Vec v = all.segment(n, n);
    const Vec a = geodesic_acceleration(*model, x, v);
    for (int i = 0; i < n; ++i) {
      dy[i] = v(i);
      dy[n + i] = a(i);
    }
    if (cols == 0) return;
    Mat ax, av;
    acceleration_jacobian(*model, x, v, ax, av);
    for (int c = 0; c < cols; ++c) {
      const int off = 2 * n * (c + 1);
      const Vec sx = all.segment(off, n);
      const Vec sv = all.segment(off + n, n);
      const Vec dsv = ax * sx + av * sv;
      for (int i = 0; i < n; ++i) {
        dy[off + i] = sv(i);
        dy[off + n + i] = dsv(i);
      }
    }
  }
};

// Integrates on [0, t_end] with projection onto the constraint set after every
// accepted step. `observer(t, y)` returning false stops the integration.
template <class Observer>
double integrate(const MetricModel& model, State& y, int cols, double t_end, double max_step,
                 long& steps, Observer&& observer) {
  const int n = model.ambient_dim();
  const auto& cfg = model.integrator();
  GeodesicSystem sys{&model, n, cols};
  auto stepper = odeint::make_controlled(cfg.abs_tol, cfg.rel_tol,
                                         odeint::runge_kutta_fehlberg78<State>());

  Vec x0(n), v0(n);
  for (int i = 0; i < n; ++i) {
    x0(i) = y[i];
    v0(i) = y[n + i];
  }
  const double speed0 = model.norm(x0, v0);
  double drift = 0.0;
  double t = 0.0;
  double dt = std::min({cfg.initial_step, max_step, t_end});
  long attempts = 0;
  while (t < t_end) {
    const bool last = t + dt >= t_end;
    if (last) dt = t_end - t;
    const auto res = stepper.try_step(sys, y, t, dt);
    if (++attempts > cfg.max_steps)
      throw IntegratorFailure(fmt::format("step budget exhausted at t = {} of {}", t, t_end));
    if (res != odeint::success) {
      if (dt < 1e-13 * std::max(1.0, t_end))
        throw IntegratorFailure(fmt::format("step size underflow at t = {}", t));
      continue;
    }
    ++steps;
    if (last) t = t_end;
    dt = std::min(dt, max_step);

    Vec x(n), v(n);
    for (int i = 0; i < n; ++i) {
      x(i) = y[i];
      v(i) = y[n + i];
    }
    const double xn = x.norm();
    x /= xn;
    v -= x.dot(v) * x;
    if (speed0 > 0) {
      const double sp = model.norm(x, v);
      drift += std::abs(sp - speed0) / speed0 + std::abs(xn - 1.0);
      v *= speed0 / sp;
    }
    for (int i = 0; i < n; ++i) {
      y[i] = x(i);
      y[n + i] = v(i);
    }
    if (!observer(t, x, v)) break;
  }
  return drift;
}

}  // namespace

FlowResult geodesic_flow(const MetricModel& model, const Vec& x0, const Vec& v0, double t,
                         const SensMat* seeds) {
  const int n = model.ambient_dim();
  FlowResult out;
  if (t < 0) throw DomainError("geodesic flow time must be non-negative");
  if (model.uses_closed_form()) {
    model.closed_form_flow(x0, v0, t, out.x, out.v, seeds, seeds ? &out.sens : nullptr);
    return out;
  }
  const int cols = seeds ? static_cast<int>(seeds->cols()) : 0;
  State y(2 * n * (cols + 1));
  for (int i = 0; i < n; ++i) {
    y[i] = x0(i);
    y[n + i] = v0(i);
  }
  for (int c = 0; c < cols; ++c)
    for (int i = 0; i < 2 * n; ++i) y[2 * n * (c + 1) + i] = (*seeds)(i, c);

  if (t == 0.0 || v0.norm() == 0.0) {
    out.x = x0;
    out.v = v0;
    if (seeds) {
      // d/d(v) of x(t) = x0 is t * I when v0 = 0 (straight-line start of exp)
      out.sens = *seeds;
      out.sens.topRows(n) += t * seeds->bottomRows(n);
    }
    return out;
  }
  out.error_estimate = integrate(model, y, cols, t, t, out.steps,
                                 [](double, const Vec&, const Vec&) { return true; });
  out.x.resize(n);
  out.v.resize(n);
  for (int i = 0; i < n; ++i) {
    out.x(i) = y[i];
    out.v(i) = y[n + i];
  }
  if (seeds) {
    out.sens.resize(2 * n, cols);
    for (int c = 0; c < cols; ++c)
      for (int i = 0; i < 2 * n; ++i) out.sens(i, c) = y[2 * n * (c + 1) + i];
  }
  return out;
}

void trace_geodesic(const MetricModel& model, const Vec& x0, const Vec& v0, double t_end,
                    double max_spacing,
                    const std::function<bool(double, const Vec&, const Vec&)>& observer) {
  if (!observer(0.0, x0, v0)) return;
  if (t_end <= 0.0) return;
  if (model.uses_closed_form()) {
    const int steps = std::max(1, static_cast<int>(std::ceil(t_end / max_spacing)));
    for (int i = 1; i <= steps; ++i) {
      const double t = t_end * i / steps;
      Vec x, v;
      model.closed_form_flow(x0, v0, t, x, v, nullptr, nullptr);
      if (!observer(t, x, v)) return;
    }
    return;
  }
  const int n = model.ambient_dim();
  State y(2 * n);
  for (int i = 0; i < n; ++i) {
    y[i] = x0(i);
    y[n + i] = v0(i);
  }
  long steps = 0;
  integrate(model, y, 0, t_end, max_spacing, steps, observer);
}

ShootingResult geodesic_shoot(const MetricModel& model, const Vec& q, const TangentVector& v,
                              double t) {
  if (t < 0) throw DomainError("shooting time must be non-negative");
  if (!(v.norm > 0.0)) throw DomainError("shooting velocity must be nonzero");
  const FlowResult f = geodesic_flow(model, q, v.vec, t);
  ShootingResult out;
  out.point = f.x;
  out.velocity = TangentVector::make(model, f.x, f.v);
  out.time = t;
  out.error_estimate = f.error_estimate;
  return out;
}

}  // namespace zoll
