#include "zoll/errors.hpp"
#include "zoll/manifold.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace zoll {

MetricModel::MetricModel(int dim, double rho, IntegratorSettings settings)
    : dim_(dim), rho_(rho), settings_(settings) {
  if (dim < 2) throw DomainError(fmt::format("sphere dimension must be >= 2, got {}", dim));
  if (dim + 1 > kMaxAmbient)
    throw DomainError(fmt::format("sphere dimension {} exceeds supported maximum {}", dim,
                                  kMaxAmbient - 1));
  if (!(rho > 0.0)) throw DomainError("injectivity radius must be positive");
}

ModelSpec MetricModel::spec() const {
  return ModelSpec{name(), dim_, params(), rho_override_};
}

Mat MetricModel::metric_derivative(const Vec& x, int) const {
  return Mat::Zero(x.size(), x.size());
}

void MetricModel::closed_form_flow(const Vec&, const Vec&, double, Vec&, Vec&, const SensMat*,
                                   SensMat*) const {
  throw Error(fmt::format("model '{}' has no closed-form geodesics", name()));
}

bool MetricModel::closed_form_log(const Vec&, const Vec&, Vec&, Vec&) const { return false; }

double MetricModel::inner(const Vec& x, const Vec& a, const Vec& b) const {
  return a.dot(metric(x) * b);
}

double MetricModel::norm(const Vec& x, const Vec& a) const {
  return std::sqrt(std::max(0.0, inner(x, a, a)));
}

// ---------------------------------------------------------------------------

RoundSphere::RoundSphere(int n, IntegratorSettings settings)
    : MetricModel(n, std::numbers::pi, settings) {}

Mat RoundSphere::metric(const Vec& x) const { return Mat::Identity(x.size(), x.size()); }

void RoundSphere::closed_form_flow(const Vec& x0, const Vec& v0, double t, Vec& x, Vec& v,
                                   const SensMat* seeds, SensMat* sens) const {
  const double s = v0.norm();
  const double st = s * t;
  const double c = std::cos(st);
  const double sn = std::sin(st);
  // sin(st)/s and (t cos(st) - sin(st)/s)/s^2, with their small-s limits
  double s1, c2;
  if (st < 1e-4) {
    const double st2 = st * st;
    s1 = t * (1.0 - st2 / 6.0 + st2 * st2 / 120.0);
    c2 = -t * t * t * (1.0 / 3.0 - st2 / 30.0);
  } else {
    s1 = sn / s;
    c2 = (t * c - s1) / (s * s);
  }
  x = x0 * c + v0 * s1;
  v = -x0 * (s * sn) + v0 * c;
  if (seeds == nullptr || sens == nullptr) return;

  const int n = static_cast<int>(x0.size());
  sens->resize(2 * n, seeds->cols());
  for (int j = 0; j < seeds->cols(); ++j) {
    const Vec dx = seeds->col(j).head(n);
    const Vec dv = seeds->col(j).tail(n);
    const double vd = v0.dot(dv);  // s * ds
    sens->col(j).head(n) = dx * c - x0 * (t * vd * s1) + dv * s1 + v0 * (vd * c2);
    sens->col(j).tail(n) =
        -dx * (s * sn) - x0 * (vd * (s1 + t * c)) + dv * c - v0 * (t * vd * s1);
  }
}

bool RoundSphere::closed_form_log(const Vec& q, const Vec& p, Vec& v, Vec& end_velocity) const {
  const double cq = q.dot(p);
  const Vec w = p - cq * q;
  const double wn = w.norm();
  if (wn < 1e-300) {
    if (cq < 0) throw DomainError("antipodal points have no unique connecting geodesic");
    v = Vec::Zero(q.size());
    end_velocity = v;
    return true;
  }
  const double theta = std::atan2(wn, cq);
  v = w * (theta / wn);
  end_velocity = -q * (theta * std::sin(theta)) + v * std::cos(theta);
  return true;
}

// ---------------------------------------------------------------------------

TriaxialEllipsoid::TriaxialEllipsoid(std::vector<double> axes, std::optional<double> rho,
                                     IntegratorSettings settings)
    : MetricModel(static_cast<int>(axes.size()) - 1,
                  rho.value_or(axes.empty() ? 0.0
                                            : *std::min_element(axes.begin(), axes.end()) *
                                                  std::numbers::pi / 2.0),
                  settings),
      axes_(std::move(axes)) {
  rho_override_ = rho;
  for (double a : axes_)
    if (!(a > 0.0)) throw DomainError("ellipsoid semi-axes must be positive");
  const int n = static_cast<int>(axes_.size());
  form_ = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) form_(i, i) = axes_[i] * axes_[i];
}

Mat TriaxialEllipsoid::metric(const Vec&) const { return form_; }

// ---------------------------------------------------------------------------

namespace {

double zoll_curvature(double a, double z) {
  const double h = a * z * (1.0 - z * z);
  const double dh = a * (1.0 - 3.0 * z * z);
  const double f = 1.0 + h;
  return 1.0 / (f * f) - z * dh / (f * f * f);
}

// Below the conjugate radius pi / sqrt(K_max) and below half the common period 2 pi.
double zoll_default_rho(double a) {
  double kmax = 0.0;
  constexpr int kGrid = 4001;
  for (int i = 0; i < kGrid; ++i) kmax = std::max(kmax, zoll_curvature(a, -1.0 + 2.0 * i / (kGrid - 1)));
  return kmax > 1.0 ? std::numbers::pi / std::sqrt(kmax) : std::numbers::pi;
}

}  // namespace

ZollRevolution::ZollRevolution(double amplitude, std::optional<double> rho,
                               IntegratorSettings settings)
    : MetricModel(2, rho.value_or(zoll_default_rho(amplitude)), settings), amplitude_(amplitude) {
  rho_override_ = rho;
  // |h| < 1 keeps the profile a metric; the maximum of |z(1-z^2)| is 2/(3 sqrt 3).
  if (!(std::abs(amplitude) * 2.0 / (3.0 * std::sqrt(3.0)) < 1.0))
    throw DomainError(fmt::format("Zoll amplitude {} too large", amplitude));
  for (int i = 0; i <= 200; ++i) {
    const double z = -1.0 + i / 100.0;
    if (!(1.0 + phi(z) > 0.0))
      throw DomainError(fmt::format("Zoll amplitude {} gives a degenerate metric", amplitude));
  }
}

double ZollRevolution::phi(double z) const {
  const double a = amplitude_;
  return 2.0 * a * z + a * a * z * z * (1.0 - z * z);
}

double ZollRevolution::dphi(double z) const {
  const double a = amplitude_;
  return 2.0 * a + a * a * (2.0 * z - 4.0 * z * z * z);
}

double ZollRevolution::gaussian_curvature(double z) const {
  return zoll_curvature(amplitude_, z);
}

Mat ZollRevolution::metric(const Vec& x) const {
  Mat g = Mat::Identity(3, 3);
  g(2, 2) += phi(x(2));
  return g;
}

Mat ZollRevolution::metric_derivative(const Vec& x, int k) const {
  Mat d = Mat::Zero(3, 3);
  if (k == 2) d(2, 2) = dphi(x(2));
  return d;
}

// ---------------------------------------------------------------------------

ModelPtr make_model(const ModelSpec& spec, IntegratorSettings settings) {
  if (spec.model == "round") {
    if (!spec.params.empty()) throw ConfigError("metric.params: round model takes no parameters");
    if (spec.injectivity_radius && std::abs(*spec.injectivity_radius - std::numbers::pi) > 1e-12)
      throw ConfigError("metric.injectivity_radius: round sphere has rho = pi");
    return std::make_shared<RoundSphere>(spec.dim, settings);
  }
  if (spec.model == "ellipsoid") {
    if (static_cast<int>(spec.params.size()) != spec.dim + 1)
      throw ConfigError(fmt::format("metric.params: ellipsoid in dimension {} needs {} semi-axes",
                                    spec.dim, spec.dim + 1));
    return std::make_shared<TriaxialEllipsoid>(spec.params, spec.injectivity_radius, settings);
  }
  if (spec.model == "revolution_zoll") {
    if (spec.dim != 2) throw ConfigError("metric.dim: revolution_zoll is only defined on S^2");
    if (spec.params.size() != 1)
      throw ConfigError("metric.params: revolution_zoll takes one amplitude");
    return std::make_shared<ZollRevolution>(spec.params[0], spec.injectivity_radius, settings);
  }
  throw ConfigError(fmt::format("metric.model: unknown model '{}'", spec.model));
}

}  // namespace zoll
