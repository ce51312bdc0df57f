#include "zoll/loopspace.hpp"

#include "zoll/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace zoll {

void LoopParams::validate() const {
  if (!model) throw DomainError("loop parameters need a metric model");
  if (!(delta > 0.0) || !(delta < rho()))
    throw DomainError(fmt::format("delta = {} must lie in (0, rho = {})", delta, rho()));
  if (k < 3) throw DomainError(fmt::format("k = {} must be at least 3", k));
}

LoopConfig LoopConfig::build(const LoopParams& params, std::vector<Vec> points,
                             const LoopConfig* reuse, const std::optional<SegmentLog>& first) {
  params.validate();
  const int k = params.k;
  if (static_cast<int>(points.size()) != k)
    throw DomainError(fmt::format("configuration has {} points, expected k = {}", points.size(), k));
  const MetricModel& model = *params.model;
  for (auto& p : points) p /= p.norm();
  if (reuse && reuse->k() != k) reuse = nullptr;

  LoopConfig out;
  out.params_ = params;
  out.points_ = std::move(points);
  out.segments_.resize(static_cast<std::size_t>(k));
  const double rho = params.rho();
  for (int i = 0; i < k; ++i) {
    const Vec& a = out.point(i);
    const Vec& b = out.point((i + 1) % k);
    SegmentLog& seg = out.segments_[static_cast<std::size_t>(i)];
    if (i == 0 && first) {
      seg = *first;
      continue;
    }
    if (reuse && reuse->point(i) == a && reuse->point((i + 1) % k) == b) {
      seg = reuse->segments()[static_cast<std::size_t>(i)];
      continue;
    }
    const Vec* hint = reuse ? &reuse->segments()[static_cast<std::size_t>(i)].start : nullptr;
    LogResult l;
    try {
      l = log_map_detailed(model, a, b, hint);
    } catch (const ConvergenceFailure&) {
      if (!hint) throw;
      l = log_map_detailed(model, a, b);
    }
    seg.start = l.initial.vec;
    seg.end = l.end_velocity;
    seg.length = l.initial.norm;
  }

  const double d0 = out.segments_[0].length;
  if (std::abs(d0 - params.delta) > 1e-10 * std::max(1.0, params.delta))
    throw DomainError(fmt::format("d(q_0, q_1) = {} differs from delta = {}", d0, params.delta));
  double s = 0.0;
  for (int i = 1; i < k; ++i) {
    const double d = out.distance(i);
    s += d * d;
  }
  if (!(s < rho * rho))
    throw DomainError(fmt::format("sum of squared distances {} is not below rho^2 = {}", s,
                                  rho * rho));
  out.tail_sq_ = s;
  out.sigma_ = std::sqrt((k - 1) * s);

  const double delta = params.delta;
  const double t1 = delta / (delta + out.sigma_);
  out.tau_.resize(static_cast<std::size_t>(k + 1));
  out.tau_[0] = 0.0;
  out.tau_[1] = t1;
  for (int i = 2; i < k; ++i) out.tau_[static_cast<std::size_t>(i)] = t1 + (i - 1) * (1.0 - t1) / (k - 1);
  out.tau_[static_cast<std::size_t>(k)] = 1.0;
  return out;
}

double LoopConfig::energy() const {
  const double e = params_.delta + sigma_;
  return e * e;
}

double LoopConfig::energy_telescoped() const {
  double e = 0.0;
  for (int i = 0; i < k(); ++i) {
    const double d = distance(i);
    e += d * d / (tau_[static_cast<std::size_t>(i + 1)] - tau_[static_cast<std::size_t>(i)]);
  }
  return e;
}

Vec LoopConfig::velocity_plus(int i) const {
  const auto j = static_cast<std::size_t>(i);
  return segments_[j].start / (tau_[j + 1] - tau_[j]);
}

Vec LoopConfig::velocity_minus(int i) const {
  const auto j = static_cast<std::size_t>((i + k() - 1) % k());
  return segments_[j].end / (tau_[j + 1] - tau_[j]);
}

double sigma(const LoopConfig& config) { return config.sigma(); }
std::vector<double> breakpoints(const LoopConfig& config) { return config.breakpoints(); }
double energy(const LoopConfig& config) { return config.energy(); }

TangentVector ev_map(const LoopConfig& config) {
  return TangentVector::make(*config.params().model, config.point(0),
                             config.segments()[0].start);
}

double f_two_var(const MetricModel& model, const std::vector<Vec>& points, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError(fmt::format("tau = {} not in (0, 1)", tau));
  const int k = static_cast<int>(points.size());
  if (k < 2) throw DomainError("need at least two points");
  const double d0 = dist(model, points[0], points[1]);
  double s = 0.0;
  for (int i = 1; i < k; ++i) {
    const double d = dist(model, points[static_cast<std::size_t>(i)],
                          points[static_cast<std::size_t>((i + 1) % k)]);
    s += d * d;
  }
  return d0 * d0 / tau + (k - 1) * s / (1.0 - tau);
}

double f_two_var(const LoopConfig& config, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError(fmt::format("tau = {} not in (0, 1)", tau));
  const double d0 = config.distance(0);
  return d0 * d0 / tau + (config.k() - 1) * config.tail_sum_squares() / (1.0 - tau);
}

double k_threshold(double length, double delta, double rho) {
  const double r = (length - delta) / rho;
  return 1.0 + r * r;
}

double sup_energy(const LoopParams& params) {
  const double e = params.delta + std::sqrt(static_cast<double>(params.k - 1)) * params.rho();
  return e * e;
}

Vec BrokenGeodesic::position(double t) const {
  const auto& tau = config_.breakpoints();
  if (t <= 0.0 || t >= 1.0) return config_.point(0);
  const auto it = std::upper_bound(tau.begin(), tau.end(), t);
  const int i = static_cast<int>(it - tau.begin()) - 1;
  const auto j = static_cast<std::size_t>(i);
  const double s = (t - tau[j]) / (tau[j + 1] - tau[j]);
  return geodesic_flow(*config_.params().model, config_.point(i), config_.segments()[j].start, s).x;
}

std::vector<Vec> BrokenGeodesic::polyline(int per_segment) const {
  per_segment = std::max(per_segment, 1);
  const MetricModel& model = *config_.params().model;
  std::vector<Vec> out;
  for (int i = 0; i < config_.k(); ++i) {
    const Vec& start = config_.segments()[static_cast<std::size_t>(i)].start;
    out.push_back(config_.point(i));
    for (int j = 1; j < per_segment; ++j)
      out.push_back(geodesic_flow(model, config_.point(i), start,
                                  static_cast<double>(j) / per_segment).x);
  }
  out.push_back(config_.point(0));
  return out;
}

BrokenGeodesic reconstruct(const LoopConfig& config) { return BrokenGeodesic(config); }

LoopConfig sample_closed_geodesic(const LoopParams& params, const Vec& q, const Vec& u,
                                  double length) {
  params.validate();
  const MetricModel& model = *params.model;
  const double delta = params.delta;
  const int k = params.k;
  if (!(length > delta))
    throw DomainError(fmt::format("length {} must exceed delta {}", length, delta));
  const double kbar = k_threshold(length, delta, params.rho());
  if (!(k > kbar))
    throw DomainError(fmt::format("k = {} does not exceed the threshold {:.6g}", k, kbar));
  Vec unit = project_tangent(q, u);
  unit /= model.norm(q, unit);

  std::vector<Vec> points;
  points.push_back(q);
  FlowResult f = geodesic_flow(model, q, unit, delta);
  const SegmentLog first{unit * delta, f.v * delta, delta};
  points.push_back(f.x);
  const double step = (length - delta) / (k - 1);
  for (int i = 2; i < k; ++i) {
    f = geodesic_flow(model, f.x, f.v, step);
    points.push_back(f.x);
  }
  return LoopConfig::build(params, std::move(points), nullptr, first);
}

LoopConfig minimum_config(const LoopParams& params, const Vec& q, const Vec& v0) {
  params.validate();
  const MetricModel& model = *params.model;
  Vec v = project_tangent(q, v0);
  v *= params.delta / model.norm(q, v);
  const int k = params.k;
  std::vector<Vec> points;
  points.push_back(q);
  const FlowResult f = geodesic_flow(model, q, v, 1.0);
  points.push_back(f.x);
  for (int i = 2; i < k; ++i)
    points.push_back(geodesic_flow(model, q, v, 1.0 - static_cast<double>(i - 1) / (k - 1)).x);
  return LoopConfig::build(params, std::move(points), nullptr, SegmentLog{v, f.v, params.delta});
}

LoopConfig random_config(const LoopParams& params, std::mt19937_64& rng) {
  params.validate();
  const MetricModel& model = *params.model;
  const int k = params.k;
  const double rho = params.rho();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const Vec q0 = sample_point(model.dim(), rng);
    const Vec u = sample_unit_direction(model, q0, rng);
    const FlowResult f = geodesic_flow(model, q0, u * params.delta, 1.0);
    const double radius =
        (0.05 + 0.9 * unit(rng)) * rho / (2.0 * std::sqrt(static_cast<double>(k - 1)));
    std::vector<Vec> points{q0, f.x};
    for (int i = 2; i < k; ++i) {
      const Vec w = sample_unit_direction(model, q0, rng) * (radius * std::sqrt(unit(rng)));
      points.push_back(geodesic_flow(model, q0, w, 1.0).x);
    }
    try {
      return LoopConfig::build(params, std::move(points), nullptr,
                               SegmentLog{u * params.delta, f.v, params.delta});
    } catch (const DomainError&) {
      // q_1 fell too far from the ball; draw again
    }
  }
  throw DomainError("could not sample a valid configuration");
}

PrimeChart PrimeChart::from_config(const LoopConfig& config) {
  PrimeChart c;
  c.params = config.params();
  c.q0 = config.point(0);
  const Vec& l0 = config.segments()[0].start;
  c.u = l0 / c.params.model->norm(c.q0, l0);
  c.free.assign(config.points().begin() + 2, config.points().end());
  return c;
}

LoopConfig PrimeChart::config(const LoopConfig* reuse) const {
  const double delta = params.delta;
  const FlowResult f = geodesic_flow(*params.model, q0, u * delta, 1.0);
  std::vector<Vec> points;
  points.reserve(free.size() + 2);
  points.push_back(q0);
  points.push_back(f.x);
  points.insert(points.end(), free.begin(), free.end());
  return LoopConfig::build(params, std::move(points), reuse, SegmentLog{u * delta, f.v, delta});
}

int PrimeChart::dimension(bool pinned) const {
  const int n = params.dim();
  return (pinned ? n - 1 : 2 * n - 1) + (params.k - 2) * n;
}

ChartCoordinates::ChartCoordinates(PrimeChart base, bool pinned)
    : base_(std::move(base)), pinned_(pinned), n_(base_.params.dim()) {
  dim_ = base_.dimension(pinned);
  const MetricModel& model = *base_.params.model;
  frames_.resize(static_cast<std::size_t>(base_.params.k));
  frames_[0] = tangent_frame(model, base_.q0);
  cone_ = complement_frame(model, base_.q0, base_.u);
  for (std::size_t i = 0; i < base_.free.size(); ++i)
    frames_[i + 2] = tangent_frame(model, base_.free[i]);
}

namespace {

struct Retracted {
  Vec x;
  Mat d;  // dx / dxi
};

Retracted retract(const Vec& q, const Mat& frame, const Eigen::VectorXd& xi, int offset) {
  const int n = static_cast<int>(frame.cols());
  const Vec step = frame * xi.segment(offset, n);
  if (step.isZero(0.0)) return {q, frame};
  const Vec w = q + step;
  const double wn = w.norm();
  const Vec x = w / wn;
  const Mat proj = Mat::Identity(q.size(), q.size()) - x * x.transpose();
  return {x, proj * frame / wn};
}

}  // namespace

PrimeChart ChartCoordinates::point(const Eigen::VectorXd& xi) const {
  if (xi.size() != dim_)
    throw DomainError(fmt::format("chart coordinates have size {}, expected {}", xi.size(), dim_));
  const MetricModel& model = *base_.params.model;
  PrimeChart p = base_;
  int off = 0;
  if (!pinned_) {
    p.q0 = retract(base_.q0, frames_[0], xi, 0).x;
    off = n_;
  }
  const Eigen::VectorXd eta = xi.segment(off, n_ - 1);
  off += n_ - 1;
  if (!eta.isZero(0.0) || p.q0 != base_.q0) {
    const Vec a = base_.u + cone_ * eta;
    const Vec b = a - a.dot(p.q0) * p.q0;
    p.u = b / model.norm(p.q0, b);
  }
  for (std::size_t i = 0; i < p.free.size(); ++i) {
    p.free[i] = retract(base_.free[i], frames_[i + 2], xi, off).x;
    off += n_;
  }
  return p;
}

ChartCoordinates::Evaluation ChartCoordinates::evaluate(const Eigen::VectorXd& xi,
                                                        const LoopConfig* reuse) const {
  const MetricModel& model = *base_.params.model;
  const double delta = base_.params.delta;
  const int big_n = model.ambient_dim();
  const int k = base_.params.k;

  // q_0 and its derivative
  Vec x0 = base_.q0;
  Mat dx0 = Mat::Zero(big_n, 0);
  int off = 0;
  if (!pinned_) {
    const Retracted r = retract(base_.q0, frames_[0], xi, 0);
    x0 = r.x;
    dx0 = r.d;
    off = n_;
  }
  // u and its derivative with respect to (xi_0, eta)
  const Eigen::VectorXd eta = xi.segment(off, n_ - 1);
  const int eta_off = off;
  off += n_ - 1;
  const Vec a = base_.u + cone_ * eta;
  const Vec b = a - a.dot(x0) * x0;
  const Mat g0 = model.metric(x0);
  const double s2 = b.dot(g0 * b);
  const double s = std::sqrt(s2);
  const Vec u = b / s;

  const int m0 = static_cast<int>(dx0.cols());
  const int cols = m0 + n_ - 1;
  SensMat seeds = SensMat::Zero(2 * big_n, cols);
  for (int j = 0; j < cols; ++j) {
    Vec dx = Vec::Zero(big_n), da = Vec::Zero(big_n);
    if (j < m0) {
      dx = dx0.col(j);
    } else {
      da = cone_.col(j - m0);
    }
    const Vec db = da - da.dot(x0) * x0 - a.dot(dx) * x0 - a.dot(x0) * dx;
    double ds2 = 2.0 * b.dot(g0 * db);
    if (j < m0 && !model.constant_metric())
      for (int l = 0; l < big_n; ++l)
        if (dx(l) != 0.0) ds2 += dx(l) * b.dot(model.metric_derivative(x0, l) * b);
    const Vec du = db / s - b * (ds2 / (2.0 * s2 * s));
    seeds.col(j).head(big_n) = dx;
    seeds.col(j).tail(big_n) = delta * du;
  }
  const FlowResult f = geodesic_flow(model, x0, u * delta, 1.0, &seeds);

  std::vector<Vec> points;
  points.reserve(static_cast<std::size_t>(k));
  points.push_back(x0);
  points.push_back(f.x);
  std::vector<Mat> dfree;
  for (std::size_t i = 0; i < base_.free.size(); ++i) {
    const Retracted r = retract(base_.free[i], frames_[i + 2], xi, off + static_cast<int>(i) * n_);
    points.push_back(r.x);
    dfree.push_back(r.d);
  }
  Evaluation out{LoopConfig::build(base_.params, std::move(points), reuse,
                                   SegmentLog{u * delta, f.v, delta}),
                 Eigen::VectorXd::Zero(dim_)};
  const LoopConfig& c = out.config;

  auto covector = [&](int i) -> Vec {
    return 2.0 * (model.metric(c.point(i)) * (c.velocity_minus(i) - c.velocity_plus(i)));
  };
  const Vec c0 = covector(0);
  const Vec c1 = covector(1);
  const Mat dq1 = f.sens.topRows(big_n);
  for (int j = 0; j < cols; ++j) {
    double gj = c1.dot(dq1.col(j));
    if (j < m0) gj += c0.dot(dx0.col(j));
    out.gradient(j < m0 ? j : eta_off + (j - m0)) = gj;
  }
  for (int i = 2; i < k; ++i) {
    const Vec ci = covector(i);
    out.gradient.segment(off + (i - 2) * n_, n_) =
        (dfree[static_cast<std::size_t>(i - 2)].transpose() * ci).cast<double>();
  }
  return out;
}

double ChartCoordinates::energy(const Eigen::VectorXd& xi, const LoopConfig* reuse) const {
  return point(xi).config(reuse).energy();
}

Eigen::VectorXd gradient(const PrimeChart& chart, bool pinned) {
  ChartCoordinates coords(chart, pinned);
  return coords.evaluate(Eigen::VectorXd::Zero(coords.dimension())).gradient;
}

void write_polyline(std::ostream& os, const std::vector<Vec>& points) {
  for (const Vec& p : points) {
    for (int i = 0; i < p.size(); ++i) os << (i ? " " : "") << fmt::format("{:.17g}", p(i));
    os << '\n';
  }
}

}  // namespace zoll
