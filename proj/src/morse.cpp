#include "zoll/morse.hpp"

#include "zoll/critical.hpp"
#include "zoll/errors.hpp"
#include "zoll/parallel.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace zoll {

HessianResult finite_difference_hessian(const GradientMap& gradient, int dimension, double step,
                                        int workers) {
  Eigen::MatrixXd h(dimension, dimension);
  parallel_for(dimension, workers, [&](int j) {
    Eigen::VectorXd xp = Eigen::VectorXd::Zero(dimension);
    Eigen::VectorXd xm = xp;
    xp(j) = step;
    xm(j) = -step;
    h.col(j) = (gradient(xp) - gradient(xm)) / (2.0 * step);
  });
  HessianResult out;
  const double nrm = h.norm();
  out.asymmetry = nrm > 0.0 ? (h - h.transpose()).norm() / nrm : 0.0;
  out.matrix = 0.5 * (h + h.transpose());
  return out;
}

HessianResult hessian(const ChartCoordinates& coords, const LoopConfig* reuse, double step,
                      int workers) {
  return finite_difference_hessian(
      [&](const Eigen::VectorXd& xi) { return coords.evaluate(xi, reuse).gradient; },
      coords.dimension(), step, workers);
}

HessianResult hessian(const CriticalPoint& cp, double step, int workers) {
  const ChartCoordinates coords(PrimeChart::from_config(cp.config));
  return hessian(coords, &cp.config, step, workers);
}

SpectralReport index_nullity(const Eigen::MatrixXd& h, double zero_tol) {
  if (h.rows() != h.cols()) throw DomainError("Hessian must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  SpectralReport r;
  r.dimension = static_cast<int>(h.rows());
  r.zero_tol = zero_tol;
  const Eigen::VectorXd ev = es.eigenvalues();
  r.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  r.scale = ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0;
  const double thr = zero_tol * r.scale;
  double gap = std::numeric_limits<double>::infinity();
  for (double l : r.eigenvalues) {
    if (l < -thr) {
      ++r.index;
    } else if (l > thr) {
      ++r.positive;
    } else {
      ++r.kernel;
      continue;
    }
    gap = std::min(gap, std::abs(l));
  }
  r.gap = std::isfinite(gap) ? gap : 0.0;
  r.gap_warning = std::isfinite(gap) && gap < 10.0 * thr;
  return r;
}

int iterate_index_expected(int i_prime, int m, int n) {
  if (m < 1 || n < 2) throw DomainError("iterate formula needs m >= 1 and n >= 2");
  return m * i_prime + (m - 1) * (n - 1);
}

int iterate_nullity_expected(int n) { return 2 * n - 2; }

UniformDiscretization::UniformDiscretization(ModelPtr model, std::vector<Vec> samples)
    : model_(std::move(model)), samples_(std::move(samples)), n_(model_->dim()) {
  if (samples_.size() < 3) throw DomainError("uniform discretization needs at least 3 samples");
  for (const Vec& p : samples_) frames_.push_back(tangent_frame(*model_, p));
  base_logs_ = logs(samples_);
}

std::vector<Vec> UniformDiscretization::points(const Eigen::VectorXd& xi,
                                               std::vector<Mat>* jac) const {
  std::vector<Vec> pts;
  if (jac) jac->clear();
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Vec step = frames_[i] * xi.segment(static_cast<Eigen::Index>(i) * n_, n_);
    const Vec w = samples_[i] + step;
    const double wn = w.norm();
    const Vec x = w / wn;
    pts.push_back(x);
    if (jac)
      jac->push_back((Mat::Identity(x.size(), x.size()) - x * x.transpose()) * frames_[i] / wn);
  }
  return pts;
}

std::vector<SegmentLog> UniformDiscretization::logs(const std::vector<Vec>& pts) const {
  const std::size_t k = pts.size();
  std::vector<SegmentLog> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    const Vec* hint = base_logs_.empty() ? nullptr : &base_logs_[i].start;
    const LogResult l = log_map_detailed(*model_, pts[i], pts[(i + 1) % k], hint);
    out[i] = {l.initial.vec, l.end_velocity, l.initial.norm};
  }
  return out;
}

double UniformDiscretization::energy(const Eigen::VectorXd& xi) const {
  const auto segs = logs(points(xi, nullptr));
  double s = 0.0;
  for (const auto& seg : segs) s += seg.length * seg.length;
  return static_cast<double>(segs.size()) * s;
}

Eigen::VectorXd UniformDiscretization::gradient(const Eigen::VectorXd& xi) const {
  std::vector<Mat> jac;
  const auto pts = points(xi, &jac);
  const auto segs = logs(pts);
  const std::size_t k = pts.size();
  const double scale = 2.0 * static_cast<double>(k);
  Eigen::VectorXd g(dimension());
  for (std::size_t i = 0; i < k; ++i) {
    const Vec c = scale * (model_->metric(pts[i]) * (segs[(i + k - 1) % k].end - segs[i].start));
    g.segment(static_cast<Eigen::Index>(i) * n_, n_) = jac[i].transpose() * c;
  }
  return g;
}

SpectralReport uniform_discretization_index(const ModelPtr& model, const Vec& q, const Vec& u,
                                            double length, int samples, double zero_tol,
                                            int workers) {
  if (samples < 3) throw DomainError("need at least 3 samples");
  const double step = length / samples;
  if (!(step < model->injectivity_radius()))
    throw DomainError(fmt::format("sample spacing {} is not below rho", step));
  Vec unit = project_tangent(q, u);
  unit /= model->norm(q, unit);
  std::vector<Vec> pts{q};
  Vec x = q, v = unit;
  for (int i = 1; i < samples; ++i) {
    const FlowResult f = geodesic_flow(*model, x, v, step);
    x = f.x;
    v = f.v;
    pts.push_back(x);
  }
  const UniformDiscretization disc(model, std::move(pts));
  const HessianResult h = finite_difference_hessian(
      [&](const Eigen::VectorXd& xi) { return disc.gradient(xi); }, disc.dimension(), 1e-4,
      workers);
  return index_nullity(h.matrix, zero_tol);
}

SpectralReport spectrum(const CriticalPoint& cp, double zero_tol, int workers) {
  return index_nullity(hessian(cp, 1e-4, workers).matrix, zero_tol);
}

}  // namespace zoll
