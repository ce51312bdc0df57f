#pragma once

#include "zoll/loopspace.hpp"

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace zoll {

struct CriticalPoint;

struct SpectralReport {
  std::vector<double> eigenvalues;  // ascending
  int dimension = 0;
  int index = 0;     // eigenvalues below -zero_tol * scale
  int kernel = 0;    // eigenvalues within +-zero_tol * scale
  int positive = 0;
  double zero_tol = 1e-4;  // relative
  double scale = 0.0;      // largest |eigenvalue|
  /// Smallest |eigenvalue| outside the zero cluster.
  double gap = 0.0;
  /// Set when gap < 10 * zero_tol * scale: the counts may be fragile.
  bool gap_warning = false;
};

struct HessianResult {
  Eigen::MatrixXd matrix;  // symmetrized
  /// |H - H^T| / |H| before symmetrization (Frobenius norms).
  double asymmetry = 0.0;
};

using GradientMap = std::function<Eigen::VectorXd(const Eigen::VectorXd& xi)>;

/// Central differences of the gradient, one column per coordinate.
HessianResult finite_difference_hessian(const GradientMap& gradient, int dimension,
                                        double step = 1e-4, int workers = 1);

/// Hessian of the energy in chart coordinates centred at the chart's base.
HessianResult hessian(const ChartCoordinates& coords, const LoopConfig* reuse = nullptr,
                      double step = 1e-4, int workers = 1);
/// Hessian in the full (unpinned) chart at a critical point.
HessianResult hessian(const CriticalPoint& cp, double step = 1e-4, int workers = 1);

SpectralReport index_nullity(const Eigen::MatrixXd& h, double zero_tol = 1e-4);

/// m * i_prime + (m - 1)(n - 1)
int iterate_index_expected(int i_prime, int m, int n);
/// 2n - 2
int iterate_nullity_expected(int n);

/// Classical broken-geodesic energy F(p) = sum d(p_i, p_{i+1})^2 / (theta_{i+1} - theta_i)
/// on K-tuples with fixed times theta_i = i / K, in g-orthonormal frames at
/// the samples p_i of a closed geodesic.
class UniformDiscretization {
public:
  UniformDiscretization(ModelPtr model, std::vector<Vec> samples);

  int dimension() const { return static_cast<int>(samples_.size()) * n_; }
  const std::vector<Vec>& samples() const { return samples_; }
  /// Points at coordinates xi, and the energy and gradient there.
  double energy(const Eigen::VectorXd& xi) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& xi) const;

private:
  std::vector<Vec> points(const Eigen::VectorXd& xi, std::vector<Mat>* jac) const;
  std::vector<SegmentLog> logs(const std::vector<Vec>& pts) const;

  ModelPtr model_;
  std::vector<Vec> samples_;
  std::vector<Mat> frames_;
  std::vector<SegmentLog> base_logs_;
  int n_;
};

/// Index and kernel of F at the K-point uniform sampling of the closed
/// geodesic t -> exp_q(t u), |u|_g = 1, of length `length`.
SpectralReport uniform_discretization_index(const ModelPtr& model, const Vec& q, const Vec& u,
                                            double length, int samples, double zero_tol = 1e-4,
                                            int workers = 1);

/// Spectral report of the energy Hessian at a critical point.
SpectralReport spectrum(const CriticalPoint& cp, double zero_tol = 1e-4, int workers = 1);

}  // namespace zoll
