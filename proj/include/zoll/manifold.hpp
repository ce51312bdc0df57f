#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace zoll {

/// Largest supported embedding dimension (n + 1). Small fixed capacity keeps
/// every point/vector/metric on the stack inside the integrator hot loop.
inline constexpr int kMaxAmbient = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxAmbient, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxAmbient, kMaxAmbient>;
/// Phase-space sensitivities: 2(n+1) rows, one column per seeded perturbation.
using SensMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2 * kMaxAmbient, 2 * kMaxAmbient>;

struct IntegratorSettings {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double initial_step = 0.05;
  long max_steps = 2'000'000;
  /// Ignore closed-form geodesics even when the model provides them.
  bool force_numeric = false;

  bool operator==(const IntegratorSettings&) const = default;
};

/// Serializable description of a built-in metric.
struct ModelSpec {
  std::string model;  // "round" | "ellipsoid" | "revolution_zoll"
  int dim = 2;
  std::vector<double> params;
  std::optional<double> injectivity_radius;  // override of the built-in value

  bool operator==(const ModelSpec&) const = default;
};

/// Riemannian metric on the unit sphere S^n, written as the restriction of a
/// smooth ambient bilinear form G(x) on R^{n+1} to the tangent spaces of S^n.
class MetricModel {
public:
  virtual ~MetricModel() = default;

  int dim() const { return dim_; }
  int ambient_dim() const { return dim_ + 1; }
  /// Declared injectivity radius (analytic per model, or overridden).
  double injectivity_radius() const { return rho_; }
  const IntegratorSettings& integrator() const { return settings_; }

  virtual std::string name() const = 0;
  virtual std::vector<double> params() const = 0;
  ModelSpec spec() const;

  virtual Mat metric(const Vec& x) const = 0;
  /// Partial derivative dG/dx_k. Zero unless overridden.
  virtual Mat metric_derivative(const Vec& x, int k) const;
  virtual bool constant_metric() const { return false; }

  virtual bool has_closed_form_geodesics() const { return false; }
  /// Exact flow for models that know their geodesics. `sens` receives the
  /// derivative of (x(t), v(t)) along each column of `seeds`.
  virtual void closed_form_flow(const Vec& x0, const Vec& v0, double t, Vec& x, Vec& v,
                                const SensMat* seeds, SensMat* sens) const;
  /// Exact inverse exponential map; returns false if not available.
  virtual bool closed_form_log(const Vec& q, const Vec& p, Vec& v, Vec& end_velocity) const;

  bool uses_closed_form() const {
    return has_closed_form_geodesics() && !settings_.force_numeric;
  }

  double inner(const Vec& x, const Vec& a, const Vec& b) const;
  double norm(const Vec& x, const Vec& a) const;

protected:
  MetricModel(int dim, double rho, IntegratorSettings settings);

  std::optional<double> rho_override_;

private:
  int dim_;
  double rho_;
  IntegratorSettings settings_;
};

using ModelPtr = std::shared_ptr<const MetricModel>;

/// Round unit sphere S^n; geodesics are great circles, rho = pi.
class RoundSphere final : public MetricModel {
public:
  explicit RoundSphere(int n, IntegratorSettings settings = {});

  std::string name() const override { return "round"; }
  std::vector<double> params() const override { return {}; }
  Mat metric(const Vec& x) const override;
  bool constant_metric() const override { return true; }
  bool has_closed_form_geodesics() const override { return true; }
  void closed_form_flow(const Vec& x0, const Vec& v0, double t, Vec& x, Vec& v,
                        const SensMat* seeds, SensMat* sens) const override;
  bool closed_form_log(const Vec& q, const Vec& p, Vec& v, Vec& end_velocity) const override;
};

/// Ellipsoid with semi-axes a_0..a_n, pulled back to S^n along x -> diag(a) x.
/// The ambient form is the constant matrix diag(a_i^2).
class TriaxialEllipsoid final : public MetricModel {
public:
  explicit TriaxialEllipsoid(std::vector<double> axes, std::optional<double> rho = std::nullopt,
                             IntegratorSettings settings = {});

  std::string name() const override { return "ellipsoid"; }
  std::vector<double> params() const override { return axes_; }
  Mat metric(const Vec& x) const override;
  bool constant_metric() const override { return true; }

  const std::vector<double>& axes() const { return axes_; }

private:
  std::vector<double> axes_;
  Mat form_;
};

/// Zoll surface of revolution on S^2:
///   (1 + h(cos r))^2 dr^2 + sin^2 r dtheta^2,   h(z) = a z (1 - z^2),
/// with r the polar angle from (0,0,1). Every unit-speed geodesic closes at 2 pi.
/// In embedding coordinates G(x) = I + phi(x_2) e_2 e_2^T with
/// phi(z) = (2h + h^2) / (1 - z^2) = 2 a z + a^2 z^2 (1 - z^2).
class ZollRevolution final : public MetricModel {
public:
  explicit ZollRevolution(double amplitude, std::optional<double> rho = std::nullopt,
                          IntegratorSettings settings = {});

  std::string name() const override { return "revolution_zoll"; }
  std::vector<double> params() const override { return {amplitude_}; }
  Mat metric(const Vec& x) const override;
  Mat metric_derivative(const Vec& x, int k) const override;

  double amplitude() const { return amplitude_; }
  /// Gaussian curvature as a function of z = cos r.
  double gaussian_curvature(double z) const;

private:
  double phi(double z) const;
  double dphi(double z) const;

  double amplitude_;
};

ModelPtr make_model(const ModelSpec& spec, IntegratorSettings settings = {});

/// Tangent vector with its base point and cached g-norm.
struct TangentVector {
  Vec base;
  Vec vec;
  double norm = 0.0;

  /// Projects `vec` onto T_base S^n and caches its g-norm.
  static TangentVector make(const MetricModel& model, const Vec& base, const Vec& vec);
};

struct ShootingResult {
  Vec point;
  TangentVector velocity;
  double time = 0.0;
  /// Accumulated speed and constraint drift removed by the per-step projection.
  double error_estimate = 0.0;
};

/// Rank-3 array Gamma^k_ij, k the upper index.
class Christoffel {
public:
  explicit Christoffel(int size) : size_(size), data_(size * size * size, 0.0) {}

  int size() const { return size_; }
  double& operator()(int k, int i, int j) { return data_[(k * size_ + i) * size_ + j]; }
  double operator()(int k, int i, int j) const { return data_[(k * size_ + i) * size_ + j]; }
  /// Gamma(a, b)^k = Gamma^k_ij a^i b^j
  Vec contract(const Vec& a, const Vec& b) const;

private:
  int size_;
  std::vector<double> data_;
};

/// Levi-Civita symbols of a metric given in some chart by its coefficients
/// and their first partial derivatives.
Christoffel levi_civita(const Mat& metric, std::span<const Mat> derivatives);

/// Connection coefficients of the induced metric in embedding coordinates:
/// the geodesic equation of S^n reads  x'' = -Gamma_x(x', x')  for tangent x'.
Christoffel christoffel(const MetricModel& model, const Vec& x);

/// Right-hand side of the geodesic equation at a tangent vector.
Vec geodesic_acceleration(const MetricModel& model, const Vec& x, const Vec& v);
/// Jacobians of the acceleration with respect to x and v.
void acceleration_jacobian(const MetricModel& model, const Vec& x, const Vec& v, Mat& dx, Mat& dv);

struct FlowResult {
  Vec x;
  Vec v;
  double error_estimate = 0.0;
  long steps = 0;
  SensMat sens;  // 2N x m
};

/// Geodesic flow for time t from (x0, v0), optionally propagating the
/// variational equation along the columns of `seeds` (2N x m).
FlowResult geodesic_flow(const MetricModel& model, const Vec& x0, const Vec& v0, double t,
                         const SensMat* seeds = nullptr);

/// Calls observer(t, x, v) at t = 0, after each accepted step and at t_end,
/// with consecutive reports never further than max_spacing apart. The
/// observer returns false to stop early.
void trace_geodesic(const MetricModel& model, const Vec& x0, const Vec& v0, double t_end,
                    double max_spacing,
                    const std::function<bool(double, const Vec&, const Vec&)>& observer);

ShootingResult geodesic_shoot(const MetricModel& model, const Vec& q, const TangentVector& v,
                              double t);

/// exp_q(v). In checked mode requires |v|_g < rho.
Vec exp_map(const MetricModel& model, const Vec& q, const Vec& v, bool checked = true);

struct LogResult {
  TangentVector initial;  // exp_q^{-1}(p)
  Vec end_velocity;       // velocity at p of t -> exp_q(t v), t in [0,1]
  int iterations = 0;
};

/// Newton shooting for exp_q^{-1}(p). `guess` seeds the iteration.
LogResult log_map_detailed(const MetricModel& model, const Vec& q, const Vec& p,
                           const Vec* guess = nullptr);
TangentVector log_map(const MetricModel& model, const Vec& q, const Vec& p);
double dist(const MetricModel& model, const Vec& q, const Vec& p);

/// Smallest t in (0, t_max] with |(gamma(t), gamma'(t)) - (q, v)| < tol.
std::optional<double> detect_closure(const MetricModel& model, const Vec& q, const Vec& v,
                                     double t_max, double tol);

// Geometry helpers.
Vec normalize_point(const Vec& x);
Vec project_tangent(const Vec& x, const Vec& v);
/// g-orthonormal basis of T_x S^n as columns (N x n).
Mat tangent_frame(const MetricModel& model, const Vec& x);
/// g-orthonormal basis of the g-orthogonal complement of u in T_x S^n.
Mat complement_frame(const MetricModel& model, const Vec& x, const Vec& u);

Vec sample_point(int n, std::mt19937_64& rng);
/// Unit (g-norm) tangent vector at x, uniform over the g-unit sphere.
Vec sample_unit_direction(const MetricModel& model, const Vec& x, std::mt19937_64& rng);

/// Dense polyline of the unit-time geodesic t -> exp_q(t v), t in [0, t_end].
std::vector<Vec> geodesic_polyline(const MetricModel& model, const Vec& q, const Vec& v,
                                   double t_end, int samples);

}  // namespace zoll
