#pragma once

#include "zoll/manifold.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <vector>

namespace zoll {

/// Parameters of the configuration space: fixed first-segment length delta
/// and number of points k.
struct LoopParams {
  ModelPtr model;
  double delta = 0.1;
  int k = 8;

  double rho() const { return model->injectivity_radius(); }
  int dim() const { return model->dim(); }
  /// Throws DomainError unless 0 < delta < rho and k >= 3.
  void validate() const;
};

/// Shortest geodesic from q_i to q_{i+1}, parametrized on [0, 1].
struct SegmentLog {
  Vec start;  // exp_{q_i}^{-1}(q_{i+1})
  Vec end;    // velocity on arrival at q_{i+1}
  double length = 0.0;
};

/// Point of the loop space: k points whose first two are delta apart and whose
/// remaining consecutive distances (cyclically) satisfy sum d^2 < rho^2.
class LoopConfig {
public:
  /// Solves the k segment logs. Segments whose endpoints coincide exactly
  /// with those of `reuse` are copied, others are warm-started from it.
  /// `first` supplies segment 0 when it is known by construction.
  static LoopConfig build(const LoopParams& params, std::vector<Vec> points,
                          const LoopConfig* reuse = nullptr,
                          const std::optional<SegmentLog>& first = std::nullopt);

  const LoopParams& params() const { return params_; }
  int k() const { return params_.k; }
  const std::vector<Vec>& points() const { return points_; }
  const Vec& point(int i) const { return points_[static_cast<std::size_t>(i)]; }
  const std::vector<SegmentLog>& segments() const { return segments_; }
  /// d(q_i, q_{i+1}), indices mod k.
  double distance(int i) const { return segments_[static_cast<std::size_t>(i)].length; }
  /// Sum over i = 1..k-1 of d(q_i, q_{i+1})^2.
  double tail_sum_squares() const { return tail_sq_; }

  double sigma() const { return sigma_; }
  /// tau_0, ..., tau_k
  const std::vector<double>& breakpoints() const { return tau_; }
  /// (delta + sigma)^2
  double energy() const;
  /// sum_i d_i^2 / (tau_{i+1} - tau_i)
  double energy_telescoped() const;

  /// Outgoing velocity v_i^+ of the reconstructed loop at tau_i.
  Vec velocity_plus(int i) const;
  /// Incoming velocity v_i^- at tau_i (tau_0 identified with tau_k).
  Vec velocity_minus(int i) const;

private:
  LoopParams params_;
  std::vector<Vec> points_;
  std::vector<SegmentLog> segments_;
  std::vector<double> tau_;
  double tail_sq_ = 0.0;
  double sigma_ = 0.0;
};

double sigma(const LoopConfig& config);
std::vector<double> breakpoints(const LoopConfig& config);
double energy(const LoopConfig& config);
/// Ev(q) = exp_{q_0}^{-1}(q_1).
TangentVector ev_map(const LoopConfig& config);

/// F(p, tau) = d(p_0,p_1)^2 / tau + (k-1)/(1-tau) * sum_{i>=1} d(p_i,p_{i+1})^2.
double f_two_var(const MetricModel& model, const std::vector<Vec>& points, double tau);
double f_two_var(const LoopConfig& config, double tau);

/// 1 + (l - delta)^2 / rho^2: k above it admits sampling a closed geodesic of length l.
double k_threshold(double length, double delta, double rho);
/// (delta + sqrt(k-1) rho)^2, the supremum of the energy over the loop space.
double sup_energy(const LoopParams& params);

/// Piecewise geodesic loop t in [0,1] -> M with breaks at tau_i.
class BrokenGeodesic {
public:
  explicit BrokenGeodesic(LoopConfig config) : config_(std::move(config)) {}

  const LoopConfig& config() const { return config_; }
  const std::vector<double>& breakpoints() const { return config_.breakpoints(); }
  Vec position(double t) const;
  Vec velocity_plus(int i) const { return config_.velocity_plus(i); }
  Vec velocity_minus(int i) const { return config_.velocity_minus(i); }
  /// Points at every breakpoint and `per_segment - 1` interior samples of
  /// each segment, closing back at q_0.
  std::vector<Vec> polyline(int per_segment) const;

private:
  LoopConfig config_;
};

BrokenGeodesic reconstruct(const LoopConfig& config);

/// Samples the closed geodesic t -> exp_q(t u) (|u|_g = 1) of length l:
/// q_0 = gamma(0), q_i = gamma(delta + (i-1)(l - delta)/(k-1)).
LoopConfig sample_closed_geodesic(const LoopParams& params, const Vec& q, const Vec& u,
                                  double length);
/// Back-and-forth loop of energy 4 delta^2 built from (q_0, v_0), |v_0|_g = delta:
/// q_1 = exp(v_0) and q_2..q_{k-1} equally spaced on the way back.
LoopConfig minimum_config(const LoopParams& params, const Vec& q, const Vec& v0);

/// Random valid configuration: q_0 and q_1 = exp(delta u) from uniform (q_0, u),
/// q_2..q_{k-1} scattered in a geodesic ball around q_0 of random radius small
/// enough to keep sum d^2 < rho^2.
LoopConfig random_config(const LoopParams& params, std::mt19937_64& rng);

/// Coordinates of the Upsilon' chart: base point q_0, unit direction u at q_0
/// (q_1 = exp_{q_0}(delta u)) and free points q_2..q_{k-1}.
struct PrimeChart {
  LoopParams params;
  Vec q0;
  Vec u;
  std::vector<Vec> free;

  static PrimeChart from_config(const LoopConfig& config);
  LoopConfig config(const LoopConfig* reuse = nullptr) const;
  /// (2n - 1) + (k - 2) n, or (n - 1) + (k - 2) n with q_0 pinned.
  int dimension(bool pinned = false) const;
};

/// Local coordinates xi centred at a chart point, built from g-orthonormal
/// frames: [xi_0 (n) | eta (n-1) | xi_2 .. xi_{k-1} (n each)]. With q_0 pinned
/// the xi_0 block is absent.
class ChartCoordinates {
public:
  explicit ChartCoordinates(PrimeChart base, bool pinned = false);

  const PrimeChart& base() const { return base_; }
  bool pinned() const { return pinned_; }
  int dimension() const { return dim_; }

  /// Chart point with coordinates xi (xi = 0 returns the base exactly).
  PrimeChart point(const Eigen::VectorXd& xi) const;

  struct Evaluation {
    LoopConfig config;
    Eigen::VectorXd gradient;
  };
  /// Configuration and exact energy gradient at xi.
  Evaluation evaluate(const Eigen::VectorXd& xi, const LoopConfig* reuse = nullptr) const;
  /// Energy at xi (no gradient).
  double energy(const Eigen::VectorXd& xi, const LoopConfig* reuse = nullptr) const;

private:
  PrimeChart base_;
  bool pinned_;
  int n_;
  int dim_;
  std::vector<Mat> frames_;  // frames_[i] for q_i, i != 1
  Mat cone_;                 // complement of u at q_0
};

/// Energy gradient in chart coordinates at the chart point itself.
Eigen::VectorXd gradient(const PrimeChart& chart, bool pinned = false);

/// Plain-text polyline, one point per line.
void write_polyline(std::ostream& os, const std::vector<Vec>& points);

}  // namespace zoll
