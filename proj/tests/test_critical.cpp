#include "zoll/critical.hpp"
#include "zoll/errors.hpp"
#include "zoll/morse.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace zoll;

namespace {

constexpr double kPi = std::numbers::pi;

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  int i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

LoopParams round_params(int k = 8, double delta = 0.1) {
  return {std::make_shared<RoundSphere>(2), delta, k};
}

CriticalPoint equator_cp(const LoopParams& p) {
  const LoopConfig c = sample_closed_geodesic(p, vec({1, 0, 0}), vec({0, 1, 0}), 2 * kPi);
  return make_critical_point(c, gradient(PrimeChart::from_config(c)).norm(), 0);
}

}  // namespace

TEST(Classify, SampledGeodesicMinimumAndZigZag) {
  const LoopParams p = round_params();
  const CriticalPoint smooth = equator_cp(p);
  EXPECT_EQ(smooth.kind, CriticalKind::SmoothGeodesic);
  EXPECT_NEAR(*smooth.period, 2 * kPi, 1e-12);
  EXPECT_NEAR(smooth.energy, 4 * kPi * kPi, 1e-10);

  const LoopConfig m = minimum_config(p, vec({1, 0, 0}), vec({0, 0.1, 0}));
  EXPECT_EQ(classify(m), CriticalKind::GlobalMinimum);

  const CriticalPoint z = make_zigzag(smooth, p);
  EXPECT_EQ(z.kind, CriticalKind::ZigZag);
  EXPECT_LT(z.gradient_norm, 1e-8);
  EXPECT_NEAR(z.energy, std::pow(2 * kPi + 0.2, 2), 1e-9);
  EXPECT_NEAR(*z.period, 2 * kPi, 1e-10);
  // shares q_0 and q_1 with the smooth sample
  EXPECT_LT((z.config.point(0) - smooth.config.point(0)).norm(), 1e-14);
  EXPECT_LT((z.config.point(1) - smooth.config.point(1)).norm(), 1e-12);
  EXPECT_LT((z.ev.vec - smooth.ev.vec).norm(), 1e-12);
}

TEST(Classify, MixedPatternThrows) {
  const LoopParams p = round_params();
  // q_0 corner on a smooth arc otherwise: a quarter turn at q_0
  std::vector<Vec> pts{vec({1, 0, 0})};
  pts.push_back(vec({std::cos(0.1), std::sin(0.1), 0}));
  for (int i = 2; i < 8; ++i) {
    const double t = 0.1 + (i - 1) * 0.2;
    pts.push_back(vec({std::cos(t), std::sin(t), 0}));
  }
  // tail returns along a meridian-like path: not critical, classify refuses
  pts[7] = normalize_point(vec({1, 0.3, 0.4}));
  EXPECT_THROW(classify(LoopConfig::build(p, pts)), UnclassifiableCritical);
}

TEST(ZigZag, EnergyRelationOnEllipsoid) {
  auto model = std::make_shared<TriaxialEllipsoid>(std::vector<double>{1.0, 1.1, 1.2});
  const LoopParams p{model, 0.1, 24};
  const Vec q = vec({1, 0, 0});
  const Vec u = vec({0, 1, 0}) / model->norm(q, vec({0, 1, 0}));
  const double len = *detect_closure(*model, q, u, 12.0, 1e-10);
  const LoopConfig c = sample_closed_geodesic(p, q, u, len);
  const CriticalPoint smooth = make_critical_point(c, gradient(PrimeChart::from_config(c)).norm(), 0);
  const CriticalPoint z = make_zigzag(smooth, p);
  EXPECT_EQ(z.kind, CriticalKind::ZigZag);
  EXPECT_NEAR(std::sqrt(z.energy) - std::sqrt(smooth.energy), 0.2, 1e-8);
  const SpectralReport rs = spectrum(smooth), rz = spectrum(z);
  EXPECT_GE(rz.index, rs.index);
  EXPECT_GE(rz.index + rz.kernel, rs.index + rs.kernel);
}

TEST(ZigZag, ThresholdRejected) {
  // (2 pi + 0.2)^2 / pi^2 + 1 = 5.13...: k = 5 is too small for the zig-zag
  const LoopParams p = round_params(5);
  EXPECT_THROW(sample_zigzag(p, vec({1, 0, 0}), vec({0, 1, 0}), 2 * kPi), DomainError);
  EXPECT_NO_THROW(sample_zigzag(round_params(6), vec({1, 0, 0}), vec({0, 1, 0}), 2 * kPi));
}

TEST(Refine, PerturbedGreatCircleReturns) {
  const LoopParams p = round_params();
  const CriticalPoint cp = equator_cp(p);
  ChartCoordinates coords(PrimeChart::from_config(cp.config));
  Eigen::VectorXd xi(coords.dimension());
  for (int j = 0; j < xi.size(); ++j) xi(j) = 0.03 * std::sin(2.3 * j + 0.4);
  const LoopConfig start = coords.point(xi).config();
  const CriticalPoint r = refine(start, SearchConfig{});
  EXPECT_EQ(r.kind, CriticalKind::SmoothGeodesic);
  EXPECT_LT(r.gradient_norm, 1e-8);
  EXPECT_NEAR(r.energy, 4 * kPi * kPi, 1e-9);
}

TEST(Refine, DescentReachesMinimum) {
  const LoopParams p = round_params(6);
  std::mt19937_64 rng(3);
  SearchConfig s;
  s.mode = SearchConfig::Mode::Descent;
  s.max_iterations = 2000;
  const CriticalPoint r = refine(random_config(p, rng), s);
  EXPECT_EQ(r.kind, CriticalKind::GlobalMinimum);
  EXPECT_NEAR(r.energy, 0.04, 1e-10);
}

TEST(Refine, PerturbedEllipsoidGeodesic) {
  auto model = std::make_shared<TriaxialEllipsoid>(std::vector<double>{1.0, 1.1, 1.2});
  const LoopParams p{model, 0.1, 24};
  const Vec q = vec({0, 1, 0});
  const Vec u = vec({0, 0, 1}) / model->norm(q, vec({0, 0, 1}));
  const double len = *detect_closure(*model, q, u, 12.0, 1e-10);
  const LoopConfig c = sample_closed_geodesic(p, q, u, len);
  ChartCoordinates coords(PrimeChart::from_config(c));
  Eigen::VectorXd xi(coords.dimension());
  for (int j = 0; j < xi.size(); ++j) xi(j) = 0.01 * std::cos(1.3 * j);
  const CriticalPoint r = refine(coords.point(xi).config(), SearchConfig{});
  EXPECT_EQ(r.kind, CriticalKind::SmoothGeodesic);
  EXPECT_NEAR(r.energy, len * len, 1e-7);
}

TEST(Family, ShiftedBasePointIsSame) {
  const LoopParams p = round_params();
  const CriticalPoint a = equator_cp(p);
  const Vec q = vec({std::cos(1.0), std::sin(1.0), 0});
  const Vec u = vec({-std::sin(1.0), std::cos(1.0), 0});
  const LoopConfig c = sample_closed_geodesic(p, q, u, 2 * kPi);
  const CriticalPoint b = make_critical_point(c, 0.0, 0);
  const SearchConfig s;
  EXPECT_TRUE(same_critical_family(a, b, s));
  EXPECT_TRUE(same_critical_family(b, a, s));
  const LoopConfig other = sample_closed_geodesic(p, vec({1, 0, 0}), vec({0, 0, 1}), 2 * kPi);
  EXPECT_FALSE(same_critical_family(a, make_critical_point(other, 0.0, 0), s));
}

TEST(Levels, Grouping) {
  const LoopParams p = round_params();
  const CriticalPoint a = equator_cp(p);
  std::vector<CriticalPoint> pts{a, a, make_zigzag(a, p)};
  const auto levels = energy_levels(pts, 1e-6);
  ASSERT_EQ(levels.size(), 2u);
  EXPECT_EQ(levels[0].count, 2);
  EXPECT_EQ(levels[1].kind, CriticalKind::ZigZag);
}

TEST(Multistart, RoundSphereLevels) {
  const LoopParams p = round_params(8);
  SearchConfig s;
  s.samples = 24;
  s.seed = 7;
  s.energy_max = 60.0;
  const MultistartResult r = multistart(p, s);
  ASSERT_FALSE(r.points.empty());
  EXPECT_EQ(r.points.front().kind, CriticalKind::GlobalMinimum);
  for (const auto& cp : r.points) {
    EXPECT_LT(cp.gradient_norm, 1e-8);
    if (cp.kind == CriticalKind::SmoothGeodesic) EXPECT_NEAR(cp.energy, 4 * kPi * kPi, 1e-8);
    if (cp.kind == CriticalKind::ZigZag) EXPECT_NEAR(cp.energy, std::pow(2 * kPi + 0.2, 2), 1e-8);
  }
  const auto levels = energy_levels(r.points, 1e-6);
  std::vector<CriticalKind> kinds;
  for (const auto& l : levels) kinds.push_back(l.kind);
  EXPECT_EQ(kinds, (std::vector<CriticalKind>{CriticalKind::GlobalMinimum,
                                              CriticalKind::SmoothGeodesic, CriticalKind::ZigZag}));
  // deterministic for a fixed seed and independent of the worker count
  s.workers = 3;
  const MultistartResult again = multistart(p, s);
  ASSERT_EQ(again.points.size(), r.points.size());
  for (std::size_t i = 0; i < r.points.size(); ++i)
    EXPECT_EQ(again.points[i].energy, r.points[i].energy);
}

TEST(FindThroughPoint, RoundSphere) {
  const LoopParams p = round_params(8);
  const Vec q = normalize_point(vec({0.3, -0.5, 0.8}));
  const auto cp = find_through_point(p, q, 4 * kPi * kPi, SearchConfig{});
  ASSERT_TRUE(cp.has_value());
  EXPECT_LT((cp->config.point(0) - q).norm(), 1e-14);
  EXPECT_LT(cp->gradient_norm, 1e-6);
  EXPECT_NEAR(cp->energy, 4 * kPi * kPi, 4e-5 * kPi * kPi);
  const auto z = find_through_point(p, q, std::pow(2 * kPi + 0.2, 2), SearchConfig{});
  ASSERT_TRUE(z.has_value());
  EXPECT_EQ(z->kind, CriticalKind::ZigZag);
}

TEST(SearchConfig, Validation) {
  SearchConfig s;
  s.gradient_tol = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.energy_min = 5.0;
  s.energy_max = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(parse_kind("Bogus"), ConfigError);
  EXPECT_EQ(parse_kind(to_string(CriticalKind::ZigZag)), CriticalKind::ZigZag);
}
