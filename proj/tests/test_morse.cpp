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

CriticalPoint great_circle(int n, int k, double turns, double delta = 0.1) {
  auto model = std::make_shared<RoundSphere>(n);
  Vec q = Vec::Zero(n + 1), u = Vec::Zero(n + 1);
  q(0) = 1.0;
  u(1) = 1.0;
  const LoopConfig c = sample_closed_geodesic({model, delta, k}, q, u, 2 * kPi * turns);
  return make_critical_point(c, gradient(PrimeChart::from_config(c)).norm(), 0);
}

}  // namespace

TEST(IndexNullity, DiagonalMatrix) {
  Eigen::VectorXd d(6);
  d << -3.0, -1e-9, 0.0, 2e-9, 0.5, 4.0;
  const SpectralReport r = index_nullity(d.asDiagonal().toDenseMatrix(), 1e-4);
  EXPECT_EQ(r.index, 1);
  EXPECT_EQ(r.kernel, 3);
  EXPECT_EQ(r.positive, 2);
  EXPECT_DOUBLE_EQ(r.scale, 4.0);
  EXPECT_DOUBLE_EQ(r.gap, 0.5);
  EXPECT_FALSE(r.gap_warning);
}

TEST(IndexNullity, GapWarning) {
  Eigen::VectorXd d(3);
  d << -1.0, 5e-4, 1e-6;
  EXPECT_TRUE(index_nullity(d.asDiagonal().toDenseMatrix(), 1e-4).gap_warning);
}

TEST(Hessian, QuadraticOracle) {
  Eigen::MatrixXd a(3, 3);
  a << 2, 1, 0, 1, -3, 0.5, 0, 0.5, 1;
  const HessianResult h =
      finite_difference_hessian([&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return a * x; },
                                3, 1e-3, 2);
  EXPECT_LT((h.matrix - a).norm(), 1e-12);
  EXPECT_LT(h.asymmetry, 1e-14);
}

TEST(Hessian, RoundSphereGreatCircle) {
  const CriticalPoint cp = great_circle(2, 8, 1.0);
  EXPECT_EQ(cp.kind, CriticalKind::SmoothGeodesic);
  const HessianResult h = hessian(cp);
  EXPECT_LT(h.asymmetry, 1e-5);
  const SpectralReport r = index_nullity(h.matrix);
  EXPECT_EQ(r.dimension, 15);
  EXPECT_EQ(r.index, 1);
  EXPECT_EQ(r.kernel, 3);
  EXPECT_FALSE(r.gap_warning);
}

TEST(Hessian, RoundThreeSphereGreatCircle) {
  const SpectralReport r = spectrum(great_circle(3, 8, 1.0));
  EXPECT_EQ(r.index, 2);
  EXPECT_EQ(r.kernel, 5);
  EXPECT_FALSE(r.gap_warning);
}

TEST(Hessian, IteratesFollowBottFormula) {
  EXPECT_EQ(iterate_index_expected(1, 2, 2), 3);
  EXPECT_EQ(iterate_index_expected(2, 3, 3), 10);
  EXPECT_EQ(iterate_nullity_expected(3), 4);
  EXPECT_THROW(sample_closed_geodesic({std::make_shared<RoundSphere>(2), 0.1, 16},
                                      vec({1, 0, 0}), vec({0, 1, 0}), 4 * kPi),
               DomainError);
  for (int n : {2, 3}) {
    const int i1 = n - 1;
    const SpectralReport r = spectrum(great_circle(n, 20, 2.0), 1e-4, 2);
    EXPECT_EQ(r.index, iterate_index_expected(i1, 2, n)) << "n = " << n;
    EXPECT_EQ(r.kernel, 2 * n - 1) << "n = " << n;
  }
}

TEST(Hessian, ThirdIterateOnThreeSphere) {
  const SpectralReport r = spectrum(great_circle(3, 37, 3.0), 1e-4, 2);
  EXPECT_EQ(r.index, iterate_index_expected(2, 3, 3));
  EXPECT_EQ(r.kernel, 5);
}

TEST(Hessian, PinnedAndFullChartsAgreeOnEnergy) {
  const CriticalPoint cp = great_circle(2, 8, 1.0);
  const ChartCoordinates pinned(PrimeChart::from_config(cp.config), true);
  EXPECT_EQ(pinned.dimension(), 13);
  EXPECT_NEAR(pinned.energy(Eigen::VectorXd::Zero(13)), cp.energy, 1e-12);
}

TEST(UniformDiscretization, GradientMatchesFiniteDifferences) {
  auto model = std::make_shared<TriaxialEllipsoid>(std::vector<double>{1.0, 1.1, 1.2});
  std::vector<Vec> pts;
  for (int i = 0; i < 10; ++i) {
    const double t = 2 * kPi * i / 10 + 0.05 * std::sin(3.0 * i);
    pts.push_back(normalize_point(vec({std::cos(t), 1.1 * std::sin(t), 0.05 * std::cos(2.0 * i)})));
  }
  const UniformDiscretization disc(model, pts);
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(disc.dimension());
  for (int j = 0; j < disc.dimension(); ++j) xi(j) = 0.01 * std::cos(1.7 * j);
  const Eigen::VectorXd g = disc.gradient(xi);
  const double h = 1e-5;
  for (int j = 0; j < disc.dimension(); ++j) {
    Eigen::VectorXd p = xi, m = xi;
    p(j) += h;
    m(j) -= h;
    const double fd = (disc.energy(p) - disc.energy(m)) / (2 * h);
    EXPECT_NEAR(g(j), fd, 1e-5 * std::max(1.0, std::abs(fd))) << "coordinate " << j;
  }
}

TEST(UniformDiscretization, AgreesOnRoundSphere) {
  auto model = std::make_shared<RoundSphere>(2);
  const SpectralReport m = uniform_discretization_index(model, vec({1, 0, 0}), vec({0, 1, 0}),
                                                        2 * kPi, 12);
  const SpectralReport ours = spectrum(great_circle(2, 8, 1.0));
  EXPECT_EQ(m.index, ours.index);
  EXPECT_EQ(m.kernel, ours.kernel);
}

TEST(UniformDiscretization, AgreesOnEllipsoidPrincipalEllipses) {
  auto model = std::make_shared<TriaxialEllipsoid>(std::vector<double>{1.0, 1.1, 1.2});
  const LoopParams params{model, 0.1, 24};
  // principal ellipses in the (x,y), (x,z) and (y,z) planes
  const std::vector<std::pair<Vec, Vec>> starts = {
      {vec({1, 0, 0}), vec({0, 1, 0})}, {vec({1, 0, 0}), vec({0, 0, 1})},
      {vec({0, 1, 0}), vec({0, 0, 1})}};
  std::vector<int> indices;
  for (const auto& [q, dir] : starts) {
    const auto len = detect_closure(*model, q, dir / model->norm(q, dir), 12.0, 1e-9);
    ASSERT_TRUE(len.has_value());
    const Vec u = dir / model->norm(q, dir);
    const LoopConfig c = sample_closed_geodesic(params, q, u, *len);
    const CriticalPoint cp = make_critical_point(c, gradient(PrimeChart::from_config(c)).norm(), 0);
    EXPECT_LT(cp.gradient_norm, 1e-7);
    const SpectralReport ours = spectrum(cp);
    const SpectralReport milnor = uniform_discretization_index(model, q, u, *len, 16);
    EXPECT_EQ(ours.index, milnor.index) << "length " << *len;
    EXPECT_EQ(ours.kernel, milnor.kernel) << "length " << *len;
    EXPECT_EQ(ours.kernel, 1) << "length " << *len;
    indices.push_back(ours.index);
  }
  EXPECT_EQ(indices, (std::vector<int>{1, 2, 3}));
}
