#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tears/appendix.hpp"
#include "tears/errors.hpp"
#include "tears/singularity_analyzer.hpp"

using namespace tears;

namespace {

double typed(int i, double x, double y) {
  switch (i) {
    case 1: return x * x + y * y - std::pow(x, 6) + y;
    case 2: return 4 * x * x + y * y - std::pow(y, 6) + x - 3 * x * y;
    case 3: return 4 * x * x + y * y - std::pow(y, 6) - x + 3 * x * y;
    default: {
      const double ax = std::abs(x);
      const double below = y < 0 ? 1.0 : 0.0;
      return 4 * std::pow(y, 4) + y * y - ax * ax * ax + y * y * below + 3 * std::pow(ax, 1.5);
    }
  }
}

// gradients as listed alongside the formulas
Eigen::Vector2d listed(int i, double x, double y) {
  const double sx = (x > 0) - (x < 0), below = y < 0 ? 1.0 : 0.0;
  switch (i) {
    case 1: return {2 * x - 6 * std::pow(x, 5), 2 * y + 1};
    case 2: return {8 * x + 1 - 3 * y, 2 * y - 6 * std::pow(y, 5) - 3 * x};
    case 3: return {8 * x - 1 - 3 * y, 2 * y - 6 * std::pow(y, 5) + 3 * x};
    default: return {sx * (4.5 * std::sqrt(std::abs(x)) - 3 * x * x), 16 * y * y * y + 2 * (1 + below) * y};
  }
}

std::vector<Eigen::Vector2d> domain_samples(const AppendixScenario& A, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-A.r0(), A.r0()), s(-1.0, 1.0);
  std::vector<Eigen::Vector2d> out;
  while (static_cast<int>(out.size()) < count) {
    const double x = ux(rng);
    out.emplace_back(x, s(rng) * (A.r0() * A.r0() - x * x));
  }
  return out;
}

}  // namespace

TEST(Appendix, FormulasMatchAtTwelveDigits) {
  const AppendixScenario A(0.1);
  for (const auto& p : domain_samples(A, 500, 1))
    for (int i = 1; i <= 4; ++i) {
      const double want = typed(i, p.x(), p.y());
      EXPECT_NEAR(A.value(i, p), want, 1e-12 * (1e-3 + std::abs(want))) << "u" << i << " at " << p.transpose();
    }
}

TEST(Appendix, GradientsMatchTheListAndDifferences) {
  const AppendixScenario A(0.1);
  const double h = 1e-7;
  for (const auto& p : domain_samples(A, 300, 2))
    for (int i = 1; i <= 4; ++i) {
      const Eigen::Vector2d g = A.gradient(i, p);
      const Eigen::Vector2d fd((typed(i, p.x() + h, p.y()) - typed(i, p.x() - h, p.y())) / (2 * h),
                               (typed(i, p.x(), p.y() + h) - typed(i, p.x(), p.y() - h)) / (2 * h));
      if (std::abs(p.x()) > 1e-4 && std::abs(p.y()) > 1e-4) EXPECT_LT((g - fd).norm(), 1e-6) << "u" << i;
      if (i == 3) continue;
      if (i == 4 && p.y() < 0) continue;
      EXPECT_LT((g - listed(i, p.x(), p.y())).norm(), 1e-13) << "u" << i;
    }
}

TEST(Appendix, ListedGradientsThatDisagreeWithTheFormulas) {
  const AppendixScenario A(0.1);
  // d/dx u3 carries +3y; the listed -3y matches only on y = 0
  const Eigen::Vector2d p(0.03, 0.004);
  EXPECT_NEAR(A.gradient(3, p).x(), 8 * p.x() - 1 + 3 * p.y(), 1e-15);
  EXPECT_GT(std::abs(A.gradient(3, p).x() - listed(3, p.x(), p.y()).x()), 1e-3);
  // d/dy u4 for y < 0 is 16y^3 + 4y, matching the listed form
  const Eigen::Vector2d q(0.001, -0.004);
  EXPECT_NEAR(A.gradient(4, q).y(), 16 * std::pow(q.y(), 3) + 4 * q.y(), 1e-15);
}

TEST(Appendix, FourWayCoincidenceAtTheOrigin) {
  const AppendixScenario A(0.1);
  for (int i = 1; i <= 4; ++i) EXPECT_LT(std::abs(A.value(i, Eigen::Vector2d::Zero())), 1e-12);
}

TEST(Appendix, ClassifiesReferencePoints) {
  const AppendixScenario A(0.1);
  const double c = A.r0() * A.r0() / 2;
  EXPECT_EQ(A.argmax({0, c}), 1);
  EXPECT_EQ(A.argmax({c, 0}), 2);
  EXPECT_EQ(A.argmax({-c, 0}), 3);
  EXPECT_EQ(A.region({0, c}), 1);
  EXPECT_EQ(A.region({c, 0}), 2);
  EXPECT_EQ(A.region({2, 0}), 0);
}

TEST(Appendix, SmallnessConstants) {
  const AppendixScenario A(0.1);
  for (const auto& q : A.smallness()) EXPECT_TRUE(q.holds) << q.name << " = " << q.value;
  const double r0 = A.r0();
  EXPECT_NEAR(A.r1(), A.r0() * A.r0() - A.r1() * A.r1(), 1e-15);
  EXPECT_NEAR(-std::sqrt(A.r2()), A.r2() * A.r2() - r0 * r0, 1e-14);
  EXPECT_GT(A.r1(), 0.0);
  EXPECT_LT(A.r2(), r0);
}

TEST(Appendix, PiecesAreConvexOnTheDomain) {
  const AppendixScenario A(0.1);
  const double h = 1e-4;
  for (const auto& p : domain_samples(A, 400, 3)) {
    if (std::abs(p.x()) < 2 * h || std::abs(p.y()) < 2 * h) continue;
    for (int i = 1; i <= 4; ++i) {
      auto f = [&](double dx, double dy) { return typed(i, p.x() + dx, p.y() + dy); };
      const double fxx = (f(h, 0) - 2 * f(0, 0) + f(-h, 0)) / (h * h);
      const double fyy = (f(0, h) - 2 * f(0, 0) + f(0, -h)) / (h * h);
      const double fxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h);
      EXPECT_GE(fxx + fyy, -1e-6) << "u" << i;
      EXPECT_GE(fxx * fyy - fxy * fxy, -1e-3 * (1 + std::abs(fxx * fyy))) << "u" << i << " at " << p.transpose();
    }
  }
}

TEST(Appendix, TargetIsAProbabilityMeasureOnDisjointPieces) {
  const AppendixScenario A(0.1);
  const auto nu = A.target();
  EXPECT_NEAR(nu.weights().sum(), 1.0, 1e-12);
  EXPECT_EQ(nu.piece_ids(), (std::vector<int>{1, 2, 3, 4}));
  std::map<int, PointSet> hulls;
  for (int id : nu.piece_ids()) hulls.emplace(id, nu.piece_points(id));
  EXPECT_NO_THROW(require_disjoint_hulls(hulls));
  EXPECT_EQ(A.warm_start().size(), nu.size());
}

TEST(Appendix, ShiftMovesOnlyOnePiece) {
  const AppendixScenario A(0.1);
  const auto nu = A.target(12, 4, 6);
  const auto moved = shift_piece(nu, 4, Eigen::Vector2d(0, 0.01));
  for (int j = 0; j < nu.size(); ++j) {
    const auto& a = nu.atoms()[static_cast<std::size_t>(j)];
    const auto& b = moved.atoms()[static_cast<std::size_t>(j)];
    EXPECT_EQ(a.weight, b.weight);
    EXPECT_NEAR((b.point - a.point).norm(), a.piece == 4 ? 0.01 : 0.0, 1e-15);
  }
  EXPECT_THROW(shift_piece(nu, 9, Eigen::Vector2d(0, 1)), ArgumentError);
}

TEST(Appendix, VerifiesAtReducedResolution) {
  AppendixOptions o;
  o.lattice = 129;
  const auto r = appendix_verify(o);
  EXPECT_TRUE(r.smallness_ok);
  EXPECT_TRUE(r.coincidence_ok);
  EXPECT_TRUE(r.convex_ok) << r.convexity_min;
  EXPECT_TRUE(r.regions_ok) << r.region_agreement;
  EXPECT_TRUE(r.curves_ok);
  EXPECT_EQ(r.base_max_multiplicity, 4);
  EXPECT_LT(r.base_point.norm(), 1e-15);
  for (int m : r.shifted_max_multiplicity) EXPECT_EQ(m, 3);
  EXPECT_TRUE(r.pass);
}
