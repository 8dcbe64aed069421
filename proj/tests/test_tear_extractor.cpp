#include <gtest/gtest.h>

#include <random>

#include <Eigen/Dense>

#include "support/oracles.hpp"
#include "tears/tear_extractor.hpp"

using namespace tears;

namespace {

PointSet pts(std::initializer_list<std::pair<double, double>> list) {
  PointSet P(2, static_cast<Eigen::Index>(list.size()));
  Eigen::Index j = 0;
  for (const auto& [x, y] : list) P.col(j++) << x, y;
  return P;
}

MaxAffine affine2(double px, double py, double b) { return MaxAffine::affine(Eigen::Vector2d(px, py), b); }

TearLattice unit_box(const SeparatingFrame& f, int n, int nodes) {
  return tear_lattice_for_box(f, Eigen::VectorXd::Constant(n, -1.0), Eigen::VectorXd::Constant(n, 1.0), nodes);
}

}  // namespace

TEST(SeparatingFrame, SymmetricPair) {
  const auto f = find_separating_frame(pts({{0, 1}}), pts({{0, -1}}));
  EXPECT_NEAR((f.normal - Eigen::Vector2d(0, 1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR(f.midheight, 0.0, 1e-15);
  EXPECT_NEAR(f.spacing, 1.0, 1e-15);
  EXPECT_LE((f.rotation * f.normal - Eigen::Vector2d(0, 1)).norm(), 1e-12);
}

TEST(SeparatingFrame, SymmetricPairsOfPoints) {
  const auto f = find_separating_frame(pts({{1, 2}, {-1, 2}}), pts({{1, -2}, {-1, -2}}));
  EXPECT_NEAR((f.normal - Eigen::Vector2d(0, 1)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(f.midheight, 0.0, 1e-12);
  EXPECT_NEAR(f.spacing, 2.0, 1e-12);
}

TEST(SeparatingFrame, OverlapThrowsWithWitness) {
  try {
    find_separating_frame(pts({{0, 1}, {0, -1}}), pts({{-1, 0}, {1, 0}}));
    FAIL();
  } catch (const NoSeparation& e) {
    EXPECT_LE((e.plus_witness - e.minus_witness).norm(), 1e-12);
  }
}

TEST(SeparatingFrame, MarginIsMaximalOnRandomClouds) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    const auto pr = oracle::random_separated_pair(rng, 3);
    const auto f = find_separating_frame(pr.plus.slopes(), pr.minus.slopes());
    const Eigen::VectorXd sp = pr.plus.slopes().transpose() * f.normal;
    const Eigen::VectorXd sm = pr.minus.slopes().transpose() * f.normal;
    EXPECT_GE(sp.minCoeff(), f.midheight + f.spacing - 1e-9);
    EXPECT_LE(sm.maxCoeff(), f.midheight - f.spacing + 1e-9);
    // the generating hyperplane is a feasible separator, so the max margin dominates it
    const double gen = 0.5 * ((pr.plus.slopes().transpose() * pr.normal).minCoeff() -
                              (pr.minus.slopes().transpose() * pr.normal).maxCoeff());
    EXPECT_GE(f.spacing, gen - 1e-9);
  }
}

TEST(TearHeight, SymmetricAffinePairIsZero) {
  const auto frame = SeparatingFrame::make(Eigen::Vector2d(0, 1), 0.0, 0.5);
  const TearGraph tg = tear_height(affine2(0, 1, 0), affine2(0, -1, 0), frame, unit_box(frame, 2, 65));
  for (double h : tg.h_values) EXPECT_EQ(h, 0.0);
  EXPECT_EQ(classify(affine2(0, 1, 0), affine2(0, -1, 0), tg, Eigen::Vector2d(0.3, 0)), Side::SIGMA);
  EXPECT_EQ(classify(affine2(0, 1, 0), affine2(0, -1, 0), tg, Eigen::Vector2d(0, 0.4)), Side::C_PLUS);
  EXPECT_EQ(classify(affine2(0, 1, 0), affine2(0, -1, 0), tg, Eigen::Vector2d(0, -0.4)), Side::C_MINUS);
}

TEST(TearHeight, AffinePairMatchesClosedForm) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 2;
    Eigen::VectorXd pp(n), pm(n);
    for (int a = 0; a < n; ++a) {
      pp[a] = g(rng);
      pm[a] = g(rng);
    }
    pp[n - 1] = 1.0 + std::abs(g(rng));
    pm[n - 1] = -1.0 - std::abs(g(rng));
    const double bp = g(rng), bm = g(rng);
    const auto frame = SeparatingFrame::make(Eigen::VectorXd::Unit(n, n - 1), 0.0, 0.5);
    const TearGraph tg = tear_height(MaxAffine::affine(pp, bp), MaxAffine::affine(pm, bm), frame, unit_box(frame, n, 17));
    for (std::size_t i = 0; i < tg.h_values.size(); ++i) {
      const Eigen::VectorXd xp = tg.lattice.lattice.node(i);
      EXPECT_NEAR(tg.h_values[i], oracle::affine_crossing(pp, bp, pm, bm, xp), 1e-10);
    }
  }
}

TEST(TearHeight, RandomPairsMatchFiberBisection) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 2;
    const auto pr = oracle::random_separated_pair(rng, n);
    const auto frame = find_separating_frame(pr.plus.slopes(), pr.minus.slopes());
    const TearGraph tg = tear_height(pr.plus, pr.minus, frame, unit_box(frame, n, n == 2 ? 64 : 16));
    const double step = tg.lattice.lattice.max_step();
    for (std::size_t i = 0; i < tg.h_values.size(); ++i) {
      ASSERT_TRUE(tg.finite[i]);
      const double t = oracle::fiber_bisection(pr.plus, pr.minus, frame.rotation, tg.lattice.lattice.node(i),
                                               tg.lattice.t_lo, tg.lattice.t_hi);
      EXPECT_LE(std::abs(tg.h_values[i] - t), step);
      EXPECT_NEAR(tg.h_values[i], t, 1e-9 * (1 + std::abs(t)));
    }
  }
}

TEST(TearHeight, GraphPropertyAndClassificationAgreesWithSign) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pr = oracle::random_separated_pair(rng, 2);
    const auto frame = find_separating_frame(pr.plus.slopes(), pr.minus.slopes());
    const TearLattice L = unit_box(frame, 2, 65);
    const TearGraph tg = tear_height(pr.plus, pr.minus, frame, L);
    const double tol = 2.0 * L.t_step();
    // along a fiber the tol band contains exactly one run of samples, centred on h
    for (std::size_t i = 0; i < L.lattice.size(); i += 8) {
      int runs = 0;
      bool inside = false;
      for (int k = 0; k < L.fiber_nodes; ++k) {
        const double t = L.t_lo + k * L.t_step();
        const bool in = std::abs(t - tg.h_values[i]) <= tol;
        if (in && !inside) ++runs;
        inside = in;
      }
      if (tg.h_values[i] >= L.t_lo - tol && tg.h_values[i] <= L.t_hi + tol) EXPECT_EQ(runs, 1);
    }
    for (int s = 0; s < 200; ++s) {
      const Eigen::Vector2d x(u(rng), u(rng));
      const Side side = classify(pr.plus, pr.minus, tg, x);
      const double diff = eval(pr.plus, Eigen::VectorXd(x)) - eval(pr.minus, Eigen::VectorXd(x));
      if (side == Side::C_PLUS) EXPECT_GT(diff, 0.0);
      if (side == Side::C_MINUS) EXPECT_LT(diff, 0.0);
    }
  }
}

TEST(TearHeight, DcStructure) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 2;
    const auto pr = oracle::random_separated_pair(rng, n);
    const auto frame = find_separating_frame(pr.plus.slopes(), pr.minus.slopes());
    const TearGraph tg = tear_height(pr.plus, pr.minus, frame, unit_box(frame, n, 33));
    for (std::size_t i = 0; i < tg.h_values.size(); ++i) EXPECT_DOUBLE_EQ(tg.h_values[i], tg.h_plus[i] - tg.h_minus[i]);
    EXPECT_TRUE(dc_structure(tg, 1e-10).pass);
  }
}

TEST(TearHeight, FrameInvariance) {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pr = oracle::random_separated_pair(rng, 3);
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(3, 3)).householderQ();
    const auto f0 = find_separating_frame(pr.plus.slopes(), pr.minus.slopes());
    const MaxAffine qp = pr.plus.rotated(Q), qm = pr.minus.rotated(Q);
    const auto f1 = find_separating_frame(qp.slopes(), qm.slopes());
    for (int s = 0; s < 50; ++s) {
      const Eigen::Vector2d xp = Eigen::Vector2d::Random();
      Eigen::Vector3d y0;
      y0 << xp, 0.0;
      // the same ambient point expressed in the second frame
      const Eigen::Vector3d y1 = f1.rotation * Q * f0.rotation.transpose() * y0;
      const double h0 = tear_height_at(pr.plus, pr.minus, f0, xp).h;
      const double h1 = tear_height_at(qp, qm, f1, y1.head(2)).h;
      EXPECT_NEAR(h0, h1 + y1[2], 1e-9);
    }
  }
}

TEST(TearHeight, WrongSideSlopeThrows) {
  const auto frame = SeparatingFrame::make(Eigen::Vector2d(0, 1), 0.0, 0.5);
  EXPECT_THROW(tear_height(affine2(0, 0.2, 0), affine2(0, -1, 0), frame, unit_box(frame, 2, 9)), SeparationViolation);
}

TEST(TearHeight, GridInputsWithinOneFiberStep) {
  const Latticed L = Latticed::box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1), 201);
  const auto fp = [](const Eigen::VectorXd& x) { return 0.3 * x[0] + 1.5 * x[1] + 0.1 + 0.2 * x[1] * x[1]; };
  const auto fm = [](const Eigen::VectorXd& x) { return -0.2 * x[0] - 1.2 * x[1] + 0.1 * x[0] * x[0]; };
  const Grid gp = Grid::sample(L, fp), gm = Grid::sample(L, fm);
  const auto frame = SeparatingFrame::make(Eigen::Vector2d(0, 1), 0.0, 0.6);
  TearLattice T;
  T.lattice = Latticed::box(Eigen::VectorXd::Constant(1, -0.9), Eigen::VectorXd::Constant(1, 0.9), 19);
  T.t_lo = -1.0;
  T.t_hi = 1.0;
  T.fiber_nodes = 401;
  const TearGraph tg = tear_height(gp, gm, frame, T);
  EXPECT_GT(tg.h_resolution, 0.0);
  for (std::size_t i = 0; i < tg.h_values.size(); ++i) {
    const double x = T.lattice.node(i)[0];
    // exact crossing of fp and fm along the vertical fiber
    double lo = -1, hi = 1;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (fp(Eigen::Vector2d(x, mid)) < fm(Eigen::Vector2d(x, mid)) ? lo : hi) = mid;
    }
    EXPECT_NEAR(tg.h_values[i], lo, 2.0 * T.t_step());
  }
}

TEST(Lipschitz, ClosedFormVerticalPair) {
  const auto frame = find_separating_frame(pts({{1, 1}}), pts({{1, -1}}));
  const TearGraph tg = tear_height(affine2(1, 1, 0.2), affine2(1, -1, 0), frame, unit_box(frame, 2, 33));
  const auto rep = lipschitz_certificate(tg, pts({{1, 1}}), pts({{1, -1}}));
  EXPECT_NEAR(rep.measured_lip, 0.0, 1e-12);
  EXPECT_NEAR(rep.tan_theta_min, 0.0, 1e-12);
  EXPECT_NEAR(rep.diam_bound, 0.0, 1e-12);
  EXPECT_TRUE(rep.pass);
}

TEST(Lipschitz, ChainHoldsOnRandomClouds) {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 2;
    const auto pr = oracle::random_separated_pair(rng, n);
    const auto frame = find_separating_frame(pr.plus.slopes(), pr.minus.slopes());
    const TearGraph tg = tear_height(pr.plus, pr.minus, frame, unit_box(frame, n, 33));
    const auto rep = lipschitz_certificate(tg, pr.plus.slopes(), pr.minus.slopes());
    EXPECT_TRUE(rep.pass) << rep.message << " measured=" << rep.measured_lip << " tan=" << rep.tan_theta_min
                          << " diam=" << rep.diam_bound;
  }
}
