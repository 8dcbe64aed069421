#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "support/oracles.hpp"
#include "tears/ot_solver.hpp"
#include "tears/transport_lp.hpp"

using namespace tears;

namespace {

SourceMeasure square() { return SourceMeasure::box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)); }

TargetDecomposition two_atoms() {
  return TargetDecomposition({{Eigen::Vector2d(0, 1), 0.5, 0}, {Eigen::Vector2d(0, -1), 0.5, 1}});
}

std::vector<Eigen::Vector2d> hexagon() {
  std::vector<Eigen::Vector2d> v;
  for (int k = 0; k < 6; ++k) v.emplace_back(std::cos(M_PI * k / 3), std::sin(M_PI * k / 3));
  return v;
}

TargetDecomposition triangle() {
  std::vector<Atom> atoms;
  for (int k = 0; k < 3; ++k) {
    const double t = M_PI / 2 + 2 * M_PI * k / 3;
    atoms.push_back({Eigen::Vector2d(std::cos(t), std::sin(t)), 1.0 / 3, k});
  }
  return TargetDecomposition(atoms);
}

DualWeights zeros(int n) { return {Eigen::VectorXd::Zero(n)}; }

}  // namespace

TEST(SourceMeasure, MassesAndDensity) {
  EXPECT_NEAR(square().total_mass(), 1.0, 1e-15);
  EXPECT_NEAR(square().density(Eigen::Vector2d(0.2, 0.3)), 0.25, 1e-15);
  EXPECT_EQ(square().density(Eigen::Vector2d(1.5, 0)), 0.0);
  const auto hex = SourceMeasure::polygon(hexagon());
  EXPECT_NEAR(hex.total_mass(), 1.0, 1e-14);
  const auto tab = SourceMeasure::box_table(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1), {2, 2}, {1, 2, 3, 4});
  EXPECT_NEAR(tab.total_mass(), 1.0, 1e-14);
  EXPECT_NEAR(tab.density(Eigen::Vector2d(0.75, 0.75)), 4.0 / 2.5, 1e-14);
  EXPECT_THROW(SourceMeasure::box_table(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1), {2, 2}, {1, -2, 3, 4}),
               std::invalid_argument);
}

TEST(TargetDecomposition, ValidatesAndNormalizes) {
  TargetDecomposition nu({{Eigen::Vector2d(0, 1), 2.0, 0}, {Eigen::Vector2d(0, -1), 6.0, 1}});
  EXPECT_NEAR(nu.weights().sum(), 1.0, 1e-15);
  EXPECT_NEAR(nu.piece_weight(1), 0.75, 1e-15);
  EXPECT_THROW(TargetDecomposition({{Eigen::Vector2d(0, 1), 0.5, 0}, {Eigen::Vector2d(0, 1), 0.5, 1}}),
               std::invalid_argument);
  EXPECT_THROW(TargetDecomposition({{Eigen::Vector2d(0, 1), -0.5, 0}}), std::invalid_argument);
  EXPECT_THROW(TargetDecomposition({{Eigen::Vector2d(0, 1), 0.4, 0}}, {}, false), std::invalid_argument);
}

TEST(CellMasses, SymmetricTwoAtoms) {
  const auto cm = cell_masses(square(), two_atoms(), zeros(2), true);
  EXPECT_NEAR(cm.masses[0], 0.5, 1e-15);
  EXPECT_NEAR(cm.masses[1], 0.5, 1e-15);
  ASSERT_EQ(cm.cells[0].size(), 1u);
  for (const auto& v : cm.cells[0][0].vertices) EXPECT_GE(v.y(), -1e-15);
  for (const auto& v : cm.cells[1][0].vertices) EXPECT_LE(v.y(), 1e-15);
  // wall {y = 0} of length 2 at atom distance 2, density 1/4
  EXPECT_NEAR(cm.jacobian(0, 1), 0.25, 1e-15);
  EXPECT_NEAR(cm.jacobian(0, 0), -0.25, 1e-15);
}

TEST(CellMasses, OneAtomTakesEverything) {
  TargetDecomposition nu({{Eigen::Vector2d(3, 1), 1.0, 0}});
  EXPECT_NEAR(cell_masses(square(), nu, zeros(1)).masses[0], 1.0, 1e-15);
}

TEST(CellMasses, EmptyCellHasZeroMass) {
  TargetDecomposition nu({{Eigen::Vector2d(0, 1), 0.5, 0}, {Eigen::Vector2d(0, -1), 0.5, 1}});
  DualWeights psi{Eigen::Vector2d(0, 10)};
  const auto cm = cell_masses(square(), nu, psi);
  EXPECT_NEAR(cm.masses[0], 1.0, 1e-15);
  EXPECT_EQ(cm.masses[1], 0.0);
}

TEST(CellMasses, ConservationShiftInvarianceMonotonicity) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto tab = SourceMeasure::box_table(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1), {3, 4},
                                            {1, 2, 3, 4, 1, 1, 2, 2, 5, 1, 1, 3});
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Atom> atoms;
    for (int j = 0; j < 8; ++j) atoms.push_back({Eigen::Vector2d(U(rng), U(rng)), 1.0, j % 3});
    TargetDecomposition nu(atoms);
    DualWeights psi{0.2 * Eigen::VectorXd::NullaryExpr(8, [&] { return U(rng); })};
    for (const auto* mu : {&tab}) {
      const auto cm = cell_masses(*mu, nu, psi);
      EXPECT_NEAR(cm.masses.sum(), 1.0, 1e-9);
      DualWeights shifted{psi.psi.array() + 3.7};
      EXPECT_LE((cell_masses(*mu, nu, shifted).masses - cm.masses).cwiseAbs().maxCoeff(), 1e-12);
      const int j = trial % 8;
      DualWeights up = psi;
      up.psi[j] += 1e-3;
      const auto cu = cell_masses(*mu, nu, up);
      EXPECT_LE(cu.masses[j], cm.masses[j] + 1e-15);
      for (int k = 0; k < 8; ++k)
        if (k != j) EXPECT_GE(cu.masses[k], cm.masses[k] - 1e-15);
    }
  }
}

TEST(DualFunctional, FiniteDifferenceGradientIsResidual) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto mu = square();
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Atom> atoms;
    for (int j = 0; j < 6; ++j) atoms.push_back({Eigen::Vector2d(U(rng), U(rng)), 0.5 + U(rng) * 0.4, j});
    TargetDecomposition nu(atoms);
    DualWeights psi{0.1 * Eigen::VectorXd::NullaryExpr(6, [&] { return U(rng); })};
    const Eigen::VectorXd grad = nu.weights() - cell_masses(mu, nu, psi).masses;
    const double h = 1e-6;
    for (int j = 0; j < 6; ++j) {
      DualWeights p = psi, m = psi;
      p.psi[j] += h;
      m.psi[j] -= h;
      const double fd = (dual_functional(mu, nu, p) - dual_functional(mu, nu, m)) / (2 * h);
      EXPECT_NEAR(fd, grad[j], 1e-5);
    }
  }
}

TEST(Solver, SymmetricTwoAtoms) {
  const auto rep = solve_semidiscrete(square(), two_atoms(), 1e-10);
  EXPECT_NEAR(rep.dual.psi[0], 0.0, 1e-15);
  EXPECT_NEAR(rep.dual.psi[1], 0.0, 1e-10);
  EXPECT_LE(rep.residual, 1e-10);
}

TEST(Solver, TriangleCellsMeetAtOrigin) {
  const auto mu = SourceMeasure::polygon(hexagon());
  const auto nu = triangle();
  const auto rep = solve_semidiscrete(mu, nu, 1e-12);
  EXPECT_LE(rep.dual.psi.cwiseAbs().maxCoeff(), 1e-10);
  const auto u = potential(nu, rep.dual);
  const auto vals = u.piece_values(Eigen::Vector2d::Zero());
  EXPECT_LE(vals.maxCoeff() - vals.minCoeff(), 1e-10);
  const auto cm = cell_masses(mu, nu, rep.dual, true);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(cm.masses[j], 1.0 / 3, 1e-12);
}

TEST(Solver, RandomEightAtomsMatchLinearProgram) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const auto mu = SourceMeasure::box(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1));
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Atom> atoms;
    for (int j = 0; j < 8; ++j) atoms.push_back({Eigen::Vector2d(U(rng), U(rng)), 0.2 + U(rng), j});
    TargetDecomposition nu(atoms);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = solve_semidiscrete(mu, nu, 1e-9);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
    EXPECT_LT(rep.residual, 1e-6);
    const auto cm = cell_masses(mu, nu, rep.dual);
    EXPECT_LE((cm.masses - nu.weights()).cwiseAbs().maxCoeff(), 1e-9);
    // LP on a 100 x 100 midpoint grid
    PointSet X(2, 10000);
    for (int a = 0; a < 100; ++a)
      for (int b = 0; b < 100; ++b) X.col(a * 100 + b) << (a + 0.5) / 100, (b + 0.5) / 100;
    const auto plan = discrete_transport(bilinear_cost(X, nu.points()), Eigen::VectorXd::Constant(10000, 1e-4), nu.weights());
    const double c = transport_cost(mu, nu, rep.dual);
    EXPECT_LE(std::abs(c - plan.cost), 0.01 * std::abs(plan.cost)) << c << " vs " << plan.cost;
  }
}

TEST(Solver, ErrorsAndIterationCap) {
  EXPECT_THROW(solve_semidiscrete(square(), two_atoms(), 0.0), std::invalid_argument);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<Atom> atoms;
  for (int j = 0; j < 8; ++j) atoms.push_back({Eigen::Vector2d(U(rng), U(rng)), 0.2 + U(rng), j});
  SolverOptions opt;
  opt.max_iterations = 0;
  try {
    solve_semidiscrete(square(), TargetDecomposition(atoms), 1e-12, opt);
    FAIL();
  } catch (const ConvergenceFailure& e) {
    EXPECT_GT(e.worst_residual, 0.0);
  }
}

TEST(Solver, SampledPathInThreeDimensions) {
  const auto mu = SourceMeasure::box(Eigen::Vector3d(-1, -1, -1), Eigen::Vector3d(1, 1, 1));
  std::vector<Atom> atoms;
  for (int s : {-1, 1}) atoms.push_back({Eigen::Vector3d(0, 0, s), 0.5, s > 0});
  TargetDecomposition nu(atoms);
  SolverOptions opt;
  opt.qmc_samples = 4000;
  const auto rep = solve_semidiscrete(mu, nu, 1e-2, opt);
  EXPECT_FALSE(rep.exact);
  EXPECT_NEAR(rep.dual.psi[1], 0.0, 0.05);
  const auto cm = cell_masses(mu, nu, rep.dual, false, 4000);
  EXPECT_NEAR(cm.masses.sum(), 1.0, 1e-12);
  EXPECT_NEAR(cm.masses[0], 0.5, 3 * cm.std_error[0] + 1e-2);
}

TEST(Potential, Examples) {
  const auto u = potential(two_atoms(), zeros(2));
  EXPECT_DOUBLE_EQ(eval(u, Eigen::Vector2d(0.3, -0.7)), 0.7);
  TargetDecomposition one({{Eigen::Vector2d(2, -1), 1.0, 0}});
  EXPECT_DOUBLE_EQ(eval(potential(one, zeros(1)), Eigen::Vector2d(1, 1)), 1.0);
}

TEST(Decompose, EnvelopeAndDestinations) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Atom> atoms;
    for (int j = 0; j < 9; ++j) atoms.push_back({Eigen::Vector2d(U(rng), U(rng)), 1.0, j % 4});
    TargetDecomposition nu(atoms);
    DualWeights psi{Eigen::VectorXd::NullaryExpr(9, [&] { return U(rng); })};
    const auto parts = decompose(nu, psi);
    const auto u = potential(nu, psi);
    for (int a = 0; a < 21; ++a)
      for (int b = 0; b < 21; ++b) {
        const Eigen::Vector2d x(-1 + 0.1 * a, -1 + 0.1 * b);
        double best = -1e300;
        for (const auto& [id, f] : parts) best = std::max(best, eval(f, x));
        EXPECT_EQ(best, eval(u, x));
      }
    for (const auto& [id, f] : parts) {
      const PointSet own = nu.piece_points(id);
      for (int k = 0; k < f.num_pieces(); ++k) {
        bool found = false;
        for (Eigen::Index c = 0; c < own.cols(); ++c) found |= own.col(c) == f.slopes().col(k);
        EXPECT_TRUE(found);
      }
    }
  }
  TargetDecomposition single({{Eigen::Vector2d(0, 1), 0.5, 7}, {Eigen::Vector2d(0, -1), 0.5, 7}});
  const auto whole = decompose(single, zeros(2));
  ASSERT_EQ(whole.size(), 1u);
  EXPECT_EQ(whole.at(7).num_pieces(), 2);
}
