#include "tears/scenarios.hpp"

#include <cmath>
#include <random>

#include "tears/errors.hpp"

namespace tears {

std::vector<Eigen::Vector2d> unit_hexagon() {
  std::vector<Eigen::Vector2d> v;
  for (int k = 0; k < 6; ++k) v.emplace_back(std::cos(M_PI * k / 3), std::sin(M_PI * k / 3));
  return v;
}

BuiltinScenario two_atoms_scenario() {
  std::vector<Atom> atoms{{Eigen::Vector2d(0, 1), 0.5, 0}, {Eigen::Vector2d(0, -1), 0.5, 1}};
  return {SourceMeasure::box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)),
          TargetDecomposition(atoms, {{0, "upper"}, {1, "lower"}})};
}

BuiltinScenario triangle_scenario() {
  std::vector<Atom> atoms;
  for (int k = 0; k < 3; ++k) {
    const double t = M_PI / 2 + 2 * M_PI * k / 3;
    atoms.push_back({Eigen::Vector2d(std::cos(t), std::sin(t)), 1.0 / 3, k});
  }
  return {SourceMeasure::polygon(unit_hexagon()), TargetDecomposition(atoms)};
}

BuiltinScenario random_k_pieces_scenario(int k, std::uint64_t seed, int per_piece, double radius) {
  if (k < 2 || per_piece < 1 || !(radius > 0.0)) throw ArgumentError("random-k-pieces: need k >= 2 and positive sizes");
  if (radius >= std::sin(M_PI / k) / std::sqrt(2.0)) throw ArgumentError("random-k-pieces: radius too large for disjoint pieces");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const double rot = M_PI * U(rng);
  std::vector<Atom> atoms;
  for (int p = 0; p < k; ++p) {
    const double t = rot + 2 * M_PI * p / k;
    const Eigen::Vector2d c(std::cos(t), std::sin(t));
    for (int a = 0; a < per_piece; ++a)
      atoms.push_back({c + radius * Eigen::Vector2d(U(rng), U(rng)), 0.5 + 0.5 * (U(rng) + 1), p});
  }
  return {SourceMeasure::box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)), TargetDecomposition(atoms)};
}

}  // namespace tears
