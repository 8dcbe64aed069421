#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "tears/ot_solver.hpp"

namespace tears {

// Regular hexagon of circumradius 1 centred at the origin.
std::vector<Eigen::Vector2d> unit_hexagon();

struct BuiltinScenario {
  SourceMeasure mu;
  TargetDecomposition nu;
};

// Uniform square [-1,1]^2 to atoms (0, 1) and (0, -1) of mass 1/2; the tear is {y = 0}.
BuiltinScenario two_atoms_scenario();
// Uniform hexagon to three atoms on the unit circle at 90, 210 and 330 degrees; triple point at the origin.
BuiltinScenario triangle_scenario();
// Uniform square to k pieces of `per_piece` atoms each, clustered around the vertices of a regular
// k-gon with a random rotation; pieces stay pairwise disjoint.
BuiltinScenario random_k_pieces_scenario(int k, std::uint64_t seed, int per_piece = 3, double radius = 0.15);

}  // namespace tears
