#pragma once

#include <Eigen/Core>

#include "tears/geometry.hpp"

namespace tears {

struct DiscretePlan {
  Eigen::MatrixXd flow;  // sources x targets
  double cost = 0.0;
  Eigen::VectorXd psi;  // target potentials: argmin_j c(s, j) + psi_j is optimal for every source
};

// Exact discrete optimal transport for a cost matrix (sources x targets) by successive shortest
// paths on the graph collapsed onto the targets; fractional flows. Intended for few targets.
DiscretePlan discrete_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& source_mass,
                                const Eigen::VectorXd& target_mass);

Eigen::MatrixXd bilinear_cost(const PointSet& sources, const PointSet& targets);

// W_infinity between two discrete measures: the least t admitting a coupling supported on pairs
// at distance <= t (threshold search with a max-flow feasibility test).
double bottleneck_distance(const PointSet& a, const Eigen::VectorXd& wa, const PointSet& b, const Eigen::VectorXd& wb,
                           double mass_tol = 1e-9);

}  // namespace tears
