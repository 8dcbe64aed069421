#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "tears/convex_kernel.hpp"
#include "tears/geometry.hpp"
#include "tears/lattice.hpp"

namespace tears {

struct SeparatingFrame {
  Eigen::VectorXd normal;
  double midheight = 0.0;  // a0
  double spacing = 0.0;    // d0
  Eigen::MatrixXd rotation;

  static SeparatingFrame make(const Eigen::VectorXd& normal, double midheight, double spacing);
  int dim() const { return static_cast<int>(normal.size()); }
  Eigen::VectorXd to_frame(const Eigen::VectorXd& x) const { return rotation * x; }
  Eigen::VectorXd from_frame(const Eigen::VectorXd& y) const { return rotation.transpose() * y; }
};

// Maximum-margin frame: the hull-to-hull nearest pair fixes normal, midheight and spacing.
SeparatingFrame find_separating_frame(const PointSet& plus_cloud, const PointSet& minus_cloud);

// Projected lattice over x' (rotated coordinates) plus the fiber window used for sampled inputs.
struct TearLattice {
  Latticed lattice;  // (n-1)-dimensional
  double t_lo = -1.0;
  double t_hi = 1.0;
  int fiber_nodes = 257;

  double t_step() const { return (t_hi - t_lo) / static_cast<double>(fiber_nodes - 1); }
};

// Rotated bounding box of [lo, hi] (original coordinates).
TearLattice tear_lattice_for_box(const SeparatingFrame& frame, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                 int nodes_per_axis, int fiber_nodes = 257);

struct TearGraph {
  SeparatingFrame frame;
  TearLattice lattice;
  std::vector<double> h_values;
  std::vector<double> h_plus;
  std::vector<double> h_minus;
  std::vector<char> finite;
  std::vector<char> boundary_hit;  // fiber argmax pinned to the sampled window
  double theta_min = 0.0;
  double tan_theta_min = 0.0;
  double measured_lip = 0.0;
  double h_resolution = 0.0;  // 0 for exact conjugates, one fiber step for sampled ones

  // multilinear interpolation over the projected lattice
  double h_at(const Eigen::VectorXd& x_prime) const;
};

// h(x') by the explicit formula with exact fiber conjugates; no lattice involved.
struct TearPoint {
  double h = 0.0;
  double h_plus = 0.0;
  double h_minus = 0.0;
  bool finite = true;
};
TearPoint tear_height_at(const MaxAffine& u_plus, const MaxAffine& u_minus, const SeparatingFrame& frame,
                         const Eigen::VectorXd& x_prime);

// Subgradient clouds used for separation checks and theta_min.
PointSet subgradient_cloud(const ConvexFunction& f);

TearGraph tear_height(const ConvexFunction& u_plus, const ConvexFunction& u_minus, const SeparatingFrame& frame,
                      const TearLattice& lattice);

enum class Side { SIGMA, C_PLUS, C_MINUS };
const char* side_name(Side s);

Side classify(const ConvexFunction& u_plus, const ConvexFunction& u_minus, const TearGraph& tear,
              const Eigen::VectorXd& x, double tol = -1.0);

struct ThetaEstimate {
  double theta_min = 0.0;
  double tan_theta_min = 0.0;
};
ThetaEstimate theta_min(const PointSet& plus_cloud, const PointSet& minus_cloud, const SeparatingFrame& frame);

struct LipschitzReport {
  double measured_lip = 0.0;
  double tan_theta_min = 0.0;
  double diam_bound = 0.0;
  double anisotropy = 0.0;  // h resolution over the finest projected step
  double tolerance = 0.0;
  bool pass = false;
  std::size_t witness_from = 0;
  std::size_t witness_to = 0;
  std::string message;
};

LipschitzReport lipschitz_certificate(const TearGraph& tear, const PointSet& plus_cloud, const PointSet& minus_cloud);

struct DCReport {
  double min_second_diff_plus = 0.0;
  double min_second_diff_minus = 0.0;
  double scale = 1.0;
  bool pass = false;
};

// Discrete convexity of h+ and h- along lattice axes and diagonals.
DCReport dc_structure(const TearGraph& tear, double rel_tol);

}  // namespace tears
