#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tears/convex_kernel.hpp"
#include "tears/geometry.hpp"
#include "tears/lattice.hpp"
#include "tears/ot_solver.hpp"

namespace tears {

// A finite family of convex functions u_i indexed by piece id, evaluated together.
struct PieceFamily {
  std::vector<int> ids;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> values;  // values in `ids` order

  static PieceFamily from(const std::map<int, MaxAffine>& pieces);
  static PieceFamily from(const std::map<int, ConvexFunction>& pieces);
  int size() const { return static_cast<int>(ids.size()); }
  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;
};

struct MultiplicityField {
  Latticed lattice;
  std::vector<int> multiplicity;         // 0 at nodes outside the support
  std::vector<std::vector<int>> active;  // piece ids, sorted
  std::vector<char> inside;
  double tol = 0.0;

  int max_multiplicity() const;
  std::vector<std::size_t> nodes_with(int k) const;
  std::vector<std::size_t> nodes_at_least(int k) const;
  bool is_active(std::size_t node, int piece) const;
};

using SupportMask = std::function<bool(const Eigen::VectorXd&)>;

// Active set {i : u_i(x) >= max_j u_j(x) - tol} at every node.
MultiplicityField multiplicity_field(const PieceFamily& pieces, const Latticed& lattice, double tol,
                                     const SupportMask& mask = {});

// Throws PreconditionError naming the first overlapping pair of piece hulls.
void require_disjoint_hulls(const std::map<int, PointSet>& hulls);

// Exact power diagram of a 2D semidiscrete potential restricted to the source support.
struct PowerVertex {
  Eigen::Vector2d point;
  std::vector<int> atoms;  // sorted
};
struct PowerDiagram {
  std::vector<ConvexPolygon> cells;  // per atom, edge labels name the neighbouring atom (-1: support boundary)
  std::vector<PowerVertex> vertices;
};
PowerDiagram power_diagram(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi);

// Multiplicity of the feature whose subdifferential is the hull of `atoms`: the number of pieces of
// `reference` within eta of it (eta = 0 and reference = nu counts the pieces owning the atoms).
int feature_multiplicity(const TargetDecomposition& nu, const std::vector<int>& atoms, double eta,
                         const TargetDecomposition& reference, std::vector<int>* pieces = nullptr);

// Node value is the largest feature multiplicity over the closed lattice cell of the node (2D).
MultiplicityField cell_multiplicity_field(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi,
                                          const Latticed& lattice, double eta = 0.0,
                                          const TargetDecomposition* reference = nullptr);

// Connected components (full-neighbourhood adjacency) of a node set.
std::vector<std::vector<std::size_t>> lattice_components(const Latticed& lattice, const std::vector<std::size_t>& nodes);
// Largest node-to-node distance measured in lattice steps (per-axis spacing).
double cluster_diameter_steps(const Latticed& lattice, const std::vector<std::size_t>& nodes);

struct CoincidenceSet {
  std::vector<int> subset;
  std::vector<std::size_t> sigma;     // pairwise coincidence u_i = u_j for i, j in subset
  std::vector<std::size_t> sigma_up;  // u = u_i for every i in subset
  std::vector<std::size_t> discrepancy;
  std::vector<int> graph_axes;    // solved coordinates of the fitted graph
  double graph_lipschitz = 0.0;   // over the remaining coordinates
  double tear_deviation_steps = -1.0;  // |subset| = 2 with max-affine pieces: distance to the explicit tear
  bool tear_agrees = true;
};

CoincidenceSet coincidence_set(const PieceFamily& pieces, const std::vector<int>& subset, const Latticed& lattice,
                               double tol, const SupportMask& mask = {});
CoincidenceSet coincidence_set(const std::map<int, MaxAffine>& pieces, const std::vector<int>& subset,
                               const Latticed& lattice, double tol, const SupportMask& mask = {});

struct IndependenceReport {
  std::vector<int> subset;
  bool independent = false;
  bool certified = true;  // false when neither a separating projection nor a dependent selection was found
  std::vector<Eigen::VectorXd> selection;  // one point per set spanning a low-dimensional flat (dependent)
  Eigen::MatrixXd projection;              // rows spanning the certifying projection (independent)
  std::string message;
};

IndependenceReport affine_independence(const std::vector<PointSet>& hulls, int k = -1);

struct UniqueMaxReport {
  bool pass = true;
  bool vacuous = false;
  int clusters = 0;
  double diameter_steps = 0.0;
  std::vector<Eigen::VectorXd> counterexamples;
  std::string message;
};

UniqueMaxReport unique_max_multiplicity(const MultiplicityField& field, const std::vector<PointSet>& piece_hulls);

struct CoincidentRoot {
  Eigen::VectorXd x;
  double residual = 0.0;  // max_i |x_i - h_i(x^i)|
  int iterations = 0;
  bool converged = false;
  bool from_grid = false;
};

using TearFunction = std::function<double(const Eigen::VectorXd&)>;  // of the n-1 remaining coordinates

struct RootOptions {
  double tol = 1e-10;
  int max_iterations = 500;
  double damping = 0.5;
  int grid_nodes = 201;        // fallback grid per solved axis
  int precondition_samples = 400;
  std::uint64_t seed = 1;
};

// Zero of x_i = h_i(x^i), i < k, with x_{k..n-1} held at `tail`.
CoincidentRoot find_coincident_root(const std::vector<TearFunction>& h, int n, const Eigen::VectorXd& tail = {},
                                    const RootOptions& options = {});

// Tear function of a separated pair along coordinate `axis`: the root in x_axis of plus - minus.
TearFunction axis_tear(const MaxAffine& plus, const MaxAffine& minus, int axis);
// Boundary hypotheses of the coincident-roots setting on [-1,1]^n, by sampling the faces.
bool check_boundary_signs(const MaxAffine& plus, const MaxAffine& minus, int axis, int samples, std::uint64_t seed,
                          Eigen::VectorXd* witness = nullptr);

struct ConnectivityReport {
  bool connected = true;
  std::vector<std::vector<std::size_t>> components;
};

// Lattice connectivity of {u_i = u} within the support.
ConnectivityReport connectivity_check(const MultiplicityField& field, int piece);
ConnectivityReport connectivity_of(const Latticed& lattice, const std::vector<std::size_t>& nodes);

}  // namespace tears
