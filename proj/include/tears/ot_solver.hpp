#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tears/convex_kernel.hpp"
#include "tears/geometry.hpp"

namespace tears {

struct SourcePiece {
  ConvexPolygon polygon;
  double density = 1.0;
};

// Absolutely continuous probability measure: a convex support with a constant or tabulated density.
class SourceMeasure {
 public:
  static SourceMeasure polygon(const std::vector<Eigen::Vector2d>& vertices);
  static SourceMeasure box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
  // density given per cell of a regular grid over [lo, hi] (row-major, last axis fastest)
  static SourceMeasure box_table(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const std::vector<int>& cells,
                                 const std::vector<double>& density);
  static SourceMeasure polytope(const PointSet& vertices);

  int dim() const { return dim_; }
  const Eigen::VectorXd& lower() const { return lo_; }
  const Eigen::VectorXd& upper() const { return hi_; }
  // exact convex pieces (2D only)
  const std::vector<SourcePiece>& pieces() const { return pieces_; }
  const ConvexPolygon& support() const { return support_; }  // 2D only
  bool contains(const Eigen::VectorXd& x, double slack = 0.0) const;
  double density(const Eigen::VectorXd& x) const;
  double total_mass() const;
  Eigen::VectorXd interior_point() const;

  // Quasi-random sample (Halton with a seeded Cranley-Patterson shift), weights summing to 1.
  void sample(int count, std::uint64_t seed, PointSet& points, Eigen::VectorXd& weights) const;

 private:
  int dim_ = 0;
  Eigen::VectorXd lo_, hi_;
  std::vector<SourcePiece> pieces_;
  ConvexPolygon support_;  // 2D support
  PointSet hull_;  // vertex description for d >= 3 polytopes (empty for boxes)
  std::vector<int> cells_;
  std::vector<double> table_;
  double norm_ = 1.0;
};

struct Atom {
  Eigen::VectorXd point;
  double weight = 0.0;
  int piece = 0;
};

class TargetDecomposition {
 public:
  TargetDecomposition() = default;
  // validates, and rescales weights to sum to 1 when `normalize` is set
  TargetDecomposition(std::vector<Atom> atoms, std::map<int, std::string> labels = {}, bool normalize = true);

  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::map<int, std::string>& labels() const { return labels_; }
  int dim() const { return atoms_.empty() ? 0 : static_cast<int>(atoms_.front().point.size()); }
  int size() const { return static_cast<int>(atoms_.size()); }
  PointSet points() const;
  Eigen::VectorXd weights() const;
  std::vector<int> piece_ids() const;
  std::vector<int> atoms_of(int piece) const;
  PointSet piece_points(int piece) const;
  double piece_weight(int piece) const;

 private:
  std::vector<Atom> atoms_;
  std::map<int, std::string> labels_;
};

struct DualWeights {
  Eigen::VectorXd psi;
};

struct CellMasses {
  Eigen::VectorXd masses;
  PointSet moments;           // integral of x over each cell (column j)
  Eigen::VectorXd std_error;  // zero for exact 2D clipping
  Eigen::MatrixXd jacobian;   // d m_j / d psi_k (2D only)
  std::vector<std::vector<ConvexPolygon>> cells;  // 2D: cell of atom j within each source piece
  bool exact = true;
};

CellMasses cell_masses(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi,
                       bool keep_cells = false, int samples = 20000, std::uint64_t seed = 1);

struct SolverOptions {
  int max_iterations = 200;
  int qmc_samples = 20000;
  std::uint64_t seed = 1;
  Eigen::VectorXd initial;  // warm start; ignored unless every cell is nonempty
};

struct SolveReport {
  DualWeights dual;
  Eigen::VectorXd masses;
  double residual = 0.0;  // max_j |m_j - w_j|
  int iterations = 0;
  std::vector<double> history;
  bool exact = true;
};

SolveReport solve_semidiscrete(const SourceMeasure& mu, const TargetDecomposition& nu, double tol,
                               const SolverOptions& options = {});

MaxAffine potential(const TargetDecomposition& nu, const DualWeights& psi);
std::map<int, MaxAffine> decompose(const TargetDecomposition& nu, const DualWeights& psi);

// integral of c(x, T(x)) = -<x, T(x)> against mu for the map induced by psi
double transport_cost(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi);

// Dual functional G(psi) = int max_j(<x, y_j> - psi_j) dmu + sum_j w_j psi_j (2D exact).
double dual_functional(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi);

}  // namespace tears
