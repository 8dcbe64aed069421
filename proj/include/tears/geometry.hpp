#pragma once

#include <vector>

#include <Eigen/Core>

namespace tears {

// Point sets are stored column-wise: an n x m matrix holds m points of R^n.
using PointSet = Eigen::MatrixXd;

struct HullDistance {
  double distance = 0.0;
  Eigen::VectorXd a;  // closest point of hull(A)
  Eigen::VectorXd b;  // closest point of hull(B)
};

// Euclidean distance between conv(A) and conv(B) (GJK on the Minkowski difference).
HullDistance hull_distance(const PointSet& A, const PointSet& B);
double point_hull_distance(const Eigen::VectorXd& x, const PointSet& A);

// Indices of the extreme points of conv(P); duplicates collapse to their first occurrence.
std::vector<int> extreme_points(const PointSet& P, double tol = 1e-12);
PointSet select_columns(const PointSet& P, const std::vector<int>& cols);

int affine_rank(const PointSet& P, double tol = 1e-9);
double diameter(const PointSet& P);

// Orthogonal Q with Q * normal = e_n (Householder reflection, identity when already aligned).
Eigen::MatrixXd householder_to_last_axis(const Eigen::VectorXd& normal);

struct ConvexPolygon {
  std::vector<Eigen::Vector2d> vertices;  // counter-clockwise
  std::vector<int> edge_labels;           // edge i joins vertex i to i+1; -1 marks the original boundary

  static ConvexPolygon from_vertices(std::vector<Eigen::Vector2d> vertices);
  static ConvexPolygon rectangle(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi);
  bool empty() const { return vertices.size() < 3; }
};

// Intersection with the half-plane <a, x> <= b; the new edge carries `label`.
ConvexPolygon clip(const ConvexPolygon& poly, const Eigen::Vector2d& a, double b, int label);
double area(const ConvexPolygon& poly);
Eigen::Vector2d first_moment(const ConvexPolygon& poly);  // integral of x over the polygon
bool contains(const ConvexPolygon& poly, const Eigen::Vector2d& x, double slack = 0.0);
ConvexPolygon convex_hull_2d(const std::vector<Eigen::Vector2d>& pts);

}  // namespace tears
