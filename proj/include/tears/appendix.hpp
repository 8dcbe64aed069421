#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tears/lattice.hpp"
#include "tears/ot_solver.hpp"

namespace tears {

// Four C^1 convex potentials on the parabolic lens D whose envelope has a multiplicity-4 point at the origin.
class AppendixScenario {
 public:
  explicit AppendixScenario(double r0 = 0.1);

  double r0() const { return r0_; }
  double r1() const { return r1_; }  // x-coordinate where y = x meets y = r0^2 - x^2
  double r2() const { return r2_; }  // x-coordinate where y = -sqrt(x) meets y = x^2 - r0^2

  double value(int i, const Eigen::Vector2d& p) const;  // i in 1..4
  Eigen::Vector2d gradient(int i, const Eigen::Vector2d& p) const;
  double envelope(const Eigen::Vector2d& p) const;
  int argmax(const Eigen::Vector2d& p, double* gap = nullptr) const;  // gap: top minus second value
  int region(const Eigen::Vector2d& p) const;  // closed-form region formulas (0 outside D)
  bool in_domain(const Eigen::Vector2d& p, double slack = 0.0) const;

  Eigen::Vector2d lower() const { return {-r0_, -r0_ * r0_}; }
  Eigen::Vector2d upper() const { return {r0_, r0_ * r0_}; }
  SourceMeasure source(int vertices_per_arc = 64) const;  // inscribed polygon of D

  // Pushforward of the uniform measure on D under the gradient, atomized per block and region.
  TargetDecomposition target(int blocks = 24, int samples = 8, int u4_blocks = 12) const;
  // Warm start: psi_j = <x_b, y_j> - u_i(x_b) at the block centroid x_b of each atom.
  const Eigen::VectorXd& warm_start() const { return warm_; }

  struct Inequality {
    std::string name;
    double value;
    bool holds;
  };
  std::vector<Inequality> smallness() const;

 private:
  double r0_, r1_, r2_;
  mutable Eigen::VectorXd warm_;
};

struct CurveCheck {
  std::string name;
  int piece = 0;
  int expected_sign = 0;  // sign of the second derivative of the image curve
  int samples = 0;
  int violations = 0;
  double worst = 0.0;     // second derivative closest to the wrong sign
  Eigen::Vector2d witness = Eigen::Vector2d::Zero();
};

struct AppendixReport {
  double r0 = 0.0;
  std::vector<AppendixScenario::Inequality> smallness;
  bool smallness_ok = false;
  double convexity_min = 0.0;  // smallest discrete second difference of any u_i over D
  bool convex_ok = false;
  std::array<double, 4> origin_values{};
  bool coincidence_ok = false;
  double region_agreement = 0.0;
  std::size_t region_nodes = 0;
  std::vector<Eigen::Vector2d> region_witnesses;
  bool regions_ok = false;
  std::vector<CurveCheck> curves;
  bool curves_ok = false;
  int atoms = 0;
  int base_max_multiplicity = 0;  // active-set multiplicity of the closed-form envelope
  std::size_t base_nodes = 0;     // nodes where it reaches 4
  Eigen::Vector2d base_point = Eigen::Vector2d::Zero();
  int base_discrete_multiplicity = 0;  // delta-multiplicity of the atomized, unshifted problem
  double delta = 0.0;
  std::vector<int> shifts;                 // j values
  std::vector<int> shifted_max_multiplicity;
  std::vector<Eigen::Vector2d> shift_witnesses;
  bool shift_ok = false;
  bool pass = false;
  double seconds = 0.0;
};

struct AppendixOptions {
  double r0 = 0.1;
  int lattice = 512;
  double tol = 1e-12;
  double delta = 0.01;
  std::vector<int> shifts{1, 2, 4};
  int blocks = 24;
  int u4_blocks = 12;
  int curve_samples = 400;
  double solver_tol = 1e-10;
};

AppendixReport appendix_verify(const AppendixOptions& options = {});

// Target with atoms of `piece` moved by `shift`.
TargetDecomposition shift_piece(const TargetDecomposition& nu, int piece, const Eigen::VectorXd& shift);

}  // namespace tears
