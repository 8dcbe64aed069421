#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tears/lattice.hpp"
#include "tears/ot_solver.hpp"
#include "tears/singularity_analyzer.hpp"

namespace tears {

// Rigid per-piece translations, each of norm at most eta.
struct Perturbation {
  std::map<int, Eigen::VectorXd> translations;
  double eta = 0.0;

  static Perturbation random(const TargetDecomposition& nu, double eta, std::uint64_t seed);  // norms < eta
};

struct PerturbedTarget {
  TargetDecomposition nu;
  double certified = 0.0;    // largest translation norm (a W_inf bound via the translation coupling)
  double bottleneck = -1.0;  // W_inf between the atom measures, when verified
};

// Throws ArgumentError for an invalid perturbation and PreconditionError when translated pieces overlap.
PerturbedTarget perturb_winfty(const TargetDecomposition& nu, const Perturbation& p, bool verify = true);

struct StabilityOptions {
  double eps = 0.1;
  double eta = 0.01;
  std::vector<std::uint64_t> seeds;
  std::vector<Perturbation> perturbations;  // used instead of seeded random ones when nonempty
  Latticed lattice;
  double solver_tol = 1e-10;
  bool verify_winfty = true;
};

struct StabilityRun {
  std::uint64_t seed = 0;
  bool found = false;
  double displacement = -1.0;  // from x0 to the nearest qualifying power-diagram feature (-1 if none)
  double certified = 0.0;
  double bottleneck = -1.0;
  Eigen::VectorXd location;
  int max_multiplicity = 0;
  std::string note;
};

struct StabilityReport {
  std::vector<int> subset;
  int k = 0;
  bool independent = false;
  std::string independence;
  Eigen::VectorXd x0;
  bool base_ok = false;
  std::vector<StabilityRun> runs;
  double median_displacement = -1.0;
  bool pass = false;
  std::string message;
};

StabilityReport stability_experiment(const SourceMeasure& mu, const TargetDecomposition& nu,
                                     const std::vector<int>& subset, const StabilityOptions& options);

using ScalarField = std::function<double(const Eigen::VectorXd&)>;
using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct EnvelopePiece {
  ScalarField value;
  VectorField gradient;  // required for the pieces active at x0
};

struct PerturbationStep {
  double magnitude = 0.0;
  std::vector<ScalarField> pieces;  // same order as the limit pieces
};

struct ProbeOptions {
  double active_tol = 1e-9;
  double fd_step = 1e-6;
  Latticed omega0;         // compact set for the subdifferential-convergence check; default: box of radius eps
  double eta0 = -1.0;      // initial dilation; default eps / 2
  int face_samples = 9;    // per free axis of each face
  double touch_tol = 1e-8;
  RootOptions root;
};

struct ProbeStep {
  double magnitude = 0.0;
  double excess = 0.0;  // subdifferential excess over omega0
  bool root_found = false;
  bool touching = false;
  Eigen::VectorXd point;
  double distance = -1.0;
  double residual = 0.0;
  double eta = 0.0;
  std::string note;
};

struct ProbeReport {
  std::vector<int> active;
  int k = 0;
  bool c1 = false;
  bool rank_ok = false;
  bool subdiff_ok = false;
  double final_excess = 0.0;
  Eigen::VectorXd witness;            // node of the largest excess at the last step
  Eigen::VectorXd witness_lo, witness_hi;  // one-sided difference quotients of the perturbed piece there
  Eigen::VectorXd limit_lo, limit_hi;      // eps-enlarged one-sided quotients of the limit piece
  std::vector<ProbeStep> steps;
  double converged_from = -1.0;  // largest magnitude from which every later step finds a touching root
  bool monotone = false;  // distances along that tail
  int graph_dimension = -1;
  bool pass = false;
  std::string message;
};

ProbeReport envelope_stability_probe(const std::vector<EnvelopePiece>& pieces, const std::vector<PerturbationStep>& schedule,
                                     const Eigen::VectorXd& x0, double eps, const ProbeOptions& options = {});

}  // namespace tears
