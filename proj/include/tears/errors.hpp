#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tears {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NonConvexInput : public std::invalid_argument {
 public:
  NonConvexInput(const std::string& what, long index, double second_difference)
      : std::invalid_argument(what), index(index), second_difference(second_difference) {}
  long index;
  double second_difference;
};

// Clouds that admit no strictly separating hyperplane; witness realises the hull distance.
class NoSeparation : public std::runtime_error {
 public:
  NoSeparation(const std::string& what, Eigen::VectorXd plus_witness, Eigen::VectorXd minus_witness,
               double distance)
      : std::runtime_error(what),
        plus_witness(std::move(plus_witness)),
        minus_witness(std::move(minus_witness)),
        distance(distance) {}
  Eigen::VectorXd plus_witness;
  Eigen::VectorXd minus_witness;
  double distance;
};

class SeparationViolation : public std::runtime_error {
 public:
  SeparationViolation(const std::string& what, Eigen::VectorXd point, Eigen::VectorXd slope)
      : std::runtime_error(what), point(std::move(point)), slope(std::move(slope)) {}
  Eigen::VectorXd point;
  Eigen::VectorXd slope;
};

class ConvergenceFailure : public std::runtime_error {
 public:
  ConvergenceFailure(const std::string& what, double worst_residual, int iterations)
      : std::runtime_error(what), worst_residual(worst_residual), iterations(iterations) {}
  double worst_residual;
  int iterations;
};

class CertificateFailure : public std::runtime_error {
 public:
  CertificateFailure(const std::string& what, std::vector<Eigen::VectorXd> witnesses)
      : std::runtime_error(what), witnesses(std::move(witnesses)) {}
  std::vector<Eigen::VectorXd> witnesses;
};

}  // namespace tears
