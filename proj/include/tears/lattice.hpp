#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "tears/errors.hpp"

namespace tears {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Regular lattice; flat index runs with the last axis fastest.
template <typename Scalar>
struct Lattice {
  VectorX<Scalar> origin;
  VectorX<Scalar> spacing;
  std::vector<int> dims;

  Lattice() = default;
  Lattice(VectorX<Scalar> origin_, VectorX<Scalar> spacing_, std::vector<int> dims_)
      : origin(std::move(origin_)), spacing(std::move(spacing_)), dims(std::move(dims_)) {
    if (origin.size() != spacing.size() || static_cast<std::size_t>(origin.size()) != dims.size())
      throw ArgumentError("lattice: origin, spacing and dims disagree in dimension");
    for (std::size_t a = 0; a < dims.size(); ++a) {
      if (dims[a] < 1) throw ArgumentError("lattice: every axis needs at least one node");
      if (!(spacing[a] > Scalar(0))) throw ArgumentError("lattice: spacing must be positive");
    }
  }

  // nodes_per_axis nodes spanning [lo, hi] on each axis
  static Lattice box(const VectorX<Scalar>& lo, const VectorX<Scalar>& hi, int nodes_per_axis) {
    const Eigen::Index n = lo.size();
    VectorX<Scalar> h(n);
    for (Eigen::Index a = 0; a < n; ++a)
      h[a] = nodes_per_axis > 1 ? (hi[a] - lo[a]) / Scalar(nodes_per_axis - 1) : Scalar(1);
    return Lattice(lo, h, std::vector<int>(static_cast<std::size_t>(n), nodes_per_axis));
  }

  int dim() const { return static_cast<int>(dims.size()); }

  std::size_t size() const {
    std::size_t s = 1;
    for (int d : dims) s *= static_cast<std::size_t>(d);
    return s;
  }

  std::vector<int> unflatten(std::size_t flat) const {
    std::vector<int> idx(dims.size());
    for (std::size_t a = dims.size(); a-- > 0;) {
      idx[a] = static_cast<int>(flat % static_cast<std::size_t>(dims[a]));
      flat /= static_cast<std::size_t>(dims[a]);
    }
    return idx;
  }

  std::size_t flatten(const std::vector<int>& idx) const {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < dims.size(); ++a) flat = flat * static_cast<std::size_t>(dims[a]) + static_cast<std::size_t>(idx[a]);
    return flat;
  }

  VectorX<Scalar> node(const std::vector<int>& idx) const {
    VectorX<Scalar> x(origin.size());
    for (Eigen::Index a = 0; a < origin.size(); ++a) x[a] = origin[a] + spacing[a] * Scalar(idx[static_cast<std::size_t>(a)]);
    return x;
  }

  VectorX<Scalar> node(std::size_t flat) const { return node(unflatten(flat)); }

  VectorX<Scalar> upper() const {
    VectorX<Scalar> hi(origin.size());
    for (Eigen::Index a = 0; a < origin.size(); ++a) hi[a] = origin[a] + spacing[a] * Scalar(dims[static_cast<std::size_t>(a)] - 1);
    return hi;
  }

  Scalar max_step() const { return spacing.size() ? spacing.maxCoeff() : Scalar(0); }
  Scalar min_step() const { return spacing.size() ? spacing.minCoeff() : Scalar(0); }

  bool contains(const VectorX<Scalar>& x, Scalar slack = Scalar(0)) const {
    const VectorX<Scalar> hi = upper();
    for (Eigen::Index a = 0; a < origin.size(); ++a)
      if (x[a] < origin[a] - slack || x[a] > hi[a] + slack) return false;
    return true;
  }
};

// Multilinear interpolation of node values; throws DomainError outside the box.
template <typename Scalar>
Scalar multilinear(const Lattice<Scalar>& L, const std::vector<Scalar>& values, const VectorX<Scalar>& x) {
  const int n = L.dim();
  std::vector<int> base(static_cast<std::size_t>(n));
  std::vector<Scalar> frac(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    const auto A = static_cast<std::size_t>(a);
    const Scalar u = (x[a] - L.origin[a]) / L.spacing[a];
    const Scalar top = Scalar(L.dims[A] - 1);
    const Scalar slack = Scalar(1e-9);
    if (!(u >= -slack && u <= top + slack)) throw DomainError("lattice interpolation outside the box");
    const Scalar uc = std::clamp(u, Scalar(0), top);
    int i = static_cast<int>(std::floor(uc));
    if (i >= L.dims[A] - 1) i = std::max(L.dims[A] - 2, 0);
    base[A] = i;
    frac[A] = L.dims[A] > 1 ? uc - Scalar(i) : Scalar(0);
  }
  Scalar acc = Scalar(0);
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int corner = 0; corner < (1 << n); ++corner) {
    Scalar w = Scalar(1);
    for (int a = 0; a < n && w != Scalar(0); ++a) {
      const auto A = static_cast<std::size_t>(a);
      idx[A] = base[A];
      if (corner & (1 << a)) {
        if (L.dims[A] == 1) w = Scalar(0);
        idx[A] += 1;
        w *= frac[A];
      } else {
        w *= Scalar(1) - frac[A];
      }
    }
    if (w != Scalar(0)) acc += w * values[L.flatten(idx)];
  }
  return acc;
}

using Latticed = Lattice<double>;

}  // namespace tears
