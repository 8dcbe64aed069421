#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "tears/errors.hpp"
#include "tears/geometry.hpp"
#include "tears/lattice.hpp"

namespace tears {

// max_k <slopes.col(k), x> + intercepts[k]
template <typename Scalar>
class MaxAffineFunction {
 public:
  MaxAffineFunction() = default;
  MaxAffineFunction(MatrixX<Scalar> slopes, VectorX<Scalar> intercepts) {
    if (slopes.cols() == 0) throw ArgumentError("max-affine function needs at least one piece");
    if (slopes.cols() != intercepts.size()) throw ArgumentError("slope and intercept counts differ");
    if (slopes.rows() == 0) throw ArgumentError("ambient dimension must be positive");
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < slopes.cols(); ++k) {
      bool dup = false;
      for (Eigen::Index j : keep)
        if (intercepts[j] == intercepts[k] && slopes.col(j) == slopes.col(k)) {
          dup = true;
          break;
        }
      if (!dup) keep.push_back(k);
    }
    slopes_.resize(slopes.rows(), static_cast<Eigen::Index>(keep.size()));
    intercepts_.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
      slopes_.col(static_cast<Eigen::Index>(j)) = slopes.col(keep[j]);
      intercepts_[static_cast<Eigen::Index>(j)] = intercepts[keep[j]];
    }
  }

  static MaxAffineFunction affine(const VectorX<Scalar>& slope, Scalar intercept) {
    MatrixX<Scalar> s = slope;
    VectorX<Scalar> b(1);
    b[0] = intercept;
    return MaxAffineFunction(s, b);
  }

  int ambient_dim() const { return static_cast<int>(slopes_.rows()); }
  int num_pieces() const { return static_cast<int>(slopes_.cols()); }
  const MatrixX<Scalar>& slopes() const { return slopes_; }
  const VectorX<Scalar>& intercepts() const { return intercepts_; }

  VectorX<Scalar> piece_values(const VectorX<Scalar>& x) const {
    return slopes_.transpose() * x + intercepts_;
  }

  // Same function precomposed with y -> Q^T y, i.e. expressed in rotated coordinates y = Q x.
  MaxAffineFunction rotated(const MatrixX<Scalar>& Q) const { return MaxAffineFunction(Q * slopes_, intercepts_); }

 private:
  MatrixX<Scalar> slopes_;
  VectorX<Scalar> intercepts_;
};

// Multilinear interpolant of lattice samples over the closed box of the lattice.
template <typename Scalar>
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(Lattice<Scalar> lattice, std::vector<Scalar> values)
      : lattice_(std::move(lattice)), values_(std::move(values)) {
    if (values_.size() != lattice_.size()) throw ArgumentError("grid function: value count does not match lattice");
    for (Scalar v : values_)
      if (!std::isfinite(static_cast<double>(v))) throw ArgumentError("grid function: values must be finite");
  }

  template <typename F>
  static GridFunction sample(const Lattice<Scalar>& lattice, F&& f) {
    std::vector<Scalar> v(lattice.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(lattice.node(i));
    return GridFunction(lattice, std::move(v));
  }

  const Lattice<Scalar>& lattice() const { return lattice_; }
  const std::vector<Scalar>& values() const { return values_; }
  int ambient_dim() const { return lattice_.dim(); }
  bool convexity_certified() const { return convex_; }

  struct ConvexityReport {
    bool convex = true;
    Scalar worst = Scalar(0);  // most negative normalised second difference
    std::size_t witness = 0;
  };

  // Second differences along every axis and every pair diagonal e_a +- e_b.
  ConvexityReport certify_convexity(Scalar tol) {
    ConvexityReport rep;
    const int n = lattice_.dim();
    std::vector<std::vector<int>> dirs;
    for (int a = 0; a < n; ++a) {
      std::vector<int> d(static_cast<std::size_t>(n), 0);
      d[static_cast<std::size_t>(a)] = 1;
      dirs.push_back(d);
      for (int b = a + 1; b < n; ++b) {
        auto p = d, m = d;
        p[static_cast<std::size_t>(b)] = 1;
        m[static_cast<std::size_t>(b)] = -1;
        dirs.push_back(p);
        dirs.push_back(m);
      }
    }
    Scalar scale = Scalar(0);
    for (Scalar v : values_) scale = std::max(scale, std::abs(v));
    scale = std::max(scale, Scalar(1));
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const std::vector<int> idx = lattice_.unflatten(i);
      for (const auto& d : dirs) {
        std::vector<int> lo = idx, hi = idx;
        bool ok = true;
        for (std::size_t a = 0; a < idx.size(); ++a) {
          lo[a] -= d[a];
          hi[a] += d[a];
          if (lo[a] < 0 || hi[a] < 0 || lo[a] >= lattice_.dims[a] || hi[a] >= lattice_.dims[a]) ok = false;
        }
        if (!ok) continue;
        const Scalar s2 = (values_[lattice_.flatten(lo)] - 2 * values_[i] + values_[lattice_.flatten(hi)]) / scale;
        if (s2 < rep.worst) {
          rep.worst = s2;
          rep.witness = i;
        }
      }
    }
    rep.convex = rep.worst >= -tol;
    convex_ = rep.convex;
    return rep;
  }

  Scalar operator()(const VectorX<Scalar>& x) const { return multilinear(lattice_, values_, x); }

  // Finite-difference gradient at a node (central inside, one-sided on the boundary).
  VectorX<Scalar> node_gradient(std::size_t flat) const {
    const std::vector<int> idx = lattice_.unflatten(flat);
    VectorX<Scalar> g(lattice_.dim());
    for (int a = 0; a < lattice_.dim(); ++a) {
      const auto A = static_cast<std::size_t>(a);
      std::vector<int> lo = idx, hi = idx;
      if (idx[A] > 0) lo[A] -= 1;
      if (idx[A] + 1 < lattice_.dims[A]) hi[A] += 1;
      const int span = hi[A] - lo[A];
      g[a] = span ? (values_[lattice_.flatten(hi)] - values_[lattice_.flatten(lo)]) / (Scalar(span) * lattice_.spacing[a]) : Scalar(0);
    }
    return g;
  }

 private:
  Lattice<Scalar> lattice_;
  std::vector<Scalar> values_;
  bool convex_ = false;
};

template <typename Scalar>
struct SubdifferentialHull {
  MatrixX<Scalar> vertices;  // extreme points, column-wise
  VectorX<Scalar> base_point;
  std::vector<int> active;  // indices of active pieces
};

// Legendre transform tabulated on a slope list.
template <typename Scalar>
struct Conjugate1D {
  std::vector<Scalar> slopes;
  std::vector<Scalar> values;  // +inf where unbounded
  std::vector<Scalar> argmax;
  std::vector<char> boundary_hit;
  std::vector<char> unbounded;
};

template <typename Scalar>
Scalar eval(const MaxAffineFunction<Scalar>& f, const VectorX<Scalar>& x) {
  if (x.size() != f.ambient_dim()) throw ArgumentError("eval: dimension mismatch");
  return f.piece_values(x).maxCoeff();
}

template <typename Scalar>
Scalar eval(const GridFunction<Scalar>& f, const VectorX<Scalar>& x) {
  if (x.size() != f.ambient_dim()) throw ArgumentError("eval: dimension mismatch");
  return f(x);
}

template <typename Scalar>
Scalar default_active_tol(Scalar fx) {
  return Scalar(1e-9) * (Scalar(1) + std::abs(fx));
}

template <typename Scalar>
SubdifferentialHull<Scalar> subdiff(const MaxAffineFunction<Scalar>& f, const VectorX<Scalar>& x, Scalar tol = Scalar(-1)) {
  const VectorX<Scalar> v = f.piece_values(x);
  const Scalar fx = v.maxCoeff();
  if (tol < Scalar(0)) tol = default_active_tol(fx);
  SubdifferentialHull<Scalar> out;
  out.base_point = x;
  for (Eigen::Index k = 0; k < v.size(); ++k)
    if (fx - v[k] <= tol) out.active.push_back(static_cast<int>(k));
  Eigen::MatrixXd act(f.ambient_dim(), static_cast<Eigen::Index>(out.active.size()));
  for (std::size_t j = 0; j < out.active.size(); ++j)
    act.col(static_cast<Eigen::Index>(j)) = f.slopes().col(out.active[j]).template cast<double>();
  const std::vector<int> ext = extreme_points(act, 1e-14);
  out.vertices.resize(f.ambient_dim(), static_cast<Eigen::Index>(ext.size()));
  for (std::size_t j = 0; j < ext.size(); ++j)
    out.vertices.col(static_cast<Eigen::Index>(j)) = f.slopes().col(out.active[static_cast<std::size_t>(ext[j])]);
  return out;
}

// Restricted sup over the samples: u*(s) = max_k (t_k s - v_k), computed by a monotone sweep.
template <typename Scalar>
Conjugate1D<Scalar> conjugate_1d(const std::vector<Scalar>& t, const std::vector<Scalar>& v,
                                 const std::vector<Scalar>& slopes, Scalar tol = Scalar(1e-9)) {
  const std::size_t N = t.size();
  if (N == 0 || v.size() != N) throw ArgumentError("conjugate_1d: need matching nonempty samples");
  for (std::size_t k = 1; k < N; ++k)
    if (!(t[k] > t[k - 1])) throw ArgumentError("conjugate_1d: sample abscissae must increase strictly");
  std::vector<Scalar> secant(N > 1 ? N - 1 : 0);
  for (std::size_t k = 0; k + 1 < N; ++k) secant[k] = (v[k + 1] - v[k]) / (t[k + 1] - t[k]);
  for (std::size_t k = 1; k < secant.size(); ++k) {
    const Scalar drop = secant[k] - secant[k - 1];
    if (drop < -tol * (Scalar(1) + std::abs(secant[k - 1])))
      throw NonConvexInput("conjugate_1d: samples are not convex at index " + std::to_string(k), static_cast<long>(k),
                           static_cast<double>(drop));
  }
  std::vector<std::size_t> order(slopes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return slopes[a] < slopes[b]; });
  Conjugate1D<Scalar> out;
  out.slopes = slopes;
  out.values.resize(slopes.size());
  out.argmax.resize(slopes.size());
  out.boundary_hit.assign(slopes.size(), 0);
  out.unbounded.assign(slopes.size(), 0);
  std::size_t k = 0;
  for (std::size_t q : order) {
    const Scalar s = slopes[q];
    // within tolerance the secants are monotone, so the best index only moves right
    while (k + 1 < N && t[k + 1] * s - v[k + 1] >= t[k] * s - v[k]) ++k;
    out.values[q] = t[k] * s - v[k];
    out.argmax[q] = t[k];
    out.boundary_hit[q] = (N == 1 || k == 0 || k == N - 1) ? 1 : 0;
    if (N == 1) out.unbounded[q] = 1;
    else if (k == N - 1 && s > secant.back()) out.unbounded[q] = 1;
    else if (k == 0 && s < secant.front()) out.unbounded[q] = 1;
  }
  return out;
}

// Direct O(N M) sup, used to cross-check the sweep.
template <typename Scalar>
std::vector<Scalar> conjugate_1d_brute(const std::vector<Scalar>& t, const std::vector<Scalar>& v,
                                       const std::vector<Scalar>& slopes) {
  std::vector<Scalar> out(slopes.size(), -std::numeric_limits<Scalar>::infinity());
  for (std::size_t q = 0; q < slopes.size(); ++q)
    for (std::size_t k = 0; k < t.size(); ++k) out[q] = std::max(out[q], t[k] * slopes[q] - v[k]);
  return out;
}

// Exact conjugate of the fiber t -> f(x', t): lower hull of the points (beta_k, -alpha_k).
template <typename Scalar>
Conjugate1D<Scalar> partial_conjugate(const MaxAffineFunction<Scalar>& f, const VectorX<Scalar>& x_prime,
                                      const std::vector<Scalar>& slopes) {
  const int n = f.ambient_dim();
  if (x_prime.size() != n - 1) throw ArgumentError("partial_conjugate: x' must have dimension n-1");
  const Eigen::Index K = f.num_pieces();
  std::vector<std::pair<Scalar, Scalar>> pts(static_cast<std::size_t>(K));  // (beta, -alpha)
  for (Eigen::Index k = 0; k < K; ++k) {
    const Scalar alpha = f.slopes().col(k).head(n - 1).dot(x_prime) + f.intercepts()[k];
    pts[static_cast<std::size_t>(k)] = {f.slopes()(n - 1, k), -alpha};
  }
  std::sort(pts.begin(), pts.end());
  // fiber slopes equal up to rounding (support slopes of a max-margin frame) are one slope
  Scalar bscale = Scalar(1);
  for (const auto& p : pts) bscale = std::max(bscale, std::abs(p.first));
  const Scalar merge = Scalar(1e-12) * bscale;
  std::vector<std::pair<Scalar, Scalar>> uniq;
  std::size_t group = 0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (!uniq.empty() && pts[k].first - pts[group].first <= merge) {
      uniq.back().second = std::min(uniq.back().second, pts[k].second);
      continue;
    }
    group = k;
    uniq.push_back(pts[k]);
  }
  std::vector<std::pair<Scalar, Scalar>> hull;
  for (const auto& p : uniq) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      const Scalar cr = (b.first - a.first) * (p.second - a.second) - (b.second - a.second) * (p.first - a.first);
      if (cr <= Scalar(0)) hull.pop_back();
      else break;
    }
    hull.push_back(p);
  }
  Conjugate1D<Scalar> out;
  out.slopes = slopes;
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  for (Scalar s : slopes) {
    Scalar val = inf, arg = Scalar(0);
    char unb = 0;
    const Scalar snap = merge;
    if (s < hull.front().first && s >= hull.front().first - snap) s = hull.front().first;
    if (s > hull.back().first && s <= hull.back().first + snap) s = hull.back().first;
    if (s < hull.front().first || s > hull.back().first) {
      unb = 1;
      arg = s < hull.front().first ? -inf : inf;
    } else if (hull.size() == 1) {
      val = hull[0].second;
      arg = Scalar(0);
    } else {
      for (const auto& p : hull)
        if (std::abs(s - p.first) <= merge) s = p.first;
      std::size_t i = 0;
      while (i + 2 < hull.size() && s > hull[i + 1].first) ++i;
      const auto& a = hull[i];
      const auto& b = hull[i + 1];
      const Scalar slope = (b.second - a.second) / (b.first - a.first);
      val = a.second + slope * (s - a.first);
      arg = slope;
      if (s == b.first && i + 2 < hull.size()) {
        const auto& c = hull[i + 2];
        arg = Scalar(0.5) * (slope + (c.second - b.second) / (c.first - b.first));
      } else if (s == a.first && i > 0) {
        const auto& z = hull[i - 1];
        arg = Scalar(0.5) * (slope + (a.second - z.second) / (a.first - z.first));
      }
    }
    out.values.push_back(val);
    out.argmax.push_back(arg);
    out.boundary_hit.push_back(0);
    out.unbounded.push_back(unb);
  }
  return out;
}

// Fiber along the last lattice axis, multilinear in x'; conjugate clamped to the sampled fiber.
template <typename Scalar>
Conjugate1D<Scalar> partial_conjugate(const GridFunction<Scalar>& f, const VectorX<Scalar>& x_prime,
                                      const std::vector<Scalar>& slopes, Scalar tol = Scalar(1e-9)) {
  const Lattice<Scalar>& L = f.lattice();
  const int n = L.dim();
  if (x_prime.size() != n - 1) throw ArgumentError("partial_conjugate: x' must have dimension n-1");
  const VectorX<Scalar> hi = L.upper();
  for (int a = 0; a + 1 < n; ++a)
    if (x_prime[a] < L.origin[a] - Scalar(1e-12) || x_prime[a] > hi[a] + Scalar(1e-12))
      throw DomainError("partial_conjugate: empty fiber (x' outside the box)");
  const int m = L.dims[static_cast<std::size_t>(n - 1)];
  std::vector<Scalar> t(static_cast<std::size_t>(m)), v(static_cast<std::size_t>(m));
  VectorX<Scalar> x(n);
  x.head(n - 1) = x_prime;
  for (int k = 0; k < m; ++k) {
    x[n - 1] = L.origin[n - 1] + L.spacing[n - 1] * Scalar(k);
    t[static_cast<std::size_t>(k)] = x[n - 1];
    v[static_cast<std::size_t>(k)] = f(x);
  }
  return conjugate_1d(t, v, slopes, tol);
}

template <typename Scalar>
MaxAffineFunction<Scalar> envelope(const std::vector<MaxAffineFunction<Scalar>>& fs) {
  if (fs.empty()) throw ArgumentError("envelope of an empty list");
  const int n = fs.front().ambient_dim();
  Eigen::Index K = 0;
  for (const auto& f : fs) {
    if (f.ambient_dim() != n) throw ArgumentError("envelope: ambient dimensions differ");
    K += f.num_pieces();
  }
  MatrixX<Scalar> S(n, K);
  VectorX<Scalar> b(K);
  Eigen::Index c = 0;
  for (const auto& f : fs) {
    S.middleCols(c, f.num_pieces()) = f.slopes();
    b.segment(c, f.num_pieces()) = f.intercepts();
    c += f.num_pieces();
  }
  return MaxAffineFunction<Scalar>(S, b);
}

using MaxAffine = MaxAffineFunction<double>;
using Grid = GridFunction<double>;
using ConvexFunction = std::variant<MaxAffine, Grid>;

inline double eval(const MaxAffine& f, const Eigen::VectorXd& x) { return eval<double>(f, x); }
inline double eval(const Grid& f, const Eigen::VectorXd& x) { return eval<double>(f, x); }
inline SubdifferentialHull<double> subdiff(const MaxAffine& f, const Eigen::VectorXd& x, double tol = -1.0) {
  return subdiff<double>(f, x, tol);
}
inline Conjugate1D<double> partial_conjugate(const MaxAffine& f, const Eigen::VectorXd& x_prime,
                                             const std::vector<double>& slopes) {
  return partial_conjugate<double>(f, x_prime, slopes);
}
inline Conjugate1D<double> partial_conjugate(const Grid& f, const Eigen::VectorXd& x_prime,
                                             const std::vector<double>& slopes, double tol = 1e-9) {
  return partial_conjugate<double>(f, x_prime, slopes, tol);
}

inline double eval(const ConvexFunction& f, const Eigen::VectorXd& x) {
  return std::visit([&](const auto& g) { return eval<double>(g, x); }, f);
}

inline int ambient_dim(const ConvexFunction& f) {
  return std::visit([](const auto& g) { return g.ambient_dim(); }, f);
}

}  // namespace tears
