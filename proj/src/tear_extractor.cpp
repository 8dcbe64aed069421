#include "tears/tear_extractor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tears/errors.hpp"

namespace tears {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

PointSet rotate_cloud(const Eigen::MatrixXd& R, const PointSet& P) { return R * P; }

PointSet extreme_subset(const PointSet& P) {
  if (P.cols() <= 2) return P;
  return select_columns(P, extreme_points(P, 1e-13));
}

// Sample the rotated box to find a point where piece k of f is maximal.
bool find_active_point(const MaxAffine& f_rot, int k, const TearLattice& L, Eigen::VectorXd& witness) {
  const int n = f_rot.ambient_dim();
  const std::size_t stride = std::max<std::size_t>(1, L.lattice.size() / 64);
  for (std::size_t i = 0; i < L.lattice.size(); i += stride) {
    Eigen::VectorXd y(n);
    y.head(n - 1) = L.lattice.node(i);
    for (int s = 0; s <= 16; ++s) {
      y[n - 1] = L.t_lo + (L.t_hi - L.t_lo) * s / 16.0;
      const Eigen::VectorXd v = f_rot.piece_values(y);
      if (v.maxCoeff() - v[k] <= 1e-12 * (1.0 + std::abs(v[k]))) {
        witness = y;
        return true;
      }
    }
  }
  return false;
}

void check_max_affine_side(const MaxAffine& f_rot, bool plus, const SeparatingFrame& frame, const TearLattice& L) {
  const int n = f_rot.ambient_dim();
  const double slack = 1e-9 * (1.0 + std::abs(frame.midheight) + frame.spacing);
  for (int k = 0; k < f_rot.num_pieces(); ++k) {
    const double beta = f_rot.slopes()(n - 1, k);
    const bool bad = plus ? beta < frame.midheight + frame.spacing - slack : beta > frame.midheight - frame.spacing + slack;
    if (!bad) continue;
    Eigen::VectorXd y;
    if (find_active_point(f_rot, k, L, y))
      throw SeparationViolation(std::string("tear_height: ") + (plus ? "plus" : "minus") +
                                    " subgradient on the wrong side of the frame",
                                frame.from_frame(y), frame.rotation.transpose() * f_rot.slopes().col(k));
  }
}

void check_grid_side(const Grid& g, bool plus, const SeparatingFrame& frame) {
  const Latticed& L = g.lattice();
  for (std::size_t i = 0; i < L.size(); ++i) {
    const Eigen::VectorXd grad = g.node_gradient(i);
    const double beta = grad.dot(frame.normal);
    // one lattice step of gradient variation is within discretisation noise
    double local = 0.0;
    for (int a = 0; a < L.dim(); ++a) {
      std::vector<int> idx = L.unflatten(i);
      if (idx[static_cast<std::size_t>(a)] + 1 < L.dims[static_cast<std::size_t>(a)]) {
        idx[static_cast<std::size_t>(a)] += 1;
        local = std::max(local, (g.node_gradient(L.flatten(idx)) - grad).norm());
      }
    }
    const double slack = 1e-9 + local;
    const bool bad = plus ? beta < frame.midheight + frame.spacing - slack : beta > frame.midheight - frame.spacing + slack;
    if (bad)
      throw SeparationViolation(std::string("tear_height: sampled ") + (plus ? "plus" : "minus") +
                                    " gradient on the wrong side of the frame",
                                L.node(i), grad);
  }
}

}  // namespace

SeparatingFrame SeparatingFrame::make(const Eigen::VectorXd& normal, double midheight, double spacing) {
  SeparatingFrame f;
  f.normal = normal.normalized();
  f.midheight = midheight;
  f.spacing = spacing;
  f.rotation = householder_to_last_axis(f.normal);
  return f;
}

SeparatingFrame find_separating_frame(const PointSet& plus_cloud, const PointSet& minus_cloud) {
  if (plus_cloud.cols() == 0 || minus_cloud.cols() == 0) throw ArgumentError("find_separating_frame: empty cloud");
  if (plus_cloud.rows() != minus_cloud.rows()) throw ArgumentError("find_separating_frame: dimension mismatch");
  if (!plus_cloud.allFinite() || !minus_cloud.allFinite()) throw ArgumentError("find_separating_frame: non-finite point");
  const HullDistance hd = hull_distance(plus_cloud, minus_cloud);
  const double scale = std::max({1.0, plus_cloud.cwiseAbs().maxCoeff(), minus_cloud.cwiseAbs().maxCoeff()});
  if (hd.distance <= 1e-12 * scale)
    throw NoSeparation("find_separating_frame: hulls intersect", hd.a, hd.b, hd.distance);
  const Eigen::VectorXd normal = (hd.a - hd.b) / hd.distance;
  return SeparatingFrame::make(normal, (0.5 * (hd.a + hd.b)).dot(normal), 0.5 * hd.distance);
}

TearLattice tear_lattice_for_box(const SeparatingFrame& frame, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                 int nodes_per_axis, int fiber_nodes) {
  const int n = frame.dim();
  Eigen::VectorXd ylo = Eigen::VectorXd::Constant(n, kInf), yhi = Eigen::VectorXd::Constant(n, -kInf);
  for (int c = 0; c < (1 << n); ++c) {
    Eigen::VectorXd x(n);
    for (int a = 0; a < n; ++a) x[a] = (c & (1 << a)) ? hi[a] : lo[a];
    const Eigen::VectorXd y = frame.to_frame(x);
    ylo = ylo.cwiseMin(y);
    yhi = yhi.cwiseMax(y);
  }
  TearLattice L;
  L.lattice = Latticed::box(ylo.head(n - 1), yhi.head(n - 1), nodes_per_axis);
  L.t_lo = ylo[n - 1];
  L.t_hi = yhi[n - 1];
  L.fiber_nodes = fiber_nodes;
  return L;
}

double TearGraph::h_at(const Eigen::VectorXd& x_prime) const {
  if (lattice.lattice.dim() == 0) return h_values.front();
  return multilinear(lattice.lattice, h_values, x_prime);
}

TearPoint tear_height_at(const MaxAffine& u_plus, const MaxAffine& u_minus, const SeparatingFrame& frame,
                         const Eigen::VectorXd& x_prime) {
  const MaxAffine u = envelope<double>({u_plus.rotated(frame.rotation), u_minus.rotated(frame.rotation)});
  const double a0 = frame.midheight, d0 = frame.spacing;
  const auto c = partial_conjugate(u, x_prime, std::vector<double>{a0 - d0, a0 + d0});
  TearPoint p;
  p.finite = !c.unbounded[0] && !c.unbounded[1];
  p.h_plus = -c.values[0] / (2.0 * d0);
  p.h_minus = -c.values[1] / (2.0 * d0);
  p.h = p.finite ? p.h_plus - p.h_minus : std::numeric_limits<double>::quiet_NaN();
  return p;
}

PointSet subgradient_cloud(const ConvexFunction& f) {
  if (const auto* m = std::get_if<MaxAffine>(&f)) return m->slopes();
  const Grid& g = std::get<Grid>(f);
  PointSet P(g.ambient_dim(), static_cast<Eigen::Index>(g.lattice().size()));
  for (std::size_t i = 0; i < g.lattice().size(); ++i) P.col(static_cast<Eigen::Index>(i)) = g.node_gradient(i);
  return P;
}

ThetaEstimate theta_min(const PointSet& plus_cloud, const PointSet& minus_cloud, const SeparatingFrame& frame) {
  const PointSet P = extreme_subset(plus_cloud), M = extreme_subset(minus_cloud);
  double tan_max = 0.0;
  for (Eigen::Index i = 0; i < P.cols(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      const Eigen::VectorXd v = P.col(i) - M.col(j);
      const double vn = v.dot(frame.normal);
      if (vn <= 0.0) return {M_PI / 2.0, kInf};
      const double vp = (v - vn * frame.normal).norm();
      tan_max = std::max(tan_max, vp / vn);
    }
  return {std::atan(tan_max), tan_max};
}

TearGraph tear_height(const ConvexFunction& u_plus, const ConvexFunction& u_minus, const SeparatingFrame& frame,
                      const TearLattice& lattice) {
  const int n = frame.dim();
  if (ambient_dim(u_plus) != n || ambient_dim(u_minus) != n) throw ArgumentError("tear_height: dimension mismatch");
  if (lattice.lattice.dim() != n - 1) throw ArgumentError("tear_height: projected lattice must be (n-1)-dimensional");
  TearGraph tg;
  tg.frame = frame;
  tg.lattice = lattice;
  const std::size_t N = lattice.lattice.size();
  tg.h_values.assign(N, 0.0);
  tg.h_plus.assign(N, 0.0);
  tg.h_minus.assign(N, 0.0);
  tg.finite.assign(N, 1);
  tg.boundary_hit.assign(N, 0);
  const double a0 = frame.midheight, d0 = frame.spacing;

  const auto* mp = std::get_if<MaxAffine>(&u_plus);
  const auto* mm = std::get_if<MaxAffine>(&u_minus);
  if (mp && mm) {
    const MaxAffine rp = mp->rotated(frame.rotation), rm = mm->rotated(frame.rotation);
    check_max_affine_side(rp, true, frame, lattice);
    check_max_affine_side(rm, false, frame, lattice);
    const MaxAffine u = envelope<double>({rp, rm});
    const std::vector<double> slopes{a0 - d0, a0 + d0};
    for (std::size_t i = 0; i < N; ++i) {
      const Eigen::VectorXd xp = lattice.lattice.node(i);
      const auto c = partial_conjugate(u, xp, slopes);
      if (c.unbounded[0] || c.unbounded[1]) {
        tg.finite[i] = 0;
        tg.h_values[i] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      tg.h_plus[i] = -c.values[0] / (2.0 * d0);
      tg.h_minus[i] = -c.values[1] / (2.0 * d0);
      tg.h_values[i] = tg.h_plus[i] - tg.h_minus[i];
    }
    tg.h_resolution = 0.0;
  } else {
    for (const auto* side : {&u_plus, &u_minus}) {
      const bool plus = side == &u_plus;
      if (const auto* m = std::get_if<MaxAffine>(side)) check_max_affine_side(m->rotated(frame.rotation), plus, frame, lattice);
      else check_grid_side(std::get<Grid>(*side), plus, frame);
    }
    // sampled fiber: direct sup over the window, clamped to where both functions are defined
    const int M = lattice.fiber_nodes;
    const double dt = lattice.t_step();
    for (std::size_t i = 0; i < N; ++i) {
      Eigen::VectorXd y(n);
      y.head(n - 1) = lattice.lattice.node(i);
      double best_lo = -kInf, best_hi = -kInf;
      int arg_lo = -1, arg_hi = -1, first = -1, last = -1;
      for (int k = 0; k < M; ++k) {
        y[n - 1] = lattice.t_lo + dt * k;
        const Eigen::VectorXd x = frame.from_frame(y);
        double ux;
        try {
          ux = std::max(eval(u_plus, x), eval(u_minus, x));
        } catch (const DomainError&) {
          continue;
        }
        if (first < 0) first = k;
        last = k;
        const double vlo = y[n - 1] * (a0 - d0) - ux, vhi = y[n - 1] * (a0 + d0) - ux;
        if (vlo > best_lo) {
          best_lo = vlo;
          arg_lo = k;
        }
        if (vhi > best_hi) {
          best_hi = vhi;
          arg_hi = k;
        }
      }
      if (first < 0 || first == last) {
        tg.finite[i] = 0;
        tg.h_values[i] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      tg.boundary_hit[i] = (arg_lo == first || arg_lo == last || arg_hi == first || arg_hi == last) ? 1 : 0;
      tg.h_plus[i] = -best_lo / (2.0 * d0);
      tg.h_minus[i] = -best_hi / (2.0 * d0);
      tg.h_values[i] = tg.h_plus[i] - tg.h_minus[i];
    }
    tg.h_resolution = dt;
  }

  const ThetaEstimate th = theta_min(subgradient_cloud(u_plus), subgradient_cloud(u_minus), frame);
  tg.theta_min = th.theta_min;
  tg.tan_theta_min = th.tan_theta_min;

  const Latticed& L = lattice.lattice;
  for (std::size_t i = 0; i < N; ++i) {
    if (!tg.finite[i]) continue;
    const std::vector<int> idx = L.unflatten(i);
    for (int a = 0; a < L.dim(); ++a) {
      const auto A = static_cast<std::size_t>(a);
      if (idx[A] + 1 >= L.dims[A]) continue;
      std::vector<int> nb = idx;
      nb[A] += 1;
      const std::size_t j = L.flatten(nb);
      if (!tg.finite[j]) continue;
      tg.measured_lip = std::max(tg.measured_lip, std::abs(tg.h_values[j] - tg.h_values[i]) / L.spacing[a]);
    }
  }
  return tg;
}

const char* side_name(Side s) {
  switch (s) {
    case Side::SIGMA: return "SIGMA";
    case Side::C_PLUS: return "C_PLUS";
    case Side::C_MINUS: return "C_MINUS";
  }
  return "?";
}

Side classify(const ConvexFunction&, const ConvexFunction&, const TearGraph& tear, const Eigen::VectorXd& x, double tol) {
  const int n = tear.frame.dim();
  if (tol < 0.0) tol = 2.0 * tear.lattice.t_step();
  const Eigen::VectorXd y = tear.frame.to_frame(x);
  const double h = tear.h_at(y.head(n - 1));
  const double gap = y[n - 1] - h;
  if (std::abs(gap) <= tol) return Side::SIGMA;
  return gap > 0 ? Side::C_PLUS : Side::C_MINUS;
}

LipschitzReport lipschitz_certificate(const TearGraph& tear, const PointSet& plus_cloud, const PointSet& minus_cloud) {
  LipschitzReport rep;
  const int n = tear.frame.dim();
  rep.measured_lip = tear.measured_lip;
  rep.tan_theta_min = theta_min(plus_cloud, minus_cloud, tear.frame).tan_theta_min;

  const PointSet ep = extreme_subset(plus_cloud), em = extreme_subset(minus_cloud);
  PointSet all(n, ep.cols() + em.cols());
  all << ep, em;
  PointSet proj = rotate_cloud(tear.frame.rotation, all).topRows(n - 1);
  if (n - 1 >= 1 && proj.cols() > 2) proj = extreme_subset(proj);
  rep.diam_bound = (n - 1 >= 1 ? diameter(proj) : 0.0) / (2.0 * tear.frame.spacing);

  const double step = tear.lattice.lattice.dim() ? tear.lattice.lattice.min_step() : 1.0;
  rep.anisotropy = tear.h_resolution / step;
  rep.tolerance = 2.0 * rep.anisotropy + 1e-9 * (1.0 + rep.tan_theta_min);
  const bool first = rep.measured_lip <= rep.tan_theta_min + rep.tolerance;
  const bool second = rep.tan_theta_min <= rep.diam_bound + rep.tolerance;
  rep.pass = first && second;

  double worst = -1.0;
  const Latticed& L = tear.lattice.lattice;
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (!tear.finite[i]) continue;
    const std::vector<int> idx = L.unflatten(i);
    for (int a = 0; a < L.dim(); ++a) {
      const auto A = static_cast<std::size_t>(a);
      if (idx[A] + 1 >= L.dims[A]) continue;
      std::vector<int> nb = idx;
      nb[A] += 1;
      const std::size_t j = L.flatten(nb);
      if (!tear.finite[j]) continue;
      const double s = std::abs(tear.h_values[j] - tear.h_values[i]) / L.spacing[a];
      if (s > worst) {
        worst = s;
        rep.witness_from = i;
        rep.witness_to = j;
      }
    }
  }
  if (!first) rep.message = "measured Lipschitz constant exceeds tan(theta_min)";
  else if (!second) rep.message = "tan(theta_min) exceeds the diameter bound";
  return rep;
}

DCReport dc_structure(const TearGraph& tear, double rel_tol) {
  DCReport rep;
  const Latticed& L = tear.lattice.lattice;
  const int m = L.dim();
  double scale = 1.0;
  for (std::size_t i = 0; i < L.size(); ++i)
    if (tear.finite[i]) scale = std::max({scale, std::abs(tear.h_plus[i]), std::abs(tear.h_minus[i])});
  std::vector<std::vector<int>> dirs;
  for (int a = 0; a < m; ++a) {
    std::vector<int> d(static_cast<std::size_t>(m), 0);
    d[static_cast<std::size_t>(a)] = 1;
    dirs.push_back(d);
    for (int b = a + 1; b < m; ++b) {
      auto p = d, q = d;
      p[static_cast<std::size_t>(b)] = 1;
      q[static_cast<std::size_t>(b)] = -1;
      dirs.push_back(p);
      dirs.push_back(q);
    }
  }
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (!tear.finite[i]) continue;
    const std::vector<int> idx = L.unflatten(i);
    for (const auto& d : dirs) {
      std::vector<int> lo = idx, hi = idx;
      bool ok = true;
      for (std::size_t a = 0; a < idx.size(); ++a) {
        lo[a] -= d[a];
        hi[a] += d[a];
        if (lo[a] < 0 || hi[a] < 0 || lo[a] >= L.dims[a] || hi[a] >= L.dims[a]) ok = false;
      }
      if (!ok) continue;
      const std::size_t l = L.flatten(lo), h = L.flatten(hi);
      if (!tear.finite[l] || !tear.finite[h]) continue;
      rep.min_second_diff_plus = std::min(rep.min_second_diff_plus, tear.h_plus[l] - 2 * tear.h_plus[i] + tear.h_plus[h]);
      rep.min_second_diff_minus = std::min(rep.min_second_diff_minus, tear.h_minus[l] - 2 * tear.h_minus[i] + tear.h_minus[h]);
    }
  }
  rep.scale = scale;
  rep.pass = rep.min_second_diff_plus >= -rel_tol * scale && rep.min_second_diff_minus >= -rel_tol * scale;
  return rep;
}

}  // namespace tears
