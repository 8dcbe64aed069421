#include "tears/appendix.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "tears/errors.hpp"
#include "tears/parallel.hpp"
#include "tears/singularity_analyzer.hpp"

namespace tears {

namespace {

// value with first and second derivative in one parameter
struct Jet {
  double v = 0.0, d = 0.0, dd = 0.0;
  Jet() = default;
  Jet(double v_) : v(v_) {}
  Jet(double v_, double d_, double dd_) : v(v_), d(d_), dd(dd_) {}
};
Jet operator+(Jet a, Jet b) { return {a.v + b.v, a.d + b.d, a.dd + b.dd}; }
Jet operator-(Jet a, Jet b) { return {a.v - b.v, a.d - b.d, a.dd - b.dd}; }
Jet operator-(Jet a) { return {-a.v, -a.d, -a.dd}; }
Jet operator*(Jet a, Jet b) { return {a.v * b.v, a.d * b.v + a.v * b.d, a.dd * b.v + 2 * a.d * b.d + a.v * b.dd}; }
Jet operator*(double s, Jet a) { return {s * a.v, s * a.d, s * a.dd}; }
Jet sqrt(Jet a) {
  const double r = std::sqrt(a.v);
  return {r, a.d / (2 * r), a.dd / (2 * r) - a.d * a.d / (4 * r * r * r)};
}
Jet abs(Jet a) { return a.v < 0 ? -a : a; }
double sgn(double x) { return (x > 0) - (x < 0); }
double value_of(double x) { return x; }
double value_of(const Jet& x) { return x.v; }
using std::abs;
using std::sqrt;

template <typename T>
T pw(T a, int k) {
  T r(1.0);
  for (int i = 0; i < k; ++i) r = r * a;
  return r;
}

template <typename T>
std::pair<T, T> grad(int i, T x, T y) {
  switch (i) {
    case 1:
      return {2.0 * x - 6.0 * pw(x, 5), 2.0 * y + T(1.0)};
    case 2:
      return {8.0 * x + T(1.0) - 3.0 * y, 2.0 * y - 6.0 * pw(y, 5) - 3.0 * x};
    case 3:
      return {8.0 * x - T(1.0) + 3.0 * y, 2.0 * y - 6.0 * pw(y, 5) + 3.0 * x};
    default: {
      const double neg = std::max(0.0, -sgn(value_of(y)));
      return {sgn(value_of(x)) * (4.5 * sqrt(abs(x)) - 3.0 * pw(x, 2)), 16.0 * pw(y, 3) + (2.0 * (1.0 + neg)) * y};
    }
  }
}

double bisect(const std::function<double(double)>& f, double lo, double hi) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    ((f(lo) < 0) == (f(mid) < 0) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

AppendixScenario::AppendixScenario(double r0) : r0_(r0) {
  if (!(r0 > 0.0) || !(r0 < 0.5)) throw ArgumentError("appendix: r0 must lie in (0, 0.5)");
  r1_ = 0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * r0 * r0));
  r2_ = bisect([&](double t) { return -std::sqrt(t) - (t * t - r0 * r0); }, 0.0, r0);
}

double AppendixScenario::value(int i, const Eigen::Vector2d& p) const {
  const double x = p.x(), y = p.y();
  switch (i) {
    case 1:
      return x * x + y * y - std::pow(x, 6) + y;
    case 2:
      return 4 * x * x + y * y - std::pow(y, 6) + x - 3 * x * y;
    case 3:
      return 4 * x * x + y * y - std::pow(y, 6) - x + 3 * x * y;
    case 4:
      return 4 * std::pow(y, 4) + y * y - std::pow(std::abs(x), 3) + y * y * std::max(0.0, -sgn(y)) +
             3 * std::pow(std::abs(x), 1.5);
    default:
      throw ArgumentError("appendix: piece index must be 1..4");
  }
}

Eigen::Vector2d AppendixScenario::gradient(int i, const Eigen::Vector2d& p) const {
  if (i < 1 || i > 4) throw ArgumentError("appendix: piece index must be 1..4");
  const auto g = grad<double>(i, p.x(), p.y());
  return {g.first, g.second};
}

double AppendixScenario::envelope(const Eigen::Vector2d& p) const {
  double top = value(1, p);
  for (int i = 2; i <= 4; ++i) top = std::max(top, value(i, p));
  return top;
}

int AppendixScenario::argmax(const Eigen::Vector2d& p, double* gap) const {
  double v[4];
  for (int i = 0; i < 4; ++i) v[i] = value(i + 1, p);
  const int best = static_cast<int>(std::max_element(v, v + 4) - v);
  if (gap) {
    double second = -INFINITY;
    for (int i = 0; i < 4; ++i)
      if (i != best) second = std::max(second, v[i]);
    *gap = v[best] - second;
  }
  return best + 1;
}

bool AppendixScenario::in_domain(const Eigen::Vector2d& p, double slack) const {
  const double c = r0_ * r0_ - p.x() * p.x();
  return p.y() <= c + slack && p.y() >= -c - slack;
}

int AppendixScenario::region(const Eigen::Vector2d& p) const {
  if (!in_domain(p)) return 0;
  const double ax = std::abs(p.x());
  if (p.y() >= ax) return 1;
  if (p.y() <= -std::sqrt(ax)) return 4;
  return p.x() >= 0 ? 2 : 3;
}

SourceMeasure AppendixScenario::source(int m) const {
  if (m < 2) throw ArgumentError("appendix: need at least two vertices per arc");
  std::vector<Eigen::Vector2d> v;
  for (int k = 0; k < m; ++k) {
    const double x = -r0_ + 2 * r0_ * k / m;
    v.emplace_back(x, x * x - r0_ * r0_);
  }
  for (int k = 0; k < m; ++k) {
    const double x = r0_ - 2 * r0_ * k / m;
    v.emplace_back(x, r0_ * r0_ - x * x);
  }
  return SourceMeasure::polygon(v);
}

namespace {

// block edges on [lo, hi] refined geometrically toward `focus` (one of the endpoints or an interior point)
std::vector<double> graded_edges(double lo, double hi, double focus, int levels) {
  std::vector<double> e{focus};
  for (double end : {lo, hi}) {
    if (end == focus) continue;
    for (int k = 0; k < levels; ++k) e.push_back(focus + (end - focus) * std::ldexp(1.0, -k));
  }
  std::sort(e.begin(), e.end());
  return e;
}

}  // namespace

TargetDecomposition AppendixScenario::target(int B, int S, int B4) const {
  if (B < 2 || S < 1 || B4 < 1) throw ArgumentError("appendix: block and sample counts must be positive");
  struct Acc {
    double w = 0.0;
    Eigen::Vector2d grad = Eigen::Vector2d::Zero(), pos = Eigen::Vector2d::Zero();
  };
  std::map<std::pair<int, int>, Acc> acc;  // (block, piece)
  const double c = r0_ * r0_;
  auto integrate = [&](const std::vector<double>& ea, const std::vector<double>& eb, int offset, bool cusp) {
    const int na = static_cast<int>(ea.size()) - 1, nb = static_cast<int>(eb.size()) - 1;
    for (int ia = 0; ia < na; ++ia)
      for (int ib = 0; ib < nb; ++ib)
        for (int a = 0; a < S; ++a)
          for (int b = 0; b < S; ++b) {
            const double da = (ea[ia + 1] - ea[ia]) / S, db = (eb[ib + 1] - eb[ib]) / S;
            const double u = ea[ia] + (a + 0.5) * da, v = eb[ib] + (b + 0.5) * db;
            // main lens: y = v (r0^2 - u^2); cusp: x = v u^2 with u = y
            const Eigen::Vector2d p = cusp ? Eigen::Vector2d(v * u * u, u) : Eigen::Vector2d(u, v * (c - u * u));
            const double w = (cusp ? u * u : c - u * u) * da * db;
            if (cusp && !in_domain(p)) continue;
            const int i = argmax(p);
            if ((i == 4) != cusp) continue;
            Acc& q = acc[{offset + ia * nb + ib, i}];
            q.w += w;
            q.grad += w * gradient(i, p);
            q.pos += w * p;
          }
  };
  const int L = B / 2, L4 = std::max(1, B4 / 2);
  // the lens in (x, s) with s in [-1, 1]; the cusp {|x| <= y^2} in (y, s)
  integrate(graded_edges(-r0_, r0_, 0.0, L), graded_edges(-1.0, 1.0, 0.0, L), 0, false);
  integrate(graded_edges(-c, 0.0, 0.0, 2 * L4), graded_edges(-1.0, 1.0, 0.0, L4), 4 * L * L, true);
  // fold slivers into the nearest sizeable block of the same piece
  double total = 0.0;
  for (const auto& kv : acc) total += kv.second.w;
  const double floor_w = 1e-5 * total;
  for (auto it = acc.begin(); it != acc.end(); ++it) {
    Acc& q = it->second;
    if (!(q.w > 0) || q.w >= floor_w) continue;
    const Eigen::Vector2d p = q.pos / q.w;
    Acc* dest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (auto& [key, o] : acc) {
      if (key.second != it->first.second || o.w < floor_w) continue;
      const double d = (o.pos / o.w - p).squaredNorm();
      if (d < best) best = d, dest = &o;
    }
    if (!dest) continue;
    dest->w += q.w;
    dest->grad += q.grad;
    dest->pos += q.pos;
    q = Acc{};
  }
  std::vector<Atom> atoms;
  std::vector<double> warm;
  for (const auto& [key, q] : acc) {
    if (!(q.w > 0)) continue;
    const Eigen::Vector2d y = q.grad / q.w, xb = q.pos / q.w;
    atoms.push_back({y, q.w, key.second});
    warm.push_back(xb.dot(y) - value(key.second, xb));
  }
  warm_ = Eigen::Map<Eigen::VectorXd>(warm.data(), static_cast<Eigen::Index>(warm.size()));
  return TargetDecomposition(atoms, {{1, "grad u1(U1)"}, {2, "grad u2(U2)"}, {3, "grad u3(U3)"}, {4, "grad u4(U4)"}});
}

std::vector<AppendixScenario::Inequality> AppendixScenario::smallness() const {
  const double r = r0_;
  std::vector<Inequality> out;
  auto add = [&](std::string name, double v, bool positive) { out.push_back({std::move(name), v, positive ? v > 0 : v < 0}); };
  add("4 - 60 r0^8 - 6 (60 r0^9 + 3) / (8 - 6 r0) > 0", 4 - 60 * std::pow(r, 8) - 6 * (60 * std::pow(r, 9) + 3) / (8 - 6 * r), true);
  add("-4 + 60 r0^8 + 9/4 + 3 r0 < 0", -4 + 60 * std::pow(r, 8) + 2.25 + 3 * r, false);
  add("2 - 30 r0^4 > 0", 2 - 30 * std::pow(r, 4), true);
  add("r0 - r1 > 0", r - r1_, true);
  add("r0 - r2 > 0", r - r2_, true);
  return out;
}

TargetDecomposition shift_piece(const TargetDecomposition& nu, int piece, const Eigen::VectorXd& shift) {
  if (shift.size() != nu.dim()) throw ArgumentError("shift_piece: dimension mismatch");
  std::vector<Atom> atoms = nu.atoms();
  bool any = false;
  for (auto& a : atoms)
    if (a.piece == piece) {
      a.point += shift;
      any = true;
    }
  if (!any) throw ArgumentError("shift_piece: unknown piece " + std::to_string(piece));
  return TargetDecomposition(atoms, nu.labels(), false);
}

namespace {

struct Curve {
  std::string name;
  int piece;
  bool y_of_x;
  int sign;
  double lo, hi;
  std::function<std::pair<Jet, Jet>(Jet)> gamma;
};

std::vector<Curve> boundary_curves(const AppendixScenario& A) {
  const double r0 = A.r0(), r1 = A.r1(), r2 = A.r2(), c = r0 * r0;
  auto line = [](double sx) { return [sx](Jet t) { return std::make_pair(sx * t, t); }; };
  auto top = [c](double sx) { return [c, sx](Jet t) { return std::make_pair(sx * t, Jet(c) - t * t); }; };
  auto bottom = [c](double sx) { return [c, sx](Jet t) { return std::make_pair(sx * t, t * t - Jet(c)); }; };
  auto cusp = [](double sx) { return [sx](Jet t) { return std::make_pair(sx * t, -sqrt(t)); }; };
  std::vector<Curve> cs{
      {"grad u1 on y = r0^2 - x^2", 1, true, -1, -r1, r1, top(1)},
      {"grad u1 on y = x", 1, false, -1, 0, r1, line(1)},
      {"grad u1 on y = -x", 1, false, +1, 0, r1, line(-1)},
      {"grad u2 on y = x", 2, true, -1, 0, r1, line(1)},
      {"grad u2 on y = -sqrt(x)", 2, true, +1, 0, r2, cusp(1)},
      {"grad u2 on y = r0^2 - x^2", 2, true, -1, r1, r0, top(1)},
      {"grad u2 on y = x^2 - r0^2", 2, true, +1, r2, r0, bottom(1)},
      {"grad u3 on y = -x", 3, true, -1, 0, r1, line(-1)},
      {"grad u3 on y = -sqrt(-x)", 3, true, +1, 0, r2, cusp(-1)},
      {"grad u3 on y = r0^2 - x^2", 3, true, -1, r1, r0, top(-1)},
      {"grad u3 on y = x^2 - r0^2", 3, true, +1, r2, r0, bottom(-1)},
      {"grad u4 on y = -sqrt(x)", 4, true, -1, 0, r2, cusp(1)},
      {"grad u4 on y = -sqrt(-x)", 4, true, -1, 0, r2, cusp(-1)},
      {"grad u4 on y = x^2 - r0^2, x > 0", 4, false, -1, 0, r2, bottom(1)},
      {"grad u4 on y = x^2 - r0^2, x < 0", 4, false, +1, 0, r2, bottom(-1)},
  };
  return cs;
}

}  // namespace

AppendixReport appendix_verify(const AppendixOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  if (opt.lattice < 3) throw ArgumentError("appendix: lattice needs at least 3 nodes per axis");
  if (!(opt.delta > 0)) throw ArgumentError("appendix: delta must be positive");
  const AppendixScenario A(opt.r0);
  AppendixReport rep;
  rep.r0 = opt.r0;
  rep.smallness = A.smallness();
  rep.smallness_ok = std::all_of(rep.smallness.begin(), rep.smallness.end(), [](const auto& q) { return q.holds; });

  // (a) four-way coincidence at the origin
  bool coincide = true;
  for (int i = 1; i <= 4; ++i) {
    rep.origin_values[static_cast<std::size_t>(i - 1)] = A.value(i, Eigen::Vector2d::Zero());
    coincide &= std::abs(rep.origin_values[static_cast<std::size_t>(i - 1)]) < 1e-12;
  }
  rep.coincidence_ok = coincide;

  // the origin is a node; the lattice covers the bounding box of D
  const int half = opt.lattice / 2;
  const Eigen::Vector2d h = A.upper() / double(opt.lattice - 1 - half);
  const Latticed L(-half * h, h, {opt.lattice, opt.lattice});
  // (b) region classification off the tie band
  std::vector<char> inside(L.size()), agree(L.size());
  parallel_for(L.size(), [&](std::size_t k) {
    const Eigen::Vector2d p = L.node(k);
    if (!A.in_domain(p)) return;
    double gap;
    const int i = A.argmax(p, &gap);
    if (gap <= opt.tol) return;
    inside[k] = 1;
    agree[k] = A.region(p) == i;
  });
  std::size_t total = 0, ok = 0;
  for (std::size_t k = 0; k < L.size(); ++k) {
    total += inside[k];
    ok += agree[k];
    if (inside[k] && !agree[k] && rep.region_witnesses.size() < 10) rep.region_witnesses.push_back(L.node(k));
  }
  rep.region_nodes = total;
  rep.region_agreement = total ? double(ok) / double(total) : 0.0;
  rep.regions_ok = total > 0 && rep.region_agreement >= 0.999;

  // convexity of each u_i on D by directional second differences
  {
    const Eigen::Vector2d h = L.spacing;
    const std::vector<Eigen::Vector2d> dirs{{h.x(), 0}, {0, h.y()}, {h.x(), h.y()}, {h.x(), -h.y()}};
    std::vector<double> worst(L.size(), INFINITY);
    parallel_for(L.size(), [&](std::size_t k) {
      const Eigen::Vector2d p = L.node(k);
      for (const auto& d : dirs) {
        if (!A.in_domain(p + d) || !A.in_domain(p - d)) continue;
        for (int i = 1; i <= 4; ++i) {
          const double s = A.value(i, p + d) + A.value(i, p - d) - 2 * A.value(i, p);
          worst[k] = std::min(worst[k], s / std::max(1.0, std::abs(A.value(i, p))));
        }
      }
    });
    rep.convexity_min = *std::min_element(worst.begin(), worst.end());
    rep.convex_ok = rep.convexity_min >= -1e-13;
  }

  // (c) curvature signs of the image boundary curves
  bool curves_ok = true;
  for (const auto& c : boundary_curves(A)) {
    CurveCheck cc{c.name, c.piece, c.sign, opt.curve_samples, 0, INFINITY, Eigen::Vector2d::Zero()};
    for (int s = 0; s < opt.curve_samples; ++s) {
      const double t = c.lo + (c.hi - c.lo) * (s + 0.5) / opt.curve_samples;
      const auto [gx, gy] = c.gamma(Jet(t, 1.0, 0.0));
      const auto [f, g] = grad<Jet>(c.piece, gx, gy);
      const double q = c.y_of_x ? (g.dd * f.d - g.d * f.dd) / std::pow(f.d, 3) : (f.dd * g.d - f.d * g.dd) / std::pow(g.d, 3);
      const double signed_q = c.sign * q;
      if (signed_q < cc.worst) {
        cc.worst = signed_q;
        cc.witness = Eigen::Vector2d(gx.v, gy.v);
      }
      cc.violations += !(signed_q > 0);
    }
    curves_ok &= cc.violations == 0;
    rep.curves.push_back(cc);
  }
  rep.curves_ok = curves_ok;

  // (d) atomized transport, then the upward shift of piece 4
  const SourceMeasure mu = A.source();
  const TargetDecomposition nu = A.target(opt.blocks, 8, opt.u4_blocks);
  rep.atoms = nu.size();
  SolverOptions so;
  so.initial = A.warm_start();
  const SolveReport base = solve_semidiscrete(mu, nu, opt.solver_tol, so);
  {
    PieceFamily fam;
    fam.ids = {1, 2, 3, 4};
    fam.values = [&A](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
      out.resize(4);
      for (int i = 0; i < 4; ++i) out[i] = A.value(i + 1, x);
    };
    const MultiplicityField fc =
        multiplicity_field(fam, L, opt.tol, [&A](const Eigen::VectorXd& x) { return A.in_domain(x); });
    rep.base_max_multiplicity = fc.max_multiplicity();
    rep.base_nodes = fc.nodes_at_least(4).size();
    for (std::size_t k : fc.nodes_at_least(rep.base_max_multiplicity)) {
      rep.base_point = L.node(k);
      break;
    }
  }
  rep.base_discrete_multiplicity = cell_multiplicity_field(mu, nu, base.dual, L, opt.delta, &nu).max_multiplicity();
  rep.delta = opt.delta;
  bool shift_ok = rep.base_max_multiplicity == 4;
  for (int j : opt.shifts) {
    if (j < 1) throw ArgumentError("appendix: shift index must be positive");
    const TargetDecomposition nj = shift_piece(nu, 4, Eigen::Vector2d(0.0, opt.delta / j));
    so.initial = base.dual.psi;
    const SolveReport sj = solve_semidiscrete(mu, nj, opt.solver_tol, so);
    const MultiplicityField fj = cell_multiplicity_field(mu, nj, sj.dual, L, opt.delta, &nu);
    const int mj = fj.max_multiplicity();
    rep.shifts.push_back(j);
    rep.shifted_max_multiplicity.push_back(mj);
    if (mj >= 4)
      for (std::size_t k : fj.nodes_at_least(4))
        if (rep.shift_witnesses.size() < 10) rep.shift_witnesses.push_back(L.node(k));
    shift_ok &= mj == 3;
  }
  rep.shift_ok = shift_ok;
  rep.pass = rep.smallness_ok && rep.convex_ok && rep.coincidence_ok && rep.regions_ok && rep.curves_ok && rep.shift_ok;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace tears
