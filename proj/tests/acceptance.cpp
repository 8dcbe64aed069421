#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "support/oracles.hpp"
#include "tears/appendix.hpp"
#include "tears/convex_kernel.hpp"
#include "tears/geometry.hpp"
#include "tears/ot_solver.hpp"
#include "tears/scenarios.hpp"
#include "tears/singularity_analyzer.hpp"
#include "tears/stability_harness.hpp"
#include "tears/tear_extractor.hpp"
#include "tears/transport_lp.hpp"

using namespace tears;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// The 100 separated max-affine pairs shared by criteria 1 to 3: 50 in R^2, 50 in R^3.
struct TearInstance {
  oracle::SeparatedPair pair;
  SeparatingFrame frame;
  TearGraph tear;
};

const std::vector<TearInstance>& tear_instances() {
  static const std::vector<TearInstance> all = [] {
    std::mt19937_64 rng(20240601);
    std::vector<TearInstance> out;
    for (int i = 0; i < 100; ++i) {
      const int n = i < 50 ? 2 : 3;
      auto pr = oracle::random_separated_pair(rng, n, 0.2);
      const auto frame = find_separating_frame(pr.plus.slopes(), pr.minus.slopes());
      const auto L = tear_lattice_for_box(frame, Eigen::VectorXd::Constant(n, -1.0), Eigen::VectorXd::Constant(n, 1.0), 256);
      out.push_back({pr, frame, tear_height(pr.plus, pr.minus, frame, L)});
    }
    return out;
  }();
  return all;
}

// Bisection of u+ - u- along the fiber x(t) = R^T (x', t), with each piece reduced to alpha + t beta.
double fiber_root(const MaxAffine& up, const MaxAffine& um, const Eigen::MatrixXd& R, const Eigen::VectorXd& x_prime,
                  double lo, double hi) {
  const int n = static_cast<int>(R.rows());
  const Eigen::VectorXd base = R.topRows(n - 1).transpose() * x_prime, dir = R.row(n - 1).transpose();
  const Eigen::VectorXd ap = up.slopes().transpose() * base + up.intercepts(), bp = up.slopes().transpose() * dir;
  const Eigen::VectorXd am = um.slopes().transpose() * base + um.intercepts(), bm = um.slopes().transpose() * dir;
  auto gap = [&](double t) { return (ap + t * bp).maxCoeff() - (am + t * bm).maxCoeff(); };
  while (gap(lo) > 0) lo -= 2 * (hi - lo);
  while (gap(hi) < 0) hi += 2 * (hi - lo);
  for (int it = 0; it < 200 && hi - lo > 1e-13 * (1 + std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (gap(mid) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Outcome explicit_formula() {
  const auto t0 = Clock::now();
  const auto& all = tear_instances();
  long nodes = 0, bad = 0;
  double worst = 0.0;
  for (const auto& inst : all) {
    const auto& L = inst.tear.lattice.lattice;
    const double step = L.max_step();
    for (std::size_t i = 0; i < L.size(); ++i) {
      ++nodes;
      if (!inst.tear.finite[i]) {
        ++bad;
        continue;
      }
      const double t = fiber_root(inst.pair.plus, inst.pair.minus, inst.frame.rotation, L.node(i),
                                               inst.tear.lattice.t_lo, inst.tear.lattice.t_hi);
      const double err = std::abs(inst.tear.h_values[i] - t);
      worst = std::max(worst, err / step);
      bad += err > step;
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 60.0,
          fmt("%.0f nodes over 100 pairs, %.0f beyond one step, worst %.2e steps, %.1f s", static_cast<double>(nodes),
              static_cast<double>(bad), worst, secs)};
}

Outcome lipschitz_chain() {
  int violations = 0;
  double lip_over_tan = 0.0, tan_over_bound = 0.0;
  for (const auto& inst : tear_instances()) {
    const auto rep = lipschitz_certificate(inst.tear, inst.pair.plus.slopes(), inst.pair.minus.slopes());
    // recompute the slope of h along lattice axes independently of the certificate
    const auto& L = inst.tear.lattice.lattice;
    double lip = 0.0;
    for (std::size_t i = 0; i < L.size(); ++i) {
      const auto idx = L.unflatten(i);
      for (int a = 0; a < L.dim(); ++a) {
        if (idx[static_cast<std::size_t>(a)] + 1 >= L.dims[static_cast<std::size_t>(a)]) continue;
        auto nb = idx;
        ++nb[static_cast<std::size_t>(a)];
        const std::size_t j = L.flatten(nb);
        lip = std::max(lip, std::abs(inst.tear.h_values[j] - inst.tear.h_values[i]) / L.spacing[a]);
      }
    }
    const double slack = 2.0 * rep.anisotropy + 1e-9;
    const bool ok = rep.pass && lip <= rep.measured_lip + 1e-9 && rep.measured_lip <= rep.tan_theta_min + slack &&
                    rep.tan_theta_min <= rep.diam_bound + slack;
    violations += !ok;
    if (rep.tan_theta_min > 1e-9) lip_over_tan = std::max(lip_over_tan, rep.measured_lip / rep.tan_theta_min);
    if (rep.diam_bound > 1e-9) tan_over_bound = std::max(tan_over_bound, rep.tan_theta_min / rep.diam_bound);
  }
  return {violations == 0, fmt("%.0f violations of lip <= tan(theta_min) <= diam/(2 d0); max lip/tan %.3f, max tan/bound %.3f",
                               static_cast<double>(violations), lip_over_tan, tan_over_bound)};
}

Outcome dc_structure_check() {
  int failures = 0;
  double worst = 0.0;
  for (const auto& inst : tear_instances()) {
    const auto dc = dc_structure(inst.tear, 1e-8);
    const auto& L = inst.tear.lattice.lattice;
    double scale = 1.0;
    for (std::size_t i = 0; i < L.size(); ++i)
      scale = std::max({scale, std::abs(inst.tear.h_plus[i]), std::abs(inst.tear.h_minus[i])});
    double least = 0.0;
    for (std::size_t i = 0; i < L.size(); ++i) {
      const auto idx = L.unflatten(i);
      for (int a = 0; a < L.dim(); ++a) {
        const auto A = static_cast<std::size_t>(a);
        if (idx[A] == 0 || idx[A] + 1 >= L.dims[A]) continue;
        auto lo = idx, hi = idx;
        --lo[A];
        ++hi[A];
        for (const auto* h : {&inst.tear.h_plus, &inst.tear.h_minus})
          least = std::min(least, (*h)[L.flatten(lo)] - 2 * (*h)[i] + (*h)[L.flatten(hi)]);
      }
    }
    worst = std::min(worst, least / scale);
    failures += !(dc.pass && least >= -1e-8 * scale);
  }
  return {failures == 0, fmt("%.0f of 100 tears fail; smallest relative second difference %.2e",
                             static_cast<double>(failures), worst)};
}

Outcome conjugacy() {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int bad = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 2 + trial % 6;
    Eigen::MatrixXd S(1, K);
    Eigen::VectorXd b(K);
    for (int k = 0; k < K; ++k) S(0, k) = 2 * g(rng), b[k] = g(rng);
    const MaxAffine f(S, b);
    std::vector<double> t, v;
    for (int k = 0; k <= 400; ++k) {
      t.push_back(-2.0 + 0.01 * k);
      v.push_back(eval(f, Eigen::VectorXd::Constant(1, t.back())));
    }
    const double smin = S.minCoeff(), smax = S.maxCoeff();
    std::vector<double> s, fine;
    const int M = 200;
    for (int q = 0; q <= M; ++q) s.push_back(smin + (smax - smin) * q / M);
    for (int q = 0; q <= 8 * M; ++q) fine.push_back(smin + (smax - smin) * q / (8 * M));
    const auto cs = conjugate_1d(t, v, s);
    const auto cf = conjugate_1d(t, v, fine);
    // interpolation error of the conjugate on the slope grid
    double interp = 0.0;
    for (std::size_t q = 0; q < fine.size(); ++q) {
      const std::size_t c = std::min<std::size_t>(q / 8, s.size() - 2);
      const double w = (fine[q] - s[c]) / (s[c + 1] - s[c]);
      interp = std::max(interp, std::abs((1 - w) * cs.values[c] + w * cs.values[c + 1] - cf.values[q]));
    }
    const auto cc = conjugate_1d(s, cs.values, t);
    double err = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) err = std::max(err, std::abs(cc.values[k] - v[k]));
    bad += err > 2.0 * interp + 1e-12;
    if (interp > 1e-12) worst = std::max(worst, err / interp);
  }
  int hull_bad = 0;
  double hull_worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto rnd = [&](int K) {
      Eigen::MatrixXd Sl(2, K);
      Eigen::VectorXd bl(K);
      for (int k = 0; k < K; ++k) Sl(0, k) = g(rng), Sl(1, k) = g(rng), bl[k] = g(rng);
      return MaxAffine(Sl, bl);
    };
    const MaxAffine f1 = rnd(4), f2 = rnd(3);
    MaxAffine f3 = rnd(5);
    const Eigen::VectorXd x = Eigen::Vector2d(u(rng), u(rng));
    const double top = std::max(eval(f1, x), eval(f2, x));
    f3 = MaxAffine(f3.slopes(), f3.intercepts().array() + (top - eval(f3, x)) + (trial % 3 == 0 ? 0.5 : 0.0));
    const std::vector<MaxAffine> fs{f1, f2, f3};
    const double tol = 1e-9;
    const auto whole = subdiff(envelope<double>(fs), x, tol);
    double m = -INFINITY;
    for (const auto& fi : fs) m = std::max(m, eval(fi, x));
    std::vector<Eigen::VectorXd> pts;
    for (const auto& fi : fs)
      if (eval(fi, x) >= m - tol) {
        const auto h = subdiff(fi, x, tol);
        for (Eigen::Index c = 0; c < h.vertices.cols(); ++c) pts.push_back(h.vertices.col(c));
      }
    PointSet expected(2, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t c = 0; c < pts.size(); ++c) expected.col(static_cast<Eigen::Index>(c)) = pts[c];
    double d = 0.0;
    for (Eigen::Index c = 0; c < whole.vertices.cols(); ++c) d = std::max(d, point_hull_distance(whole.vertices.col(c), expected));
    for (Eigen::Index c = 0; c < expected.cols(); ++c) d = std::max(d, point_hull_distance(expected.col(c), whole.vertices));
    hull_worst = std::max(hull_worst, d);
    hull_bad += d > 1e-9;
  }
  return {bad == 0 && hull_bad == 0,
          fmt("biconjugate: %.0f of 50 beyond 2x interpolation error (worst ratio %.2f); hull equality: %.0f of 50 off, "
              "worst %.1e",
              bad, worst, hull_bad, hull_worst)};
}

Outcome semidiscrete_solver() {
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const auto mu = SourceMeasure::box(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1));
  PointSet X(2, 10000);
  for (int a = 0; a < 100; ++a)
    for (int b = 0; b < 100; ++b) X.col(a * 100 + b) << (a + 0.5) / 100, (b + 0.5) / 100;
  const Eigen::VectorXd mass = Eigen::VectorXd::Constant(10000, 1e-4);
  double worst_res = 0.0, worst_time = 0.0, worst_gap = 0.0;
  bool ok = true;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Atom> atoms;
    for (int j = 0; j < 8; ++j) atoms.push_back({Eigen::Vector2d(U(rng), U(rng)), 0.2 + U(rng), j});
    const TargetDecomposition nu(atoms);
    const auto t0 = Clock::now();
    const auto rep = solve_semidiscrete(mu, nu, 1e-9);
    const double secs = seconds_since(t0);
    const auto cm = cell_masses(mu, nu, rep.dual);
    const double res = (cm.masses - nu.weights()).cwiseAbs().maxCoeff();
    const auto plan = discrete_transport(bilinear_cost(X, nu.points()), mass, nu.weights());
    const double gap = std::abs(transport_cost(mu, nu, rep.dual) - plan.cost) / std::abs(plan.cost);
    worst_res = std::max(worst_res, res);
    worst_time = std::max(worst_time, secs);
    worst_gap = std::max(worst_gap, gap);
    ok = ok && res < 1e-6 && secs < 5.0 && gap <= 0.01;
  }
  return {ok, fmt("10 instances: max residual %.1e, max time %.3f s, max cost gap to LP %.3f%%", worst_res, worst_time,
                  100 * worst_gap)};
}

Outcome two_piece_tear() {
  const auto two = two_atoms_scenario();
  const auto sol = solve_semidiscrete(two.mu, two.nu, 1e-12);
  const auto parts = decompose(two.nu, sol.dual);
  const ConvexFunction up = parts.at(0), um = parts.at(1);
  const auto frame = find_separating_frame(subgradient_cloud(up), subgradient_cloud(um));
  const auto tear = tear_height(up, um, frame, tear_lattice_for_box(frame, two.mu.lower(), two.mu.upper(), 257));
  double hmax = 0.0;
  for (double h : tear.h_values) hmax = std::max(hmax, std::abs(h));
  int disconnected = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto sc = random_k_pieces_scenario(2, seed, 4, 0.2);
    const auto s = solve_semidiscrete(sc.mu, sc.nu, 1e-10);
    const auto L = Latticed::box(sc.mu.lower(), sc.mu.upper(), 129);
    const auto field = cell_multiplicity_field(sc.mu, sc.nu, s.dual, L);
    std::vector<std::size_t> sigma, c0, c1;
    for (std::size_t i = 0; i < L.size(); ++i) {
      if (!field.inside[i]) continue;
      if (field.multiplicity[i] >= 2) sigma.push_back(i);
      else (field.active[i].front() == 0 ? c0 : c1).push_back(i);
    }
    const bool ok = !sigma.empty() && !c0.empty() && !c1.empty() && connectivity_of(L, sigma).connected &&
                    connectivity_of(L, c0).connected && connectivity_of(L, c1).connected;
    disconnected += !ok;
  }
  return {hmax == 0.0 && disconnected == 0,
          fmt("symmetric max |h| = %.1e; %.0f of 20 random two-cluster targets with a disconnected Sigma, C1 or C2", hmax,
              disconnected)};
}

Outcome unique_max() {
  int bad = 0, clusters_total = 0;
  double worst_diam = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto sc = random_k_pieces_scenario(3, seed);
    std::vector<PointSet> hulls;
    for (int id : sc.nu.piece_ids()) hulls.push_back(sc.nu.piece_points(id));
    if (!affine_independence(hulls).independent) {
      ++bad;
      continue;
    }
    const auto s = solve_semidiscrete(sc.mu, sc.nu, 1e-10);
    const auto L = Latticed::box(sc.mu.lower(), sc.mu.upper(), 129);
    const auto field = cell_multiplicity_field(sc.mu, sc.nu, s.dual, L);
    const auto r = unique_max_multiplicity(field, hulls);
    const auto comps = lattice_components(L, field.nodes_with(3));
    const double diam = cluster_diameter_steps(L, field.nodes_with(3));
    clusters_total += static_cast<int>(comps.size());
    worst_diam = std::max(worst_diam, diam);
    bad += !(r.pass && comps.size() <= 1 && diam <= 2.0);
  }
  return {bad == 0, fmt("%.0f of 20 scenarios fail; %.0f multiplicity-3 clusters in total, max diameter %.1f steps", bad,
                        clusters_total, worst_diam)};
}

Outcome coincident_roots() {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> u(-1.0, 1.0), up(0.0, 1.0);
  // pair separated along `axis` with lateral slopes small enough for a contraction
  auto pair = [&](int axis) {
    const int K = 2 + static_cast<int>(3 * up(rng));
    Eigen::MatrixXd P(2, K), M(2, K);
    Eigen::VectorXd bp(K), bm(K);
    for (int k = 0; k < K; ++k) {
      P(axis, k) = 1.0 + 0.5 * up(rng);
      M(axis, k) = -1.0 - 0.5 * up(rng);
      P(1 - axis, k) = 0.3 * u(rng);
      M(1 - axis, k) = 0.3 * u(rng);
      bp[k] = 0.2 * u(rng);
      bm[k] = 0.2 * u(rng);
    }
    return std::make_pair(MaxAffine(P, bp), MaxAffine(M, bm));
  };
  int bad = 0;
  double worst_res = 0.0, worst_gap = 0.0;
  const int G = 201;
  const double step = 2.0 / (G - 1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto [p0, m0] = pair(0);
    const auto [p1, m1] = pair(1);
    if (!check_boundary_signs(p0, m0, 0, 200, 1) || !check_boundary_signs(p1, m1, 1, 200, 1)) {
      ++bad;
      continue;
    }
    const std::vector<TearFunction> h{axis_tear(p0, m0, 0), axis_tear(p1, m1, 1)};
    const auto root = find_coincident_root(h, 2);
    // grid oracle: minimise |x0 - h0(x1)| + |x1 - h1(x0)|
    Eigen::Vector2d best(0, 0);
    double best_v = INFINITY;
    std::vector<double> h0(G), h1(G);
    for (int i = 0; i < G; ++i) {
      const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, -1.0 + i * step);
      h0[static_cast<std::size_t>(i)] = h[0](z);
      h1[static_cast<std::size_t>(i)] = h[1](z);
    }
    for (int i = 0; i < G; ++i)
      for (int j = 0; j < G; ++j) {
        const double x0 = -1.0 + i * step, x1 = -1.0 + j * step;
        const double v = std::abs(x0 - h0[static_cast<std::size_t>(j)]) + std::abs(x1 - h1[static_cast<std::size_t>(i)]);
        if (v < best_v) best_v = v, best = Eigen::Vector2d(x0, x1);
      }
    const double gap = (root.x - best).cwiseAbs().maxCoeff();
    worst_res = std::max(worst_res, root.residual);
    worst_gap = std::max(worst_gap, gap / step);
    bad += !(root.converged && root.residual < 1e-6 && gap <= step);
  }
  return {bad == 0, fmt("%.0f of 50 fail; max residual %.1e, max distance to grid minimiser %.2f steps", bad, worst_res,
                        worst_gap)};
}

Outcome stability() {
  const auto tri = triangle_scenario();
  std::vector<double> medians;
  int missing = 0;
  double worst = 0.0;
  for (double eta : {0.05, 0.02, 0.01}) {
    StabilityOptions o;
    o.eta = eta;
    o.eps = 0.1;
    for (std::uint64_t s = 1; s <= 10; ++s) o.seeds.push_back(s);
    const auto r = stability_experiment(tri.mu, tri.nu, {0, 1, 2}, o);
    for (const auto& run : r.runs) {
      missing += !run.found;
      if (run.found) worst = std::max(worst, (run.location - r.x0).norm());
    }
    missing += r.pass ? 0 : (r.runs.empty() ? 10 : 0);
    medians.push_back(r.median_displacement);
  }
  const bool monotone = medians[0] > medians[1] && medians[1] > medians[2];
  return {missing == 0 && monotone && worst <= 0.1,
          fmt("%.0f of 30 runs without an eta-multiplicity-3 node within 0.1; medians %.2e > %.2e > %.2e",
              missing, medians[0], medians[1], medians[2])};
}

Outcome appendix() {
  const auto t0 = Clock::now();
  AppendixOptions o;
  o.lattice = 512;
  const auto r = appendix_verify(o);
  const double secs = seconds_since(t0);
  double origin = 0.0;
  for (double v : r.origin_values) origin = std::max(origin, std::abs(v));
  int shifted = 0;
  for (int m : r.shifted_max_multiplicity) shifted = std::max(shifted, m);
  bool shifts_three = r.shifted_max_multiplicity.size() == 3;
  for (int m : r.shifted_max_multiplicity) shifts_three = shifts_three && m == 3;
  int curve_violations = 0;
  for (const auto& c : r.curves) curve_violations += c.violations;
  const bool ok = origin < 1e-12 && r.smallness_ok && r.region_agreement >= 0.999 && r.curves_ok && curve_violations == 0 &&
                  r.base_max_multiplicity == 4 && shifts_three && secs < 120.0;
  return {ok, fmt("max |u_i(0,0)| = %.1e; regions %.4f of nodes; %.0f curve sign violations; ", origin,
                  r.region_agreement, curve_violations) +
                  fmt("base multiplicity %.0f, after shifts j=1,2,4 max %.0f; %.1f s", r.base_max_multiplicity, shifted,
                      secs)};
}

Outcome negative_control() {
  using Vec = Eigen::VectorXd;
  std::vector<EnvelopePiece> limit{{[](const Vec& x) { return std::abs(x[0]); },
                                    [](const Vec& x) { return Vec::Constant(1, x[0] > 0 ? 1.0 : -1.0); }}};
  std::vector<PerturbationStep> schedule;
  for (int j = 2; j <= 64; j *= 2) schedule.push_back({1.0 / j, {[j](const Vec& x) { return std::abs(x[0] - 1.0 / j); }}});
  ProbeOptions po;
  po.omega0 = Latticed(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0 / 64), {129});
  const auto r = envelope_stability_probe(limit, schedule, Vec::Constant(1, 0.5), 0.5, po);
  const bool mismatch = r.witness_lo.size() == 1 && std::abs(r.witness_lo[0] + 1.0) < 1e-9 &&
                        std::abs(r.witness_hi[0] - 1.0) < 1e-9 && r.limit_lo[0] > -1.0;
  return {!r.subdiff_ok && !r.pass && mismatch,
          r.witness.size() ? fmt("rejected at x = %.4f: perturbed quotients [%.2f, %.2f] vs limit [%.2f, ", r.witness[0],
                                 r.witness_lo[0], r.witness_hi[0], r.limit_lo[0]) +
                                 fmt("%.2f]", r.limit_hi[0])
                           : std::string("no witness")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"explicit formula matches fiber bisection", explicit_formula},
      {"Lipschitz chain", lipschitz_chain},
      {"DC structure of h+ and h-", dc_structure_check},
      {"conjugacy and hull equality", conjugacy},
      {"semidiscrete solver", semidiscrete_solver},
      {"two-piece tear", two_piece_tear},
      {"unique maximal multiplicity", unique_max},
      {"coincident roots", coincident_roots},
      {"stability of tears", stability},
      {"unstable four-piece example", appendix},
      {"negative control for subdifferential convergence", negative_control},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu of %zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
