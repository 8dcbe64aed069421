#include "tears/stability_harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "tears/errors.hpp"
#include "tears/transport_lp.hpp"

namespace tears {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::map<int, PointSet> hulls_of(const TargetDecomposition& nu) {
  std::map<int, PointSet> out;
  for (int id : nu.piece_ids()) out.emplace(id, nu.piece_points(id));
  return out;
}

bool covers(const std::vector<int>& pieces, const std::vector<int>& subset) {
  return std::all_of(subset.begin(), subset.end(),
                     [&](int s) { return std::find(pieces.begin(), pieces.end(), s) != pieces.end(); });
}

double segment_distance(const Eigen::Vector2d& x, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d d = b - a;
  const double L = d.squaredNorm();
  const double t = L > 0 ? std::clamp((x - a).dot(d) / L, 0.0, 1.0) : 0.0;
  return (a + t * d - x).norm();
}

// Vertices (k >= 2) or walls (k = 1) of the power diagram whose eta-multiplicity covers the subset.
struct Feature {
  Eigen::Vector2d a, b;  // a == b for vertices
  double length = 0.0;
};

std::vector<Feature> qualifying_features(const PowerDiagram& pd, const TargetDecomposition& nu,
                                         const TargetDecomposition& reference, const std::vector<int>& subset,
                                         double eta) {
  std::vector<Feature> out;
  std::vector<int> pieces;
  if (subset.size() >= 3) {
    for (const auto& v : pd.vertices) {
      feature_multiplicity(nu, v.atoms, eta, reference, &pieces);
      if (covers(pieces, subset)) out.push_back({v.point, v.point, 0.0});
    }
    return out;
  }
  for (std::size_t j = 0; j < pd.cells.size(); ++j) {
    const ConvexPolygon& c = pd.cells[j];
    const std::size_t m = c.vertices.size();
    for (std::size_t e = 0; e < m; ++e) {
      const int other = c.edge_labels[e];
      if (other < 0 || static_cast<std::size_t>(other) < j) continue;
      feature_multiplicity(nu, {static_cast<int>(j), other}, eta, reference, &pieces);
      if (!covers(pieces, subset)) continue;
      const Eigen::Vector2d a = c.vertices[e], b = c.vertices[(e + 1) % m];
      out.push_back({a, b, (b - a).norm()});
    }
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return -1.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

Perturbation Perturbation::random(const TargetDecomposition& nu, double eta, std::uint64_t seed) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ArgumentError("perturbation: eta must be finite and nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Perturbation p;
  p.eta = eta;
  const int n = nu.dim();
  for (int id : nu.piece_ids()) {
    Eigen::VectorXd d = Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); });
    d.normalize();
    const double r = eta * (1.0 - 1e-9) * std::pow(U(rng), 1.0 / n);
    p.translations.emplace(id, r * d);
  }
  return p;
}

PerturbedTarget perturb_winfty(const TargetDecomposition& nu, const Perturbation& p, bool verify) {
  if (!(p.eta >= 0.0) || !std::isfinite(p.eta)) throw ArgumentError("perturb_winfty: eta must be finite and nonnegative");
  const auto ids = nu.piece_ids();
  double certified = 0.0;
  for (const auto& [id, t] : p.translations) {
    if (std::find(ids.begin(), ids.end(), id) == ids.end())
      throw ArgumentError("perturb_winfty: unknown piece " + std::to_string(id));
    if (t.size() != nu.dim() || !t.allFinite())
      throw ArgumentError("perturb_winfty: translation of piece " + std::to_string(id) + " is malformed");
    if (t.norm() > p.eta * (1.0 + 1e-12))
      throw ArgumentError("perturb_winfty: translation of piece " + std::to_string(id) + " exceeds eta");
    certified = std::max(certified, t.norm());
  }
  std::vector<Atom> atoms = nu.atoms();
  for (auto& a : atoms) {
    const auto it = p.translations.find(a.piece);
    if (it != p.translations.end()) a.point += it->second;
  }
  std::map<int, std::vector<Eigen::VectorXd>> grouped;
  for (const auto& a : atoms) grouped[a.piece].push_back(a.point);
  std::map<int, PointSet> hulls;
  for (const auto& [id, pts] : grouped) {
    PointSet P(static_cast<Eigen::Index>(pts.front().size()), static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) P.col(static_cast<Eigen::Index>(i)) = pts[i];
    hulls.emplace(id, std::move(P));
  }
  require_disjoint_hulls(hulls);
  PerturbedTarget out{TargetDecomposition(atoms, nu.labels(), false), certified, -1.0};
  if (verify) {
    out.bottleneck = bottleneck_distance(nu.points(), nu.weights(), out.nu.points(), out.nu.weights());
    const double scale = 1.0 + nu.points().cwiseAbs().maxCoeff();
    if (out.bottleneck > certified + 1e-12 * scale)
      throw CertificateFailure("perturb_winfty: bottleneck distance exceeds the translation bound",
                               {Eigen::VectorXd::Constant(1, out.bottleneck)});
  }
  return out;
}

StabilityReport stability_experiment(const SourceMeasure& mu, const TargetDecomposition& nu,
                                     const std::vector<int>& subset, const StabilityOptions& opt) {
  if (mu.dim() != 2 || nu.dim() != 2) throw ArgumentError("stability_experiment: only 2D scenarios are supported");
  if (subset.size() < 2) throw ArgumentError("stability_experiment: the subset needs at least two pieces");
  if (std::set<int>(subset.begin(), subset.end()).size() != subset.size())
    throw ArgumentError("stability_experiment: repeated piece in subset");
  const auto ids = nu.piece_ids();
  for (int s : subset)
    if (std::find(ids.begin(), ids.end(), s) == ids.end())
      throw ArgumentError("stability_experiment: unknown piece " + std::to_string(s));
  if (!(opt.eps > 0.0) || !(opt.eta >= 0.0)) throw ArgumentError("stability_experiment: eps must be positive, eta nonnegative");

  StabilityReport rep;
  rep.subset = subset;
  std::sort(rep.subset.begin(), rep.subset.end());
  rep.k = static_cast<int>(subset.size()) - 1;
  std::vector<PointSet> hulls;
  for (int s : rep.subset) hulls.push_back(nu.piece_points(s));
  const IndependenceReport ind = affine_independence(hulls);
  rep.independent = ind.independent;
  rep.independence = ind.message;

  const Latticed lattice = opt.lattice.dims.empty() ? Latticed::box(mu.lower(), mu.upper(), 201) : opt.lattice;
  SolverOptions so;
  const SolveReport base = solve_semidiscrete(mu, nu, opt.solver_tol, so);
  const PowerDiagram pd = power_diagram(mu, nu, base.dual);

  std::vector<Feature> feats = qualifying_features(pd, nu, nu, rep.subset, 0.0);
  if (feats.empty()) feats = qualifying_features(pd, nu, nu, rep.subset, opt.eta);
  if (feats.empty()) {
    rep.message = "base potential has no feature of multiplicity " + std::to_string(rep.k + 1) + " for the subset";
    return rep;
  }
  if (rep.k >= 2) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& f : feats) mean += f.a;
    mean /= static_cast<double>(feats.size());
    const auto best = std::min_element(feats.begin(), feats.end(), [&](const Feature& p, const Feature& q) {
      return (p.a - mean).squaredNorm() < (q.a - mean).squaredNorm();
    });
    rep.x0 = best->a;
  } else {
    const auto best = std::max_element(feats.begin(), feats.end(),
                                       [](const Feature& p, const Feature& q) { return p.length < q.length; });
    rep.x0 = 0.5 * (best->a + best->b);
  }
  rep.base_ok = true;

  std::vector<Perturbation> perts = opt.perturbations;
  std::vector<std::uint64_t> seeds = opt.seeds;
  if (perts.empty()) {
    for (std::uint64_t s : seeds) perts.push_back(Perturbation::random(nu, opt.eta, s));
  } else {
    seeds.resize(perts.size());
    for (std::size_t i = 0; i < perts.size(); ++i) seeds[i] = i;
  }

  std::vector<double> displacements;
  bool all_found = !perts.empty();
  for (std::size_t r = 0; r < perts.size(); ++r) {
    StabilityRun run;
    run.seed = seeds[r];
    try {
      const PerturbedTarget pt = perturb_winfty(nu, perts[r], opt.verify_winfty);
      run.certified = pt.certified;
      run.bottleneck = pt.bottleneck;
      SolverOptions warm;
      warm.initial = base.dual.psi;
      const SolveReport sol = solve_semidiscrete(mu, pt.nu, opt.solver_tol, warm);
      const MultiplicityField field = cell_multiplicity_field(mu, pt.nu, sol.dual, lattice, opt.eta, &nu);
      run.max_multiplicity = field.max_multiplicity();
      double nearest = kInf;
      for (std::size_t i = 0; i < lattice.size(); ++i) {
        if (!field.inside[i] || !covers(field.active[i], rep.subset)) continue;
        const Eigen::VectorXd x = lattice.node(i);
        const double d = (x - rep.x0).norm();
        if (d <= opt.eps && d < nearest) {
          nearest = d;
          run.location = x;
        }
      }
      run.found = nearest < kInf;
      const PowerDiagram ppd = power_diagram(mu, pt.nu, sol.dual);
      double disp = kInf;
      for (const auto& f : qualifying_features(ppd, pt.nu, nu, rep.subset, opt.eta))
        disp = std::min(disp, segment_distance(rep.x0, f.a, f.b));
      if (disp < kInf) {
        run.displacement = disp;
        displacements.push_back(disp);
      }
      if (!run.found) run.note = "no node of eta-multiplicity " + std::to_string(rep.k + 1) + " within eps of x0";
    } catch (const PreconditionError& e) {
      run.note = e.what();
    } catch (const ConvergenceFailure& e) {
      run.note = e.what();
    }
    all_found = all_found && run.found;
    rep.runs.push_back(std::move(run));
  }
  rep.median_displacement = median(displacements);
  rep.pass = rep.independent && rep.base_ok && all_found;
  std::ostringstream msg;
  if (!rep.independent) msg << "pieces are not affinely independent (" << ind.message << "); ";
  for (const auto& run : rep.runs)
    if (!run.found) msg << "seed " << run.seed << ": " << run.note << "; ";
  rep.message = msg.str();
  return rep;
}

namespace {

struct Interval {
  double lo, hi;
};

Interval one_sided(const ScalarField& f, const Eigen::VectorXd& x, int axis, double h) {
  Eigen::VectorXd p = x, m = x;
  p[axis] += h;
  m[axis] -= h;
  const double fx = f(x);
  return {(fx - f(m)) / h, (f(p) - fx) / h};
}

// root in t of f(t) on [-1, 1] by bisection; f increasing across the interval
double bisect(const std::function<double(double)>& f) {
  double lo = -1.0, hi = 1.0;
  if (f(lo) >= 0.0) return lo;
  if (f(hi) <= 0.0) return hi;
  for (int it = 0; it < 80 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

ProbeReport envelope_stability_probe(const std::vector<EnvelopePiece>& pieces, const std::vector<PerturbationStep>& schedule,
                                     const Eigen::VectorXd& x0, double eps, const ProbeOptions& opt) {
  const int n = static_cast<int>(x0.size());
  const int K = static_cast<int>(pieces.size());
  if (n < 1 || K < 1) throw ArgumentError("envelope_stability_probe: need a point and at least one piece");
  if (!(eps > 0.0)) throw ArgumentError("envelope_stability_probe: eps must be positive");
  for (const auto& p : pieces)
    if (!p.value) throw ArgumentError("envelope_stability_probe: every piece needs a value");
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    if (static_cast<int>(schedule[s].pieces.size()) != K)
      throw ArgumentError("envelope_stability_probe: perturbation step " + std::to_string(s) + " has the wrong piece count");
    if (s > 0 && schedule[s].magnitude > schedule[s - 1].magnitude)
      throw ArgumentError("envelope_stability_probe: the schedule must be non-increasing in magnitude");
  }

  ProbeReport rep;
  Eigen::VectorXd v0(K);
  for (int i = 0; i < K; ++i) v0[i] = pieces[static_cast<std::size_t>(i)].value(x0);
  const double top = v0.maxCoeff();
  for (int i = 0; i < K; ++i)
    if (v0[i] >= top - opt.active_tol * (1.0 + std::abs(top))) rep.active.push_back(i);
  rep.k = static_cast<int>(rep.active.size()) - 1;
  std::ostringstream msg;

  // C1 at x0: supplied gradient against central and one-sided quotients
  const double h = opt.fd_step;
  const double c1_tol = 1e3 * h;
  std::vector<Eigen::VectorXd> grads;
  rep.c1 = true;
  for (int i : rep.active) {
    const auto& p = pieces[static_cast<std::size_t>(i)];
    if (!p.gradient) {
      rep.c1 = false;
      msg << "piece " << i << " has no gradient; ";
      grads.push_back(Eigen::VectorXd::Zero(n));
      continue;
    }
    const Eigen::VectorXd g = p.gradient(x0);
    grads.push_back(g);
    for (int a = 0; a < n; ++a) {
      const Interval q = one_sided(p.value, x0, a, h);
      const double tol = c1_tol * (1.0 + std::abs(g[a]));
      if (std::abs(q.lo - g[a]) > tol || std::abs(q.hi - g[a]) > tol) {
        rep.c1 = false;
        msg << "piece " << i << " is not C1 at x0 along axis " << a << "; ";
        break;
      }
    }
  }

  // gradient differences must have rank k
  Eigen::MatrixXd V(n, std::max(rep.k, 0));
  for (int i = 0; i < rep.k; ++i) V.col(i) = grads[static_cast<std::size_t>(i)] - grads.back();
  double gscale = 1.0;
  for (const auto& g : grads) gscale = std::max(gscale, g.cwiseAbs().maxCoeff());
  if (rep.k >= 1 && rep.k <= n) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(V);
    rep.rank_ok = svd.singularValues().minCoeff() > 1e-8 * gscale;
  }
  if (rep.k < 1) msg << "fewer than two pieces are active at x0; ";
  if (rep.k > n) msg << "more than n+1 pieces are active at x0; ";
  if (rep.k >= 1 && rep.k <= n && !rep.rank_ok) msg << "gradient differences are rank deficient; ";

  // uniform convergence of subdifferentials of the active pieces over omega0
  Latticed omega = opt.omega0;
  if (omega.dims.empty()) {
    const Eigen::VectorXd r = Eigen::VectorXd::Constant(n, eps);
    omega = Latticed::box(x0 - r, x0 + r, n <= 2 ? 21 : 7);
  }
  auto excess_at = [&](const ScalarField& perturbed, const ScalarField& lim, const Eigen::VectorXd& x) {
    double e = 0.0;
    for (int a = 0; a < n; ++a) {
      const Interval q = one_sided(perturbed, x, a, h);
      const Interval l = one_sided(lim, x, a, h);
      e = std::max({e, l.lo - q.lo, q.hi - l.hi});
    }
    return e;
  };
  std::vector<double> excess(schedule.size(), 0.0);
  rep.subdiff_ok = true;
  if (!schedule.empty()) {
    std::size_t wnode = 0;
    int wpiece = rep.active.front();
    for (std::size_t s = 0; s < schedule.size(); ++s)
      for (std::size_t node = 0; node < omega.size(); ++node) {
        const Eigen::VectorXd x = omega.node(node);
        for (int i : rep.active) {
          const double e = excess_at(schedule[s].pieces[static_cast<std::size_t>(i)], pieces[static_cast<std::size_t>(i)].value, x);
          if (e > excess[s]) {
            excess[s] = e;
            if (s + 1 == schedule.size()) wnode = node, wpiece = i;
          }
        }
      }
    const auto& wp = schedule.back().pieces[static_cast<std::size_t>(wpiece)];
    const auto& wl = pieces[static_cast<std::size_t>(wpiece)].value;
    rep.final_excess = excess.back();
    rep.witness = omega.node(wnode);
    rep.witness_lo.resize(n);
    rep.witness_hi.resize(n);
    rep.limit_lo.resize(n);
    rep.limit_hi.resize(n);
    for (int a = 0; a < n; ++a) {
      const Interval q = one_sided(wp, rep.witness, a, h);
      const Interval l = one_sided(wl, rep.witness, a, h);
      rep.witness_lo[a] = q.lo;
      rep.witness_hi[a] = q.hi;
      rep.limit_lo[a] = l.lo - eps;
      rep.limit_hi[a] = l.hi + eps;
    }
    rep.subdiff_ok = rep.final_excess < eps;
    if (!rep.subdiff_ok) msg << "subdifferentials do not converge uniformly: excess " << rep.final_excess << " >= eps; ";
  }

  const bool normalizable = rep.k >= 1 && rep.k <= n && rep.rank_ok;
  if (!normalizable) {
    rep.pass = false;
    rep.message = msg.str();
    return rep;
  }

  // x = x0 + eta M z with M^T (g_i - g_{k+1}) = e_i
  Eigen::MatrixXd B(n, n);
  B.leftCols(rep.k) = V;
  if (rep.k < n) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(V);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    B.rightCols(n - rep.k) = Q.rightCols(n - rep.k);
  }
  const Eigen::MatrixXd M = B.transpose().inverse();
  const int k = rep.k;
  const int last = rep.active.back();
  std::vector<int> inactive;
  for (int i = 0; i < K; ++i)
    if (std::find(rep.active.begin(), rep.active.end(), i) == rep.active.end()) inactive.push_back(i);

  using Fields = std::vector<ScalarField>;
  auto diff = [&](const Fields& f, int i, double eta, const Eigen::VectorXd& z) {
    const Eigen::VectorXd x = x0 + eta * M * z;
    return f[static_cast<std::size_t>(rep.active[static_cast<std::size_t>(i)])](x) - f[static_cast<std::size_t>(last)](x);
  };
  auto faces_ok = [&](const Fields& f, double eta) {
    const int S = std::max(2, opt.face_samples);
    const int free = n - 1;
    std::size_t count = 1;
    for (int a = 0; a < free; ++a) count *= static_cast<std::size_t>(S);
    for (int i = 0; i < k; ++i)
      for (std::size_t c = 0; c < count; ++c) {
        Eigen::VectorXd z(n);
        std::size_t rest = c;
        for (int a = 0; a < n; ++a) {
          if (a == i) continue;
          z[a] = -1.0 + 2.0 * static_cast<double>(rest % static_cast<std::size_t>(S)) / (S - 1);
          rest /= static_cast<std::size_t>(S);
        }
        z[i] = 1.0;
        if (!(diff(f, i, eta, z) > 0.0)) return false;
        z[i] = -1.0;
        if (!(diff(f, i, eta, z) < 0.0)) return false;
      }
    return true;
  };
  Fields limit;
  for (const auto& p : pieces) limit.push_back(p.value);
  double eta = opt.eta0 > 0.0 ? opt.eta0 : 0.5 * eps;
  const double mnorm = Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()[0];
  eta = std::min(eta, 0.99 * eps / std::max(1e-300, mnorm * std::sqrt(double(n))));
  while (eta > 1e-12 * eps && !faces_ok(limit, eta)) eta *= 0.5;

  auto solve = [&](const Fields& f, const Eigen::VectorXd& tail, ProbeStep& step) {
    std::vector<TearFunction> tears;
    for (int i = 0; i < k; ++i)
      tears.push_back([&, i](const Eigen::VectorXd& rest) {
        return bisect([&](double t) {
          Eigen::VectorXd z(n);
          for (int a = 0, b = 0; a < n; ++a) z[a] = a == i ? t : rest[b++];
          return diff(f, i, eta, z);
        });
      });
    CoincidentRoot root;
    try {
      root = find_coincident_root(tears, n, tail, opt.root);
    } catch (const PreconditionError& e) {
      step.note = e.what();
      return false;
    }
    step.point = x0 + eta * M * root.x;
    step.residual = root.residual;
    step.distance = (step.point - x0).norm();
    Eigen::VectorXd vals(K);
    for (int i = 0; i < K; ++i) vals[i] = f[static_cast<std::size_t>(i)](step.point);
    double lo = kInf, hi = -kInf;
    for (int i : rep.active) {
      lo = std::min(lo, vals[i]);
      hi = std::max(hi, vals[i]);
    }
    double others = -kInf;
    for (int i : inactive) others = std::max(others, vals[i]);
    step.touching = hi - lo <= opt.touch_tol * (1.0 + std::abs(hi)) && lo > others;
    return root.converged;
  };

  std::vector<char> ok(schedule.size(), 0);
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const auto& st = schedule[s];
    ProbeStep step;
    step.magnitude = st.magnitude;
    step.eta = eta;
    step.excess = excess[s];
    if (!faces_ok(st.pieces, eta)) {
      step.note = "face signs fail at this magnitude";
    } else {
      step.root_found = solve(st.pieces, Eigen::VectorXd::Zero(n - k), step);
    }
    ok[s] = step.root_found && step.touching && step.distance < eps;
    if (!ok[s] && step.note.empty()) step.note = step.root_found ? "root is not a touching point in B_eps(x0)" : "root not found";
    rep.steps.push_back(std::move(step));
  }
  std::size_t first = schedule.size();
  while (first > 0 && ok[first - 1]) --first;
  const bool steps_ok = first < schedule.size();
  if (steps_ok) rep.converged_from = schedule[first].magnitude;

  rep.monotone = steps_ok;
  for (std::size_t s = first + 1; s < rep.steps.size(); ++s)
    if (rep.steps[s].distance > rep.steps[s - 1].distance + 1e-8) rep.monotone = false;

  // the coincidence set extends along every free axis of the normalized frame
  if (!schedule.empty()) {
    rep.graph_dimension = 0;
    for (int a = 0; a < n - k; ++a) {
      bool extends = true;
      for (double off : {-0.5, 0.5}) {
        Eigen::VectorXd tail = Eigen::VectorXd::Zero(n - k);
        tail[a] = off;
        ProbeStep probe;
        extends = extends && solve(schedule.back().pieces, tail, probe) && probe.touching;
      }
      rep.graph_dimension += extends;
    }
  }

  if (!steps_ok) msg << "no touching coincidence point at the smallest magnitude; ";
  if (!rep.monotone) msg << "distance to x0 does not decrease along the schedule; ";
  if (rep.graph_dimension != n - k) msg << "coincidence graph has dimension " << rep.graph_dimension << "; ";
  rep.pass = rep.c1 && rep.rank_ok && rep.subdiff_ok && steps_ok && rep.monotone && rep.graph_dimension == n - k;
  rep.message = msg.str();
  return rep;
}

}  // namespace tears
