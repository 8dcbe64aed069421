#include "tears/singularity_analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Dense>

#include "tears/errors.hpp"
#include "tears/parallel.hpp"
#include "tears/tear_extractor.hpp"

namespace tears {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::vector<int>> neighbour_offsets(int n) {
  std::vector<std::vector<int>> out;
  const int total = static_cast<int>(std::pow(3, n));
  for (int c = 0; c < total; ++c) {
    std::vector<int> off(static_cast<std::size_t>(n));
    int r = c;
    bool zero = true;
    for (int a = 0; a < n; ++a) {
      off[static_cast<std::size_t>(a)] = r % 3 - 1;
      zero &= off[static_cast<std::size_t>(a)] == 0;
      r /= 3;
    }
    if (!zero) out.push_back(off);
  }
  return out;
}

double scale_of(const PointSet& P) { return std::max(1.0, P.size() ? P.cwiseAbs().maxCoeff() : 0.0); }

}  // namespace

PieceFamily PieceFamily::from(const std::map<int, MaxAffine>& pieces) {
  if (pieces.empty()) throw ArgumentError("piece family: no pieces");
  PieceFamily f;
  std::vector<MaxAffine> fs;
  for (const auto& [id, g] : pieces) {
    f.ids.push_back(id);
    fs.push_back(g);
  }
  f.values = [fs](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    out.resize(static_cast<Eigen::Index>(fs.size()));
    for (std::size_t i = 0; i < fs.size(); ++i) out[static_cast<Eigen::Index>(i)] = eval(fs[i], x);
  };
  return f;
}

PieceFamily PieceFamily::from(const std::map<int, ConvexFunction>& pieces) {
  if (pieces.empty()) throw ArgumentError("piece family: no pieces");
  PieceFamily f;
  std::vector<ConvexFunction> fs;
  for (const auto& [id, g] : pieces) {
    f.ids.push_back(id);
    fs.push_back(g);
  }
  f.values = [fs](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    out.resize(static_cast<Eigen::Index>(fs.size()));
    for (std::size_t i = 0; i < fs.size(); ++i) out[static_cast<Eigen::Index>(i)] = eval(fs[i], x);
  };
  return f;
}

Eigen::VectorXd PieceFamily::operator()(const Eigen::VectorXd& x) const {
  Eigen::VectorXd v;
  values(x, v);
  return v;
}

int MultiplicityField::max_multiplicity() const {
  return multiplicity.empty() ? 0 : *std::max_element(multiplicity.begin(), multiplicity.end());
}

std::vector<std::size_t> MultiplicityField::nodes_with(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < multiplicity.size(); ++i)
    if (inside[i] && multiplicity[i] == k) out.push_back(i);
  return out;
}

std::vector<std::size_t> MultiplicityField::nodes_at_least(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < multiplicity.size(); ++i)
    if (inside[i] && multiplicity[i] >= k) out.push_back(i);
  return out;
}

bool MultiplicityField::is_active(std::size_t node, int piece) const {
  return std::binary_search(active[node].begin(), active[node].end(), piece);
}

MultiplicityField multiplicity_field(const PieceFamily& pieces, const Latticed& lattice, double tol,
                                     const SupportMask& mask) {
  if (!(tol >= 0.0)) throw ArgumentError("multiplicity_field: tol must be nonnegative");
  MultiplicityField f;
  f.lattice = lattice;
  f.tol = tol;
  const std::size_t N = lattice.size();
  f.multiplicity.assign(N, 0);
  f.active.assign(N, {});
  f.inside.assign(N, 0);
  parallel_for(N, [&](std::size_t i) {
    const Eigen::VectorXd x = lattice.node(i);
    if (mask && !mask(x)) return;
    f.inside[i] = 1;
    Eigen::VectorXd v;
    pieces.values(x, v);
    const double top = v.maxCoeff();
    for (int k = 0; k < pieces.size(); ++k)
      if (v[k] >= top - tol) f.active[i].push_back(pieces.ids[static_cast<std::size_t>(k)]);
    std::sort(f.active[i].begin(), f.active[i].end());
    f.multiplicity[i] = static_cast<int>(f.active[i].size());
  });
  return f;
}

void require_disjoint_hulls(const std::map<int, PointSet>& hulls) {
  for (auto i = hulls.begin(); i != hulls.end(); ++i)
    for (auto j = std::next(i); j != hulls.end(); ++j) {
      const HullDistance d = hull_distance(i->second, j->second);
      if (d.distance <= 1e-12 * std::max(scale_of(i->second), scale_of(j->second)))
        throw PreconditionError("piece hulls " + std::to_string(i->first) + " and " + std::to_string(j->first) +
                                " overlap; multiplicity from active sets is not valid");
    }
}

PowerDiagram power_diagram(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi) {
  if (mu.dim() != 2 || nu.dim() != 2) throw ArgumentError("power_diagram: two-dimensional input required");
  if (psi.psi.size() != nu.size()) throw ArgumentError("power_diagram: one dual weight per atom");
  const int N = nu.size();
  const PointSet Y = nu.points();
  PowerDiagram pd;
  pd.cells.assign(static_cast<std::size_t>(N), {});
  parallel_for(static_cast<std::size_t>(N), [&](std::size_t js) {
    const int j = static_cast<int>(js);
    std::vector<int> others;
    for (int k = 0; k < N; ++k)
      if (k != j) others.push_back(k);
    std::sort(others.begin(), others.end(), [&](int a, int b) {
      return (Y.col(a) - Y.col(j)).squaredNorm() < (Y.col(b) - Y.col(j)).squaredNorm();
    });
    ConvexPolygon cell = mu.support();
    for (int k : others) {
      cell = clip(cell, Eigen::Vector2d(Y(0, k) - Y(0, j), Y(1, k) - Y(1, j)), psi.psi[k] - psi.psi[j], k);
      if (cell.empty()) break;
    }
    pd.cells[js] = std::move(cell);
  });
  const double scale = std::max(1.0, Y.cwiseAbs().maxCoeff()) * std::max(1.0, mu.upper().cwiseAbs().maxCoeff()) +
                       psi.psi.cwiseAbs().maxCoeff();
  std::map<std::vector<int>, std::vector<Eigen::Vector2d>> seen;
  for (int j = 0; j < N; ++j) {
    const ConvexPolygon& c = pd.cells[static_cast<std::size_t>(j)];
    if (c.empty()) continue;
    const std::size_t m = c.vertices.size();
    for (std::size_t e = 0; e < m; ++e) {
      const int l0 = c.edge_labels[(e + m - 1) % m], l1 = c.edge_labels[e];
      if (l0 < 0 || l1 < 0 || l0 == l1) continue;
      const Eigen::Vector2d p = c.vertices[e];
      const Eigen::VectorXd score = Y.transpose() * p - psi.psi;
      const double top = score.maxCoeff();
      std::vector<int> atoms;
      for (int k = 0; k < N; ++k)
        if (score[k] >= top - 1e-11 * scale) atoms.push_back(k);
      for (int k : {j, l0, l1})
        if (!std::count(atoms.begin(), atoms.end(), k)) atoms.push_back(k);
      std::sort(atoms.begin(), atoms.end());
      auto& pts = seen[atoms];
      bool dup = false;
      for (const auto& q : pts) dup |= (q - p).norm() <= 1e-9 * scale;
      if (dup) continue;
      pts.push_back(p);
      pd.vertices.push_back({p, atoms});
    }
  }
  return pd;
}

int feature_multiplicity(const TargetDecomposition& nu, const std::vector<int>& atoms, double eta,
                         const TargetDecomposition& reference, std::vector<int>* pieces) {
  std::vector<int> hit;
  if (&reference == &nu && eta == 0.0) {
    for (int a : atoms) hit.push_back(nu.atoms()[static_cast<std::size_t>(a)].piece);
    std::sort(hit.begin(), hit.end());
    hit.erase(std::unique(hit.begin(), hit.end()), hit.end());
  } else {
    PointSet P(nu.dim(), static_cast<Eigen::Index>(atoms.size()));
    for (std::size_t k = 0; k < atoms.size(); ++k)
      P.col(static_cast<Eigen::Index>(k)) = nu.atoms()[static_cast<std::size_t>(atoms[k])].point;
    for (int id : reference.piece_ids()) {
      const PointSet Q = reference.piece_points(id);
      if (hull_distance(P, Q).distance <= eta + 1e-12 * std::max(scale_of(P), scale_of(Q))) hit.push_back(id);
    }
  }
  if (pieces) *pieces = hit;
  return static_cast<int>(hit.size());
}

MultiplicityField cell_multiplicity_field(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi,
                                          const Latticed& L, double eta, const TargetDecomposition* reference) {
  if (L.dim() != 2) throw ArgumentError("cell_multiplicity_field: two-dimensional lattice required");
  if (!(eta >= 0.0)) throw ArgumentError("cell_multiplicity_field: eta must be nonnegative");
  const TargetDecomposition& ref = reference ? *reference : nu;
  const PowerDiagram pd = power_diagram(mu, nu, psi);
  const PointSet Y = nu.points();
  MultiplicityField f;
  f.lattice = L;
  f.tol = eta;
  const std::size_t NN = L.size();
  f.multiplicity.assign(NN, 0);
  f.active.assign(NN, {});
  f.inside.assign(NN, 0);
  const int nx = L.dims[0], ny = L.dims[1];
  const double ox = L.origin[0], oy = L.origin[1], hx = L.spacing[0], hy = L.spacing[1];

  std::vector<int> single_mult(static_cast<std::size_t>(nu.size()));
  std::vector<std::vector<int>> single_pieces(static_cast<std::size_t>(nu.size()));
  for (int j = 0; j < nu.size(); ++j)
    single_mult[static_cast<std::size_t>(j)] = feature_multiplicity(nu, {j}, eta, ref, &single_pieces[static_cast<std::size_t>(j)]);

  parallel_for(NN, [&](std::size_t i) {
    const Eigen::VectorXd x = L.node(i);
    if (!mu.contains(x, 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff()))) return;
    f.inside[i] = 1;
    Eigen::Index best;
    (Y.transpose() * x - psi.psi).maxCoeff(&best);
    f.multiplicity[i] = single_mult[static_cast<std::size_t>(best)];
    f.active[i] = single_pieces[static_cast<std::size_t>(best)];
  });

  auto offer = [&](int ix, int iy, int mult, const std::vector<int>& pieces) {
    if (ix < 0 || iy < 0 || ix >= nx || iy >= ny) return;
    const std::size_t flat = static_cast<std::size_t>(ix) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(iy);
    if (!f.inside[flat] || mult <= f.multiplicity[flat]) return;
    f.multiplicity[flat] = mult;
    f.active[flat] = pieces;
  };
  const double slack = 1e-12;

  // walls: nodes whose closed cell meets the segment
  for (int j = 0; j < nu.size(); ++j) {
    const ConvexPolygon& c = pd.cells[static_cast<std::size_t>(j)];
    if (c.empty()) continue;
    const std::size_t m = c.vertices.size();
    for (std::size_t e = 0; e < m; ++e) {
      const int k = c.edge_labels[e];
      if (k <= j) continue;
      std::vector<int> pieces;
      const int mult = feature_multiplicity(nu, {j, k}, eta, ref, &pieces);
      const Eigen::Vector2d a = c.vertices[e], b = c.vertices[(e + 1) % m];
      const int c0 = static_cast<int>(std::ceil((std::min(a.x(), b.x()) - ox) / hx - 0.5 - slack));
      const int c1 = static_cast<int>(std::floor((std::max(a.x(), b.x()) - ox) / hx + 0.5 + slack));
      for (int ix = std::max(c0, 0); ix <= std::min(c1, nx - 1); ++ix) {
        const double xl = ox + (ix - 0.5) * hx, xr = ox + (ix + 0.5) * hx;
        double y0, y1;
        if (std::abs(b.x() - a.x()) <= 1e-300) {
          y0 = std::min(a.y(), b.y());
          y1 = std::max(a.y(), b.y());
        } else {
          const double t0 = std::clamp((xl - a.x()) / (b.x() - a.x()), 0.0, 1.0);
          const double t1 = std::clamp((xr - a.x()) / (b.x() - a.x()), 0.0, 1.0);
          const double ya = a.y() + t0 * (b.y() - a.y()), yb = a.y() + t1 * (b.y() - a.y());
          y0 = std::min(ya, yb);
          y1 = std::max(ya, yb);
        }
        const int r0 = static_cast<int>(std::ceil((y0 - oy) / hy - 0.5 - slack));
        const int r1 = static_cast<int>(std::floor((y1 - oy) / hy + 0.5 + slack));
        for (int iy = std::max(r0, 0); iy <= std::min(r1, ny - 1); ++iy) offer(ix, iy, mult, pieces);
      }
    }
  }
  // vertices
  for (const auto& v : pd.vertices) {
    std::vector<int> pieces;
    const int mult = feature_multiplicity(nu, v.atoms, eta, ref, &pieces);
    const double u = (v.point.x() - ox) / hx, w = (v.point.y() - oy) / hy;
    for (int ix = static_cast<int>(std::ceil(u - 0.5 - slack)); ix <= static_cast<int>(std::floor(u + 0.5 + slack)); ++ix)
      for (int iy = static_cast<int>(std::ceil(w - 0.5 - slack)); iy <= static_cast<int>(std::floor(w + 0.5 + slack)); ++iy)
        offer(ix, iy, mult, pieces);
  }
  return f;
}

std::vector<std::vector<std::size_t>> lattice_components(const Latticed& L, const std::vector<std::size_t>& nodes) {
  std::vector<char> member(L.size(), 0), seen(L.size(), 0);
  for (std::size_t i : nodes) member[i] = 1;
  const auto offsets = neighbour_offsets(L.dim());
  std::vector<std::vector<std::size_t>> comps;
  for (std::size_t s : nodes) {
    if (seen[s]) continue;
    std::vector<std::size_t> comp;
    std::deque<std::size_t> q{s};
    seen[s] = 1;
    while (!q.empty()) {
      const std::size_t cur = q.front();
      q.pop_front();
      comp.push_back(cur);
      const auto idx = L.unflatten(cur);
      for (const auto& off : offsets) {
        std::vector<int> nb = idx;
        bool ok = true;
        for (std::size_t a = 0; a < nb.size() && ok; ++a) {
          nb[a] += off[a];
          ok = nb[a] >= 0 && nb[a] < L.dims[a];
        }
        if (!ok) continue;
        const std::size_t f = L.flatten(nb);
        if (member[f] && !seen[f]) {
          seen[f] = 1;
          q.push_back(f);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  return comps;
}

double cluster_diameter_steps(const Latticed& L, const std::vector<std::size_t>& nodes) {
  if (nodes.size() < 2) return 0.0;
  std::vector<std::vector<int>> idx;
  for (std::size_t i : nodes) idx.push_back(L.unflatten(i));
  auto dist = [](const std::vector<int>& a, const std::vector<int>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += double(a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
  };
  if (idx.size() > 4000) {
    std::vector<int> lo = idx[0], hi = idx[0];
    for (const auto& v : idx)
      for (std::size_t k = 0; k < v.size(); ++k) {
        lo[k] = std::min(lo[k], v[k]);
        hi[k] = std::max(hi[k], v[k]);
      }
    return dist(lo, hi);
  }
  double d = 0.0;
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b) d = std::max(d, dist(idx[a], idx[b]));
  return d;
}

namespace {

std::vector<int> positions_of(const PieceFamily& f, const std::vector<int>& subset) {
  std::vector<int> pos;
  for (int id : subset) {
    const auto it = std::find(f.ids.begin(), f.ids.end(), id);
    if (it == f.ids.end()) throw ArgumentError("coincidence_set: unknown piece id " + std::to_string(id));
    pos.push_back(static_cast<int>(it - f.ids.begin()));
  }
  return pos;
}

// differences u_{s_i} - u_{s_0}, i >= 1
Eigen::VectorXd gaps(const PieceFamily& f, const std::vector<int>& pos, const Eigen::VectorXd& x) {
  const Eigen::VectorXd v = f(x);
  Eigen::VectorXd g(static_cast<Eigen::Index>(pos.size()) - 1);
  for (std::size_t i = 1; i < pos.size(); ++i) g[static_cast<Eigen::Index>(i - 1)] = v[pos[i]] - v[pos[0]];
  return g;
}

Eigen::MatrixXd gap_jacobian(const PieceFamily& f, const std::vector<int>& pos, const Eigen::VectorXd& x, double h) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd J(static_cast<Eigen::Index>(pos.size()) - 1, n);
  for (int a = 0; a < n; ++a) {
    Eigen::VectorXd p = x, m = x;
    p[a] += h;
    m[a] -= h;
    J.col(a) = (gaps(f, pos, p) - gaps(f, pos, m)) / (2 * h);
  }
  return J;
}

}  // namespace

CoincidenceSet coincidence_set(const PieceFamily& pieces, const std::vector<int>& subset, const Latticed& L, double tol,
                               const SupportMask& mask) {
  if (subset.size() < 2) throw ArgumentError("coincidence_set: need at least two pieces");
  if (!(tol >= 0.0)) throw ArgumentError("coincidence_set: tol must be nonnegative");
  const auto pos = positions_of(pieces, subset);
  CoincidenceSet cs;
  cs.subset = subset;
  const std::size_t N = L.size();
  std::vector<char> in_sigma(N, 0), in_up(N, 0);
  parallel_for(N, [&](std::size_t i) {
    const Eigen::VectorXd x = L.node(i);
    if (mask && !mask(x)) return;
    const Eigen::VectorXd v = pieces(x);
    double lo = kInf, hi = -kInf;
    for (int p : pos) {
      lo = std::min(lo, v[p]);
      hi = std::max(hi, v[p]);
    }
    in_sigma[i] = hi - lo <= tol;
    in_up[i] = lo >= v.maxCoeff() - tol;
  });
  for (std::size_t i = 0; i < N; ++i) {
    if (in_sigma[i]) cs.sigma.push_back(i);
    if (in_up[i]) cs.sigma_up.push_back(i);
    if (in_sigma[i] != in_up[i]) cs.discrepancy.push_back(i);
  }
  const int n = L.dim();
  const int k = static_cast<int>(subset.size()) - 1;
  if (cs.sigma.empty()) return cs;

  // representative node: the one with the smallest spread
  std::size_t rep = cs.sigma.front();
  double best = kInf;
  for (std::size_t i : cs.sigma) {
    const double s = gaps(pieces, pos, L.node(i)).cwiseAbs().maxCoeff();
    if (s < best) {
      best = s;
      rep = i;
    }
  }
  const double h = 0.5 * L.min_step();
  const Eigen::MatrixXd J = gap_jacobian(pieces, pos, L.node(rep), h);
  // greedy choice of solved axes maximizing the smallest singular value
  std::vector<int> axes;
  for (int step = 0; step < std::min(k, n); ++step) {
    int pick = -1;
    double score = -1.0;
    for (int a = 0; a < n; ++a) {
      if (std::count(axes.begin(), axes.end(), a)) continue;
      std::vector<int> trial = axes;
      trial.push_back(a);
      Eigen::MatrixXd S(J.rows(), static_cast<Eigen::Index>(trial.size()));
      for (std::size_t c = 0; c < trial.size(); ++c) S.col(static_cast<Eigen::Index>(c)) = J.col(trial[c]);
      const double s = Eigen::JacobiSVD<Eigen::MatrixXd>(S).singularValues().minCoeff();
      if (s > score) {
        score = s;
        pick = a;
      }
    }
    axes.push_back(pick);
  }
  std::sort(axes.begin(), axes.end());
  cs.graph_axes = axes;
  if (k >= n) return cs;

  // graph over the free coordinates: Newton in the solved coordinates, seeded by the band
  std::vector<int> freeax;
  for (int a = 0; a < n; ++a)
    if (!std::count(axes.begin(), axes.end(), a)) freeax.push_back(a);
  std::map<std::vector<int>, Eigen::VectorXd> graph;
  std::map<std::vector<int>, int> count;
  for (std::size_t i : cs.sigma) {
    const auto idx = L.unflatten(i);
    std::vector<int> key;
    for (int a : freeax) key.push_back(idx[static_cast<std::size_t>(a)]);
    const Eigen::VectorXd x = L.node(i);
    auto& acc = graph[key];
    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(n);
    acc += x;
    ++count[key];
  }
  for (auto& [key, x] : graph) {
    x /= count[key];
    for (int it = 0; it < 50; ++it) {
      const Eigen::VectorXd g = gaps(pieces, pos, x);
      if (g.cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + pieces(x).cwiseAbs().maxCoeff())) break;
      const Eigen::MatrixXd Jx = gap_jacobian(pieces, pos, x, h * 1e-3);
      Eigen::MatrixXd S(k, k);
      for (int c = 0; c < k; ++c) S.col(c) = Jx.col(axes[static_cast<std::size_t>(c)]);
      const Eigen::VectorXd d = S.fullPivLu().solve(-g);
      if (!d.allFinite()) break;
      for (int c = 0; c < k; ++c) x[axes[static_cast<std::size_t>(c)]] += d[c];
    }
  }
  for (const auto& [key, x] : graph)
    for (std::size_t a = 0; a < freeax.size(); ++a) {
      std::vector<int> nb = key;
      nb[a] += 1;
      const auto it = graph.find(nb);
      if (it == graph.end()) continue;
      double dsolved = 0.0;
      for (int c : axes) dsolved = std::max(dsolved, std::abs(it->second[c] - x[c]));
      cs.graph_lipschitz = std::max(cs.graph_lipschitz, dsolved / L.spacing[freeax[a]]);
    }
  return cs;
}

CoincidenceSet coincidence_set(const std::map<int, MaxAffine>& pieces, const std::vector<int>& subset, const Latticed& L,
                               double tol, const SupportMask& mask) {
  CoincidenceSet cs = coincidence_set(PieceFamily::from(pieces), subset, L, tol, mask);
  if (subset.size() != 2 || cs.sigma.empty()) return cs;
  const MaxAffine& a = pieces.at(subset[0]);
  const MaxAffine& b = pieces.at(subset[1]);
  const SeparatingFrame frame = find_separating_frame(a.slopes(), b.slopes());
  const int n = L.dim();
  const double band = tol / (2.0 * frame.spacing);
  double worst = 0.0;
  for (std::size_t i : cs.sigma) {
    const Eigen::VectorXd y = frame.to_frame(L.node(i));
    const TearPoint tp = tear_height_at(a, b, frame, y.head(n - 1));
    if (!tp.finite) continue;
    worst = std::max(worst, std::max(0.0, std::abs(y[n - 1] - tp.h) - band) / L.max_step());
  }
  cs.tear_deviation_steps = worst;
  cs.tear_agrees = worst <= 1.0 + 1e-9;
  return cs;
}

namespace {

// sign of det[p_1 - p_0, ..., p_m - p_0] for m+1 points in R^m
double simplex_det(const std::vector<Eigen::VectorXd>& pts) {
  const Eigen::Index m = static_cast<Eigen::Index>(pts.size()) - 1;
  Eigen::MatrixXd M(m, m);
  for (Eigen::Index c = 0; c < m; ++c) M.col(c) = pts[static_cast<std::size_t>(c + 1)] - pts[0];
  return m == 0 ? 1.0 : M.determinant();
}

struct SignScan {
  bool same_sign = false;
  double min_abs = kInf;
  std::vector<int> pos_sel, neg_sel, zero_sel;
};

SignScan scan_signs(const std::vector<PointSet>& H, double zero_tol) {
  SignScan s;
  const std::size_t k = H.size();
  std::vector<int> sel(k, 0);
  bool pos = false, neg = false;
  while (true) {
    std::vector<Eigen::VectorXd> pts;
    for (std::size_t i = 0; i < k; ++i) pts.push_back(H[i].col(sel[i]));
    const double d = simplex_det(pts);
    s.min_abs = std::min(s.min_abs, std::abs(d));
    if (std::abs(d) <= zero_tol) {
      if (s.zero_sel.empty()) s.zero_sel = sel;
    } else if (d > 0) {
      if (!pos) s.pos_sel = sel;
      pos = true;
    } else {
      if (!neg) s.neg_sel = sel;
      neg = true;
    }
    std::size_t a = 0;
    while (a < k && ++sel[a] == H[a].cols()) sel[a++] = 0;
    if (a == k) break;
  }
  s.same_sign = s.zero_sel.empty() && !(pos && neg);
  return s;
}

// move from a positive to a negative selection one set at a time; the determinant is affine in each
// point, so the sign change is located exactly on a segment
std::vector<Eigen::VectorXd> zero_selection(const std::vector<PointSet>& H, const std::vector<int>& from,
                                            const std::vector<int>& to) {
  std::vector<Eigen::VectorXd> cur;
  for (std::size_t i = 0; i < H.size(); ++i) cur.push_back(H[i].col(from[i]));
  double dcur = simplex_det(cur);
  for (std::size_t i = 0; i < H.size(); ++i) {
    std::vector<Eigen::VectorXd> nxt = cur;
    nxt[i] = H[i].col(to[i]);
    const double dn = simplex_det(nxt);
    if ((dcur > 0) != (dn > 0) || dn == 0.0) {
      const double t = dcur / (dcur - dn);
      cur[i] = (1.0 - t) * cur[i] + t * nxt[i];
      return cur;
    }
    cur = nxt;
    dcur = dn;
  }
  return cur;
}

double selection_sigma(const std::vector<Eigen::VectorXd>& pts) {
  const Eigen::Index m = static_cast<Eigen::Index>(pts.size()) - 1;
  Eigen::MatrixXd M(pts[0].size(), m);
  for (Eigen::Index c = 0; c < m; ++c) M.col(c) = pts[static_cast<std::size_t>(c + 1)] - pts[0];
  return Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues().minCoeff();
}

}  // namespace

IndependenceReport affine_independence(const std::vector<PointSet>& hulls, int k) {
  if (k < 0) k = static_cast<int>(hulls.size());
  if (k != static_cast<int>(hulls.size())) throw ArgumentError("affine_independence: k must equal the number of sets");
  IndependenceReport r;
  for (int i = 0; i < k; ++i) r.subset.push_back(i);
  if (k == 0) throw ArgumentError("affine_independence: no sets");
  const int n = static_cast<int>(hulls[0].rows());
  std::vector<PointSet> H;
  double scale = 1.0;
  for (const auto& P : hulls) {
    if (P.cols() == 0 || P.rows() != n) throw ArgumentError("affine_independence: sets must be nonempty and of equal dimension");
    H.push_back(select_columns(P, extreme_points(P)));
    scale = std::max(scale, scale_of(P));
  }
  if (k == 1) {
    r.independent = true;
    r.message = "a single set is independent";
    return r;
  }
  if (k > n + 1) {
    r.independent = false;
    for (const auto& P : H) r.selection.push_back(P.col(0));
    r.message = "more than n+1 sets always share a flat of dimension k-2 >= n";
    return r;
  }
  if (k == 2) {
    const HullDistance d = hull_distance(H[0], H[1]);
    r.independent = d.distance > 1e-12 * scale;
    if (r.independent) {
      r.projection = ((d.a - d.b) / d.distance).transpose();
      r.message = "hulls are disjoint";
    } else {
      r.selection = {d.a, d.b};
      r.message = "hulls intersect";
    }
    return r;
  }
  const double zero_tol = 1e-12 * std::pow(scale, k - 1);
  auto full_test = [&](const std::vector<PointSet>& G, IndependenceReport& out) {
    const SignScan s = scan_signs(G, zero_tol);
    if (s.same_sign) return true;
    if (!s.zero_sel.empty()) {
      for (std::size_t i = 0; i < G.size(); ++i) out.selection.push_back(G[i].col(s.zero_sel[i]));
    } else {
      out.selection = zero_selection(G, s.pos_sel, s.neg_sel);
    }
    return false;
  };
  if (k == n + 1) {
    r.independent = full_test(H, r);
    r.projection = Eigen::MatrixXd::Identity(n, n);
    r.message = r.independent ? "all vertex selections have the same orientation"
                              : "a selection of one point per hull is affinely dependent";
    return r;
  }
  // k < n + 1: an independent projection onto R^{k-1} certifies independence
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> g;
  std::vector<Eigen::MatrixXd> candidates;
  {
    Eigen::MatrixXd C(n, k - 1);
    const Eigen::VectorXd c0 = H[0].rowwise().mean();
    for (int i = 1; i < k; ++i) C.col(i - 1) = H[static_cast<std::size_t>(i)].rowwise().mean() - c0;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(C);
    candidates.push_back(Eigen::MatrixXd(qr.householderQ()).leftCols(k - 1).transpose());
  }
  for (int t = 0; t < 200; ++t) {
    Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(n, k - 1, [&] { return g(rng); });
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    candidates.push_back(Eigen::MatrixXd(qr.householderQ()).leftCols(k - 1).transpose());
  }
  for (const auto& P : candidates) {
    std::vector<PointSet> G;
    for (const auto& Hi : H) G.push_back(P * Hi);
    IndependenceReport scratch;
    if (full_test(G, scratch)) {
      r.independent = true;
      r.projection = P;
      r.message = "independent after projection onto a (k-1)-dimensional subspace";
      return r;
    }
  }
  // search for a dependent selection by coordinate descent on the smallest singular value
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<Eigen::VectorXd> bestsel;
  double best = kInf;
  for (int start = 0; start < 50; ++start) {
    std::vector<Eigen::VectorXd> sel;
    for (const auto& Hi : H) {
      Eigen::VectorXd w = Eigen::VectorXd::NullaryExpr(Hi.cols(), [&] { return -std::log(U(rng) + 1e-300); });
      sel.push_back(Hi * (w / w.sum()));
    }
    for (int sweep = 0; sweep < 40; ++sweep)
      for (std::size_t i = 0; i < H.size(); ++i)
        for (Eigen::Index v = 0; v < H[i].cols(); ++v) {
          double lo = 0.0, hi = 1.0;
          const Eigen::VectorXd p0 = sel[i], p1 = H[i].col(v);
          for (int it = 0; it < 40; ++it) {
            const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
            auto at = [&](double t) {
              auto s = sel;
              s[i] = (1 - t) * p0 + t * p1;
              return selection_sigma(s);
            };
            (at(m1) < at(m2) ? hi : lo) = (at(m1) < at(m2) ? m2 : m1);
          }
          sel[i] = (1 - lo) * p0 + lo * p1;
        }
    const double s = selection_sigma(sel);
    if (s < best) {
      best = s;
      bestsel = sel;
    }
  }
  r.independent = false;
  r.selection = bestsel;
  r.certified = best <= 1e-9 * scale;
  r.message = r.certified ? "a selection of one point per hull is affinely dependent"
                          : "no certificate either way; reported as dependent";
  return r;
}

UniqueMaxReport unique_max_multiplicity(const MultiplicityField& field, const std::vector<PointSet>& piece_hulls) {
  UniqueMaxReport r;
  const int n = field.lattice.dim();
  if (!piece_hulls.empty()) {
    if (static_cast<int>(piece_hulls.size()) != n + 1)
      throw PreconditionError("unique_max_multiplicity: expected n+1 piece hulls");
    for (const auto& h : piece_hulls)
      if (h.cols() == 0) throw PreconditionError("unique_max_multiplicity: empty piece");
    const auto ind = affine_independence(piece_hulls);
    if (!ind.independent) throw PreconditionError("unique_max_multiplicity: pieces are not affinely independent");
  }
  const auto nodes = field.nodes_at_least(n + 1);
  if (nodes.empty()) {
    r.vacuous = true;
    r.message = "no node of multiplicity n+1";
    return r;
  }
  const auto comps = lattice_components(field.lattice, nodes);
  r.clusters = static_cast<int>(comps.size());
  for (const auto& c : comps) r.diameter_steps = std::max(r.diameter_steps, cluster_diameter_steps(field.lattice, c));
  r.pass = r.clusters <= 1 && r.diameter_steps <= 2.0 + 1e-9;
  if (!r.pass) {
    for (const auto& c : comps) r.counterexamples.push_back(field.lattice.node(c.front()));
    r.message = std::to_string(r.clusters) + " clusters, largest diameter " + std::to_string(r.diameter_steps) + " steps";
  } else {
    r.message = "single cluster";
  }
  return r;
}

namespace {

Eigen::VectorXd drop(const Eigen::VectorXd& x, int i) {
  Eigen::VectorXd y(x.size() - 1);
  for (Eigen::Index a = 0, b = 0; a < x.size(); ++a)
    if (a != i) y[b++] = x[a];
  return y;
}

}  // namespace

CoincidentRoot find_coincident_root(const std::vector<TearFunction>& h, int n, const Eigen::VectorXd& tail,
                                    const RootOptions& opt) {
  const int k = static_cast<int>(h.size());
  if (k < 1 || k > n) throw ArgumentError("find_coincident_root: need 1 <= k <= n tear functions");
  Eigen::VectorXd rest = tail.size() ? tail : Eigen::VectorXd::Zero(n - k);
  if (rest.size() != n - k) throw ArgumentError("find_coincident_root: tail must hold n-k coordinates");
  if ((rest.array().abs() > 1.0).any()) throw ArgumentError("find_coincident_root: tail outside [-1,1]");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int i = 0; i < k; ++i)
    for (int s = 0; s < opt.precondition_samples; ++s) {
      Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(n - 1, [&] { return U(rng); });
      if (s < (1 << std::min(n - 1, 10)))
        for (int a = 0; a < n - 1; ++a) z[a] = (s >> a) & 1 ? 1.0 : -1.0;
      const double v = h[static_cast<std::size_t>(i)](z);
      if (!std::isfinite(v) || std::abs(v) > 1.0 + 1e-12)
        throw PreconditionError("find_coincident_root: tear function " + std::to_string(i) + " leaves [-1,1]");
    }
  auto F = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd y = x;
    for (int i = 0; i < k; ++i) y[i] = h[static_cast<std::size_t>(i)](drop(x, i));
    return y;
  };
  auto residual = [&](const Eigen::VectorXd& x) { return (F(x) - x).head(k).cwiseAbs().maxCoeff(); };
  CoincidentRoot out;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  x.tail(n - k) = rest;
  auto iterate = [&](Eigen::VectorXd& z, int cap) {
    for (int it = 0; it < cap; ++it) {
      const Eigen::VectorXd fz = F(z);
      const double r = (fz - z).head(k).cwiseAbs().maxCoeff();
      ++out.iterations;
      if (r <= opt.tol) return true;
      z.head(k) = (1.0 - opt.damping) * z.head(k) + opt.damping * fz.head(k);
    }
    return residual(z) <= opt.tol;
  };
  if (iterate(x, opt.max_iterations)) {
    out.x = x;
    out.residual = residual(x);
    out.converged = true;
    return out;
  }
  // exhaustive grid over the solved coordinates, then polish
  out.from_grid = true;
  const int G = std::max(2, opt.grid_nodes);
  std::vector<int> idx(static_cast<std::size_t>(k), 0);
  Eigen::VectorXd best = x;
  double bestval = kInf;
  while (true) {
    Eigen::VectorXd z = x;
    for (int i = 0; i < k; ++i) z[i] = -1.0 + 2.0 * idx[static_cast<std::size_t>(i)] / (G - 1);
    const double v = (F(z) - z).head(k).cwiseAbs().sum();
    if (v < bestval) {
      bestval = v;
      best = z;
    }
    int a = 0;
    while (a < k && ++idx[static_cast<std::size_t>(a)] == G) idx[static_cast<std::size_t>(a++)] = 0;
    if (a == k) break;
  }
  Eigen::VectorXd polished = best;
  iterate(polished, opt.max_iterations);
  if (residual(polished) < residual(best)) best = polished;
  out.x = best;
  out.residual = residual(best);
  out.converged = out.residual <= opt.tol;
  return out;
}

TearFunction axis_tear(const MaxAffine& plus, const MaxAffine& minus, int axis) {
  const int n = plus.ambient_dim();
  if (minus.ambient_dim() != n || axis < 0 || axis >= n) throw ArgumentError("axis_tear: bad axis or dimensions");
  const double lo_plus = plus.slopes().row(axis).minCoeff(), hi_minus = minus.slopes().row(axis).maxCoeff();
  if (!(lo_plus > hi_minus)) throw PreconditionError("axis_tear: slopes are not separated along the axis");
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (int a = 0, r = 0; a < n; ++a)
    if (a != axis) P(r++, a) = 1.0;
  P(n - 1, axis) = 1.0;
  SeparatingFrame frame;
  frame.normal = Eigen::VectorXd::Unit(n, axis);
  frame.midheight = 0.5 * (lo_plus + hi_minus);
  frame.spacing = 0.5 * (lo_plus - hi_minus);
  frame.rotation = P;
  return [plus, minus, frame](const Eigen::VectorXd& xhat) { return tear_height_at(plus, minus, frame, xhat).h; };
}

bool check_boundary_signs(const MaxAffine& plus, const MaxAffine& minus, int axis, int samples, std::uint64_t seed,
                          Eigen::VectorXd* witness) {
  const int n = plus.ambient_dim();
  if (plus.slopes().row(axis).minCoeff() <= minus.slopes().row(axis).maxCoeff()) return false;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int s = 0; s < samples; ++s)
    for (double side : {1.0, -1.0}) {
      Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(n, [&] { return U(rng); });
      if (s < (1 << std::min(n - 1, 10)))
        for (int a = 0, b = 0; a < n; ++a)
          if (a != axis) x[a] = (s >> b++) & 1 ? 1.0 : -1.0;
      x[axis] = side;
      const double gap = eval(plus, x) - eval(minus, x);
      if (side * gap <= 0.0) {
        if (witness) *witness = x;
        return false;
      }
    }
  return true;
}

ConnectivityReport connectivity_of(const Latticed& lattice, const std::vector<std::size_t>& nodes) {
  ConnectivityReport r;
  r.components = lattice_components(lattice, nodes);
  r.connected = r.components.size() <= 1;
  return r;
}

ConnectivityReport connectivity_check(const MultiplicityField& field, int piece) {
  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < field.active.size(); ++i)
    if (field.inside[i] && field.is_active(i, piece)) nodes.push_back(i);
  return connectivity_of(field.lattice, nodes);
}

}  // namespace tears
