#include "tears/ot_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "tears/errors.hpp"
#include "tears/parallel.hpp"
#include "tears/transport_lp.hpp"

namespace tears {

namespace {

Eigen::Vector2d v2(const Eigen::VectorXd& x) { return Eigen::Vector2d(x[0], x[1]); }

void check_box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() == 0 || lo.size() != hi.size()) throw ArgumentError("source box: dimension mismatch");
  if (!lo.allFinite() || !hi.allFinite() || (hi.array() <= lo.array()).any())
    throw ArgumentError("source box: need finite lo < hi on every axis");
}

double radical_inverse(std::uint64_t i, int base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % static_cast<std::uint64_t>(base));
    i /= static_cast<std::uint64_t>(base);
    f *= inv;
  }
  return r;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

}  // namespace

SourceMeasure SourceMeasure::polygon(const std::vector<Eigen::Vector2d>& vertices) {
  for (const auto& v : vertices)
    if (!v.allFinite()) throw ArgumentError("source polygon: non-finite vertex");
  ConvexPolygon hull = convex_hull_2d(vertices);
  if (hull.empty() || area(hull) <= 0.0) throw ArgumentError("source polygon: degenerate support");
  SourceMeasure m;
  m.dim_ = 2;
  m.lo_ = Eigen::VectorXd::Constant(2, std::numeric_limits<double>::infinity());
  m.hi_ = -m.lo_;
  for (const auto& v : hull.vertices) {
    m.lo_ = m.lo_.cwiseMin(Eigen::VectorXd(v));
    m.hi_ = m.hi_.cwiseMax(Eigen::VectorXd(v));
  }
  m.support_ = hull;
  m.pieces_.push_back({hull, 1.0 / area(hull)});
  return m;
}

SourceMeasure SourceMeasure::box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  check_box(lo, hi);
  const int d = static_cast<int>(lo.size());
  return box_table(lo, hi, std::vector<int>(static_cast<std::size_t>(d), 1), {1.0});
}

SourceMeasure SourceMeasure::box_table(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const std::vector<int>& cells,
                                       const std::vector<double>& density) {
  check_box(lo, hi);
  const int d = static_cast<int>(lo.size());
  if (static_cast<int>(cells.size()) != d) throw ArgumentError("source table: one cell count per axis");
  std::size_t total = 1;
  for (int c : cells) {
    if (c < 1) throw ArgumentError("source table: cell counts must be positive");
    total *= static_cast<std::size_t>(c);
  }
  if (density.size() != total) throw ArgumentError("source table: density size mismatch");
  double sum = 0.0;
  for (double v : density) {
    if (!std::isfinite(v) || v < 0.0) throw ArgumentError("source table: density must be finite and nonnegative");
    sum += v;
  }
  if (sum <= 0.0) throw ArgumentError("source table: density integrates to zero");
  SourceMeasure m;
  m.dim_ = d;
  m.lo_ = lo;
  m.hi_ = hi;
  m.cells_ = cells;
  m.table_ = density;
  Eigen::ArrayXd step = (hi - lo).array() / Eigen::Map<const Eigen::ArrayXi>(cells.data(), d).cast<double>();
  const double cell_volume = step.prod();
  m.norm_ = sum * cell_volume;
  if (d == 2) {
    m.support_ = ConvexPolygon::rectangle(v2(lo), v2(hi));
    for (int a = 0; a < cells[0]; ++a)
      for (int b = 0; b < cells[1]; ++b) {
        const double rho = density[static_cast<std::size_t>(a * cells[1] + b)] / m.norm_;
        if (rho <= 0.0) continue;
        const Eigen::Vector2d c0(lo[0] + a * step[0], lo[1] + b * step[1]);
        const Eigen::Vector2d c1 = a + 1 == cells[0] && b + 1 == cells[1]
                                       ? v2(hi)
                                       : Eigen::Vector2d(a + 1 == cells[0] ? hi[0] : c0[0] + step[0],
                                                         b + 1 == cells[1] ? hi[1] : c0[1] + step[1]);
        m.pieces_.push_back({ConvexPolygon::rectangle(c0, c1), rho});
      }
  }
  return m;
}

SourceMeasure SourceMeasure::polytope(const PointSet& vertices) {
  if (vertices.cols() == 0 || !vertices.allFinite()) throw ArgumentError("source polytope: need finite vertices");
  const int d = static_cast<int>(vertices.rows());
  if (d == 2) {
    std::vector<Eigen::Vector2d> v;
    for (Eigen::Index k = 0; k < vertices.cols(); ++k) v.emplace_back(vertices(0, k), vertices(1, k));
    return polygon(convex_hull_2d(v).vertices);
  }
  if (affine_rank(vertices) < d) throw ArgumentError("source polytope: support is not full-dimensional");
  SourceMeasure m;
  m.dim_ = d;
  m.hull_ = select_columns(vertices, extreme_points(vertices));
  m.lo_ = m.hull_.rowwise().minCoeff();
  m.hi_ = m.hull_.rowwise().maxCoeff();
  // volume by quasi-random rejection in the bounding box
  const int probes = 20000;
  int inside = 0;
  for (int i = 1; i <= probes; ++i) {
    Eigen::VectorXd x(d);
    for (int a = 0; a < d; ++a) x[a] = m.lo_[a] + radical_inverse(static_cast<std::uint64_t>(i), kPrimes[a]) * (m.hi_[a] - m.lo_[a]);
    if (point_hull_distance(x, m.hull_) <= 0.0) ++inside;
  }
  m.norm_ = (m.hi_ - m.lo_).prod() * inside / probes;
  return m;
}

bool SourceMeasure::contains(const Eigen::VectorXd& x, double slack) const {
  if (x.size() != dim_) throw ArgumentError("source: dimension mismatch");
  if (((x - lo_).array() < -slack).any() || ((x - hi_).array() > slack).any()) return false;
  if (dim_ == 2) return tears::contains(support_, v2(x), slack);
  if (hull_.cols() > 0) return point_hull_distance(x, hull_) <= slack;
  return true;
}

double SourceMeasure::density(const Eigen::VectorXd& x) const {
  if (!contains(x)) return 0.0;
  if (!pieces_.empty()) {
    for (const auto& p : pieces_)
      if (tears::contains(p.polygon, v2(x), 1e-12)) return p.density;
    return 0.0;
  }
  if (table_.empty()) return 1.0 / norm_;
  std::size_t flat = 0;
  for (int a = 0; a < dim_; ++a) {
    const double u = (x[a] - lo_[a]) / (hi_[a] - lo_[a]) * cells_[static_cast<std::size_t>(a)];
    const int i = std::clamp(static_cast<int>(std::floor(u)), 0, cells_[static_cast<std::size_t>(a)] - 1);
    flat = flat * static_cast<std::size_t>(cells_[static_cast<std::size_t>(a)]) + static_cast<std::size_t>(i);
  }
  return table_[flat] / norm_;
}

double SourceMeasure::total_mass() const {
  if (dim_ != 2) return 1.0;
  double m = 0.0;
  for (const auto& p : pieces_) m += p.density * area(p.polygon);
  return m;
}

Eigen::VectorXd SourceMeasure::interior_point() const {
  if (dim_ == 2) {
    const Eigen::Vector2d c = first_moment(support_) / area(support_);
    return Eigen::VectorXd(c);
  }
  if (hull_.cols() > 0) return hull_.rowwise().mean();
  return 0.5 * (lo_ + hi_);
}

void SourceMeasure::sample(int count, std::uint64_t seed, PointSet& points, Eigen::VectorXd& weights) const {
  if (count < 1) throw ArgumentError("source sample: count must be positive");
  if (dim_ > static_cast<int>(std::size(kPrimes))) throw ArgumentError("source sample: dimension too large for Halton");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::VectorXd shift(dim_);
  for (int a = 0; a < dim_; ++a) shift[a] = U(rng);
  points.resize(dim_, count);
  weights.resize(count);
  int got = 0;
  for (std::uint64_t i = 1; got < count; ++i) {
    if (i > 1000ull * static_cast<std::uint64_t>(count)) throw ConvergenceFailure("source sample: support too thin", 0.0, got);
    Eigen::VectorXd x(dim_);
    for (int a = 0; a < dim_; ++a) {
      const double u = std::fmod(radical_inverse(i, kPrimes[a]) + shift[a], 1.0);
      x[a] = lo_[a] + u * (hi_[a] - lo_[a]);
    }
    const double rho = density(x);
    if (rho <= 0.0) continue;
    points.col(got) = x;
    weights[got] = rho;
    ++got;
  }
  weights /= weights.sum();
}

TargetDecomposition::TargetDecomposition(std::vector<Atom> atoms, std::map<int, std::string> labels, bool normalize)
    : atoms_(std::move(atoms)), labels_(std::move(labels)) {
  if (atoms_.empty()) throw ArgumentError("target: no atoms");
  const Eigen::Index n = atoms_.front().point.size();
  if (n == 0) throw ArgumentError("target: zero-dimensional atoms");
  double total = 0.0;
  for (const auto& a : atoms_) {
    if (a.point.size() != n) throw ArgumentError("target: atoms of mixed dimension");
    if (!a.point.allFinite()) throw ArgumentError("target: non-finite atom");
    if (!(a.weight > 0.0) || !std::isfinite(a.weight)) throw ArgumentError("target: weights must be positive");
    total += a.weight;
  }
  std::vector<std::size_t> order(atoms_.size());
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](std::size_t i, std::size_t j) {
    const auto& p = atoms_[i].point;
    const auto& q = atoms_[j].point;
    return std::lexicographical_compare(p.data(), p.data() + n, q.data(), q.data() + n);
  };
  std::sort(order.begin(), order.end(), less);
  for (std::size_t k = 1; k < order.size(); ++k)
    if (atoms_[order[k]].point == atoms_[order[k - 1]].point) throw ArgumentError("target: atoms must be distinct");
  if (normalize) {
    for (auto& a : atoms_) a.weight /= total;
  } else if (std::abs(total - 1.0) > 1e-12) {
    throw ArgumentError("target: weights must sum to 1");
  }
  for (const auto& a : atoms_)
    if (!labels_.count(a.piece)) labels_[a.piece] = "piece " + std::to_string(a.piece);
}

PointSet TargetDecomposition::points() const {
  PointSet P(dim(), size());
  for (int j = 0; j < size(); ++j) P.col(j) = atoms_[static_cast<std::size_t>(j)].point;
  return P;
}

Eigen::VectorXd TargetDecomposition::weights() const {
  Eigen::VectorXd w(size());
  for (int j = 0; j < size(); ++j) w[j] = atoms_[static_cast<std::size_t>(j)].weight;
  return w;
}

std::vector<int> TargetDecomposition::piece_ids() const {
  std::vector<int> ids;
  for (const auto& a : atoms_) ids.push_back(a.piece);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<int> TargetDecomposition::atoms_of(int piece) const {
  std::vector<int> out;
  for (int j = 0; j < size(); ++j)
    if (atoms_[static_cast<std::size_t>(j)].piece == piece) out.push_back(j);
  return out;
}

PointSet TargetDecomposition::piece_points(int piece) const {
  const auto ids = atoms_of(piece);
  PointSet P(dim(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) P.col(static_cast<Eigen::Index>(k)) = atoms_[static_cast<std::size_t>(ids[k])].point;
  return P;
}

double TargetDecomposition::piece_weight(int piece) const {
  double w = 0.0;
  for (int j : atoms_of(piece)) w += atoms_[static_cast<std::size_t>(j)].weight;
  return w;
}

namespace {

void check_inputs(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi) {
  if (nu.size() == 0) throw ArgumentError("cell_masses: empty target");
  if (mu.dim() != nu.dim()) throw ArgumentError("cell_masses: source and target dimensions differ");
  if (psi.psi.size() != nu.size()) throw ArgumentError("cell_masses: one dual weight per atom");
  if (!psi.psi.allFinite()) throw ArgumentError("cell_masses: non-finite dual weights");
}

CellMasses exact_cells(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi, bool keep) {
  const int N = nu.size();
  const PointSet Y = nu.points();
  CellMasses out;
  out.masses = Eigen::VectorXd::Zero(N);
  out.moments = PointSet::Zero(2, N);
  out.std_error = Eigen::VectorXd::Zero(N);
  out.jacobian = Eigen::MatrixXd::Zero(N, N);
  out.cells.assign(static_cast<std::size_t>(N), {});
  parallel_for(static_cast<std::size_t>(N), [&](std::size_t js) {
    const int j = static_cast<int>(js);
    std::vector<int> others;
    for (int k = 0; k < N; ++k)
      if (k != j) others.push_back(k);
    std::sort(others.begin(), others.end(), [&](int a, int b) {
      return (Y.col(a) - Y.col(j)).squaredNorm() < (Y.col(b) - Y.col(j)).squaredNorm();
    });
    for (const auto& piece : mu.pieces()) {
      ConvexPolygon cell = piece.polygon;
      for (int k : others) {
        const Eigen::Vector2d a = v2(Y.col(k) - Y.col(j));
        cell = clip(cell, a, psi.psi[k] - psi.psi[j], k);
        if (cell.empty()) break;
      }
      if (cell.empty()) {
        if (keep) out.cells[js].push_back(cell);
        continue;
      }
      out.masses[j] += piece.density * area(cell);
      out.moments.col(j) += piece.density * Eigen::VectorXd(first_moment(cell));
      const std::size_t m = cell.vertices.size();
      for (std::size_t e = 0; e < m; ++e) {
        const int k = cell.edge_labels[e];
        if (k < 0) continue;
        const double len = (cell.vertices[(e + 1) % m] - cell.vertices[e]).norm();
        out.jacobian(j, k) += piece.density * len / (Y.col(j) - Y.col(k)).norm();
      }
      if (keep) out.cells[js].push_back(std::move(cell));
    }
  });
  out.jacobian = 0.5 * (out.jacobian + out.jacobian.transpose()).eval();
  for (int j = 0; j < N; ++j) out.jacobian(j, j) = -(out.jacobian.row(j).sum() - out.jacobian(j, j));
  if (!keep) out.cells.clear();
  return out;
}

std::vector<int> assign(const PointSet& X, const PointSet& Y, const Eigen::VectorXd& psi) {
  const Eigen::MatrixXd score = (X.transpose() * Y).rowwise() - psi.transpose();
  std::vector<int> lab(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index s = 0; s < X.cols(); ++s) {
    Eigen::Index best;
    score.row(s).maxCoeff(&best);
    lab[static_cast<std::size_t>(s)] = static_cast<int>(best);
  }
  return lab;
}

CellMasses sampled_cells(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi, int samples,
                         std::uint64_t seed) {
  PointSet X;
  Eigen::VectorXd w;
  mu.sample(samples, seed, X, w);
  const int N = nu.size();
  const auto lab = assign(X, nu.points(), psi.psi);
  CellMasses out;
  out.exact = false;
  out.masses = Eigen::VectorXd::Zero(N);
  out.moments = PointSet::Zero(nu.dim(), N);
  for (Eigen::Index s = 0; s < X.cols(); ++s) {
    out.masses[lab[static_cast<std::size_t>(s)]] += w[s];
    out.moments.col(lab[static_cast<std::size_t>(s)]) += w[s] * X.col(s);
  }
  out.std_error = (out.masses.array() * (1.0 - out.masses.array()) / samples).sqrt();
  return out;
}

}  // namespace

CellMasses cell_masses(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi, bool keep_cells,
                       int samples, std::uint64_t seed) {
  check_inputs(mu, nu, psi);
  if (mu.dim() == 2) return exact_cells(mu, nu, psi, keep_cells);
  return sampled_cells(mu, nu, psi, samples, seed);
}

namespace {

DualWeights scaled_voronoi_start(const SourceMeasure& mu, const TargetDecomposition& nu) {
  const PointSet Y = nu.points();
  const Eigen::VectorXd mean = Y.rowwise().mean();
  Eigen::VectorXd c = 0.5 * (mu.lower() + mu.upper());
  if (!mu.contains(c)) c = mu.interior_point();
  const double spread = (Y.colwise() - mean).colwise().norm().maxCoeff();
  double s = spread > 0.0 ? (mu.upper() - mu.lower()).maxCoeff() / spread : 1.0;
  const double slack = -1e-9 * (mu.upper() - mu.lower()).maxCoeff();
  for (int tries = 0;; ++tries) {
    bool ok = true;
    for (int j = 0; j < nu.size() && ok; ++j) ok = mu.contains(c + s * (Y.col(j) - mean), slack);
    if (ok) break;
    if (tries > 200) throw ConvergenceFailure("solve_semidiscrete: could not place initial sites", 1.0, 0);
    s *= 0.5;
  }
  DualWeights d;
  d.psi.resize(nu.size());
  for (int j = 0; j < nu.size(); ++j) {
    const Eigen::VectorXd z = c + s * (Y.col(j) - mean);
    // <x, y_j> - psi_j = (<x, z_j> - |z_j|^2 / 2) / s + a term common to all j: Voronoi cells of the z_j
    d.psi[j] = z.squaredNorm() / (2.0 * s);
  }
  return d;
}

// Lower the weight of one empty cell at a time until its affine piece wins at the best power-diagram vertex.
void repair_empty_cells(const SourceMeasure& mu, const TargetDecomposition& nu, DualWeights& psi, CellMasses& cm) {
  const PointSet Y = nu.points();
  const Eigen::VectorXd w = nu.weights();
  const double scale = std::max(1e-300, psi.psi.cwiseAbs().maxCoeff());
  for (int round = 0; round < 4 * nu.size() && !(cm.masses.minCoeff() > 0.0); ++round) {
    int j = 0;
    while (cm.masses[j] > 0.0) ++j;
    const CellMasses full = cell_masses(mu, nu, psi, true);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& per_atom : full.cells)
      for (const auto& poly : per_atom)
        for (const auto& x : poly.vertices)
          best = std::max(best, Y.col(j).dot(x) - psi.psi[j] - (Y.transpose() * x - psi.psi).maxCoeff());
    if (!std::isfinite(best)) return;
    const int empty_before = static_cast<int>((cm.masses.array() <= 0.0).count());
    const double base = psi.psi[j];
    for (double m = 1e-12 * scale; m < 1e-2 * scale; m *= 4.0) {
      DualWeights trial{psi.psi};
      trial.psi[j] = base + best - m;
      CellMasses tm = cell_masses(mu, nu, trial);
      if (!(tm.masses[j] > 0.0)) continue;
      if ((tm.masses.array() <= 0.0).count() >= empty_before) break;
      psi = trial;
      cm = std::move(tm);
      if (cm.masses[j] >= 1e-2 * w[j]) break;
    }
    if (!(cm.masses[j] > 0.0)) return;
  }
}

SolveReport solve_exact(const SourceMeasure& mu, const TargetDecomposition& nu, double tol, const SolverOptions& opt) {
  const int N = nu.size();
  const Eigen::VectorXd w = nu.weights();
  DualWeights psi;
  CellMasses cm;
  if (opt.initial.size() == N && opt.initial.allFinite()) {
    psi.psi = opt.initial;
    cm = cell_masses(mu, nu, psi);
    repair_empty_cells(mu, nu, psi, cm);
  }
  if (cm.masses.size() == 0 || !(cm.masses.minCoeff() > 0.0)) {
    psi = scaled_voronoi_start(mu, nu);
    cm = cell_masses(mu, nu, psi);
  }
  const double eps0 = 0.5 * std::min(w.minCoeff(), cm.masses.minCoeff());
  SolveReport rep;
  Eigen::VectorXd r = cm.masses - w;
  for (int it = 0;; ++it) {
    rep.history.push_back(r.cwiseAbs().maxCoeff());
    if (r.cwiseAbs().maxCoeff() <= tol) {
      rep.iterations = it;
      break;
    }
    if (it >= opt.max_iterations)
      throw ConvergenceFailure("solve_semidiscrete: iteration cap reached", r.cwiseAbs().maxCoeff(), it);
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(N);
    const Eigen::MatrixXd A = -cm.jacobian.bottomRightCorner(N - 1, N - 1);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    bool newton = ldlt.info() == Eigen::Success && ldlt.isPositive();
    if (newton) {
      dir.tail(N - 1) = ldlt.solve(r.tail(N - 1));
      newton = dir.allFinite() && (A * dir.tail(N - 1) - r.tail(N - 1)).norm() <= 1e-6 * (1.0 + r.norm());
    }
    if (!newton) {
      // gradient ascent on the concave dual
      const double scale = std::max(1e-12, cm.jacobian.diagonal().cwiseAbs().maxCoeff());
      dir = r / scale;
    }
    double alpha = 1.0;
    const double rn = r.norm();
    while (true) {
      DualWeights trial{psi.psi + alpha * dir};
      CellMasses tm = cell_masses(mu, nu, trial);
      const Eigen::VectorXd tr = tm.masses - w;
      if (tm.masses.minCoeff() >= eps0 && tr.norm() <= (1.0 - 0.5 * alpha) * rn) {
        psi = trial;
        cm = std::move(tm);
        r = tr;
        break;
      }
      alpha *= 0.5;
      if (alpha < 1e-14)
        throw ConvergenceFailure("solve_semidiscrete: line search stalled", r.cwiseAbs().maxCoeff(), it);
    }
  }
  psi.psi.array() -= psi.psi[0];
  rep.dual = psi;
  rep.masses = cm.masses;
  rep.residual = r.cwiseAbs().maxCoeff();
  rep.exact = true;
  return rep;
}

SolveReport solve_sampled(const SourceMeasure& mu, const TargetDecomposition& nu, double tol, const SolverOptions& opt) {
  PointSet X;
  Eigen::VectorXd ws;
  mu.sample(opt.qmc_samples, opt.seed, X, ws);
  const PointSet Y = nu.points();
  const DiscretePlan plan = discrete_transport(bilinear_cost(X, Y), ws, nu.weights());
  SolveReport rep;
  rep.exact = false;
  rep.dual.psi = plan.psi.array() - plan.psi[0];
  const auto lab = assign(X, Y, rep.dual.psi);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(nu.size());
  for (Eigen::Index s = 0; s < X.cols(); ++s) m[lab[static_cast<std::size_t>(s)]] += ws[s];
  rep.masses = m;
  rep.residual = (m - nu.weights()).cwiseAbs().maxCoeff();
  rep.iterations = 1;
  rep.history.push_back(rep.residual);
  const double noise = 3.0 * std::sqrt(0.25 / opt.qmc_samples);
  if (rep.residual > tol + noise)
    throw ConvergenceFailure("solve_semidiscrete: sampled residual above tolerance", rep.residual, 1);
  return rep;
}

}  // namespace

SolveReport solve_semidiscrete(const SourceMeasure& mu, const TargetDecomposition& nu, double tol,
                               const SolverOptions& options) {
  if (!(tol > 0.0)) throw ArgumentError("solve_semidiscrete: tol must be positive");
  if (nu.size() == 0 || mu.dim() != nu.dim()) throw ArgumentError("solve_semidiscrete: dimension mismatch");
  if (std::abs(mu.total_mass() - 1.0) > 1e-9) throw ArgumentError("solve_semidiscrete: source mass is not 1");
  if (nu.size() == 1) {
    SolveReport rep;
    rep.dual.psi = Eigen::VectorXd::Zero(1);
    rep.masses = Eigen::VectorXd::Ones(1);
    rep.history.push_back(0.0);
    rep.exact = mu.dim() == 2;
    return rep;
  }
  return mu.dim() == 2 ? solve_exact(mu, nu, tol, options) : solve_sampled(mu, nu, tol, options);
}

MaxAffine potential(const TargetDecomposition& nu, const DualWeights& psi) {
  if (psi.psi.size() != nu.size()) throw ArgumentError("potential: one dual weight per atom");
  return MaxAffine(nu.points(), -psi.psi);
}

std::map<int, MaxAffine> decompose(const TargetDecomposition& nu, const DualWeights& psi) {
  if (psi.psi.size() != nu.size()) throw ArgumentError("decompose: one dual weight per atom");
  std::map<int, MaxAffine> out;
  for (int id : nu.piece_ids()) {
    const auto ids = nu.atoms_of(id);
    Eigen::VectorXd b(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) b[static_cast<Eigen::Index>(k)] = -psi.psi[ids[k]];
    out.emplace(id, MaxAffine(nu.piece_points(id), b));
  }
  return out;
}

double transport_cost(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi) {
  const CellMasses cm = cell_masses(mu, nu, psi);
  const PointSet Y = nu.points();
  double c = 0.0;
  for (int j = 0; j < nu.size(); ++j) c -= Y.col(j).dot(cm.moments.col(j));
  return c;
}

double dual_functional(const SourceMeasure& mu, const TargetDecomposition& nu, const DualWeights& psi) {
  const CellMasses cm = cell_masses(mu, nu, psi);
  const PointSet Y = nu.points();
  const Eigen::VectorXd w = nu.weights();
  double g = 0.0;
  for (int j = 0; j < nu.size(); ++j) g += Y.col(j).dot(cm.moments.col(j)) - psi.psi[j] * cm.masses[j] + w[j] * psi.psi[j];
  return g;
}

}  // namespace tears
