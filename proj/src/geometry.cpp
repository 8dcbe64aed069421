#include "tears/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

namespace tears {

namespace {

struct SimplexVertex {
  int ia;
  int ib;
  Eigen::VectorXd w;
};

// Closest point to the origin on conv(W) by enumerating faces; keeps the supporting face.
Eigen::VectorXd reduce_simplex(std::vector<SimplexVertex>& W, std::vector<double>& lambda) {
  const int m = static_cast<int>(W.size());
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_point;
  std::vector<int> best_set;
  std::vector<double> best_lambda;
  for (int mask = 1; mask < (1 << m); ++mask) {
    std::vector<int> S;
    for (int i = 0; i < m; ++i)
      if (mask & (1 << i)) S.push_back(i);
    const Eigen::VectorXd& w0 = W[S[0]].w;
    std::vector<double> lam(S.size(), 0.0);
    Eigen::VectorXd p;
    if (S.size() == 1) {
      lam[0] = 1.0;
      p = w0;
    } else {
      Eigen::MatrixXd D(w0.size(), static_cast<Eigen::Index>(S.size() - 1));
      for (std::size_t j = 1; j < S.size(); ++j) D.col(static_cast<Eigen::Index>(j - 1)) = W[S[j]].w - w0;
      Eigen::MatrixXd G = D.transpose() * D;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
      lu.setThreshold(1e-13);
      if (lu.rank() < G.rows()) continue;
      Eigen::VectorXd mu = lu.solve(-D.transpose() * w0);
      double sum = mu.sum();
      lam[0] = 1.0 - sum;
      for (std::size_t j = 1; j < S.size(); ++j) lam[j] = mu[static_cast<Eigen::Index>(j - 1)];
      bool ok = true;
      for (double l : lam)
        if (l < -1e-12) ok = false;
      if (!ok) continue;
      p = w0 + D * mu;
    }
    const double nrm = p.squaredNorm();
    if (nrm < best) {
      best = nrm;
      best_point = p;
      best_set = S;
      best_lambda = lam;
    }
  }
  std::vector<SimplexVertex> kept;
  lambda.clear();
  for (std::size_t j = 0; j < best_set.size(); ++j) {
    if (best_lambda[j] <= 0.0 && best_set.size() > 1) continue;
    kept.push_back(W[best_set[j]]);
    lambda.push_back(std::max(best_lambda[j], 0.0));
  }
  const double total = std::accumulate(lambda.begin(), lambda.end(), 0.0);
  for (double& l : lambda) l /= total;
  W = std::move(kept);
  return best_point;
}

}  // namespace

HullDistance hull_distance(const PointSet& A, const PointSet& B) {
  const Eigen::Index n = A.rows();
  double scale = 1.0;
  for (Eigen::Index j = 0; j < A.cols(); ++j) scale = std::max(scale, A.col(j).norm());
  for (Eigen::Index j = 0; j < B.cols(); ++j) scale = std::max(scale, B.col(j).norm());

  std::vector<SimplexVertex> W{{0, 0, A.col(0) - B.col(0)}};
  std::vector<double> lambda{1.0};
  Eigen::VectorXd v = W[0].w;
  double prev = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 256; ++iter) {
    const double vv = v.squaredNorm();
    if (vv <= 1e-28 * scale * scale) break;
    Eigen::Index ia = 0, ib = 0;
    (v.transpose() * A).minCoeff(&ia);
    (v.transpose() * B).maxCoeff(&ib);
    Eigen::VectorXd w = A.col(ia) - B.col(ib);
    if (vv - v.dot(w) <= 1e-14 * std::max(vv, 1e-30 * scale * scale) + 1e-30) break;
    bool seen = false;
    for (const auto& s : W)
      if (s.ia == ia && s.ib == ib) seen = true;
    if (seen) break;
    W.push_back({static_cast<int>(ia), static_cast<int>(ib), w});
    v = reduce_simplex(W, lambda);
    if (static_cast<Eigen::Index>(W.size()) == n + 1) {
      v.setZero();
      break;
    }
    const double now = v.squaredNorm();
    if (now >= prev) break;
    prev = now;
  }
  HullDistance out;
  out.a = Eigen::VectorXd::Zero(n);
  out.b = Eigen::VectorXd::Zero(n);
  for (std::size_t j = 0; j < W.size(); ++j) {
    out.a += lambda[j] * A.col(W[j].ia);
    out.b += lambda[j] * B.col(W[j].ib);
  }
  out.distance = (out.a - out.b).norm();
  if (v.squaredNorm() == 0.0) out.distance = 0.0;
  return out;
}

double point_hull_distance(const Eigen::VectorXd& x, const PointSet& A) {
  PointSet P(x.size(), 1);
  P.col(0) = x;
  return hull_distance(A, P).distance;
}

PointSet select_columns(const PointSet& P, const std::vector<int>& cols) {
  PointSet out(P.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = P.col(cols[j]);
  return out;
}

std::vector<int> extreme_points(const PointSet& P, double tol) {
  const Eigen::Index n = P.rows(), m = P.cols();
  std::vector<int> uniq;
  if (n <= 2) {
    for (Eigen::Index j = 0; j < m; ++j) uniq.push_back(static_cast<int>(j));
  } else {
    for (Eigen::Index j = 0; j < m; ++j) {
      bool dup = false;
      for (int u : uniq)
        if ((P.col(u) - P.col(j)).norm() <= tol) dup = true;
      if (!dup) uniq.push_back(static_cast<int>(j));
    }
  }
  if (uniq.size() <= 1) return uniq;
  if (n == 1) {
    int lo = uniq[0], hi = uniq[0];
    for (int u : uniq) {
      if (P(0, u) < P(0, lo)) lo = u;
      if (P(0, u) > P(0, hi)) hi = u;
    }
    if (P(0, hi) - P(0, lo) <= tol) return {lo};
    return lo < hi ? std::vector<int>{lo, hi} : std::vector<int>{hi, lo};
  }
  if (n == 2) {
    std::vector<int> idx = uniq;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      return P(0, a) < P(0, b) || (P(0, a) == P(0, b) && P(1, a) < P(1, b));
    });
    auto cross = [&](int o, int a, int b) {
      return (P(0, a) - P(0, o)) * (P(1, b) - P(1, o)) - (P(1, a) - P(1, o)) * (P(0, b) - P(0, o));
    };
    std::vector<int> hull(2 * idx.size());
    std::size_t k = 0;
    for (int i : idx) {
      while (k >= 2 && cross(hull[k - 2], hull[k - 1], i) <= tol * tol) --k;
      hull[k++] = i;
    }
    for (std::size_t t = idx.size() - 1, lower = k + 1; t-- > 0;) {
      const int i = idx[t];
      while (k >= lower && cross(hull[k - 2], hull[k - 1], i) <= tol * tol) --k;
      hull[k++] = i;
    }
    hull.resize(k > 1 ? k - 1 : k);
    if (hull.size() == 2 && (P.col(hull[0]) - P.col(hull[1])).norm() <= tol) hull.resize(1);
    std::sort(hull.begin(), hull.end());
    return hull;
  }
  std::vector<int> out;
  for (std::size_t j = 0; j < uniq.size(); ++j) {
    std::vector<int> others;
    for (std::size_t k = 0; k < uniq.size(); ++k)
      if (k != j) others.push_back(uniq[k]);
    if (point_hull_distance(P.col(uniq[j]), select_columns(P, others)) > tol) out.push_back(uniq[j]);
  }
  return out;
}

int affine_rank(const PointSet& P, double tol) {
  if (P.cols() <= 1) return 0;
  Eigen::MatrixXd D = P.rightCols(P.cols() - 1).colwise() - P.col(0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(D);
  const auto& s = svd.singularValues();
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > tol) ++r;
  return r;
}

double diameter(const PointSet& P) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < P.cols(); ++i)
    for (Eigen::Index j = i + 1; j < P.cols(); ++j) d = std::max(d, (P.col(i) - P.col(j)).norm());
  return d;
}

Eigen::MatrixXd householder_to_last_axis(const Eigen::VectorXd& normal) {
  const Eigen::Index n = normal.size();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  e[n - 1] = 1.0;
  Eigen::VectorXd v = normal.normalized() - e;
  if (v.norm() < 1e-15) return Eigen::MatrixXd::Identity(n, n);
  return Eigen::MatrixXd::Identity(n, n) - 2.0 * v * v.transpose() / v.squaredNorm();
}

ConvexPolygon ConvexPolygon::from_vertices(std::vector<Eigen::Vector2d> vertices) {
  ConvexPolygon p;
  double s = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const auto& a = vertices[i];
    const auto& b = vertices[(i + 1) % vertices.size()];
    s += a.x() * b.y() - a.y() * b.x();
  }
  if (s < 0) std::reverse(vertices.begin(), vertices.end());
  p.vertices = std::move(vertices);
  p.edge_labels.assign(p.vertices.size(), -1);
  return p;
}

ConvexPolygon ConvexPolygon::rectangle(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi) {
  return from_vertices({lo, {hi.x(), lo.y()}, hi, {lo.x(), hi.y()}});
}

ConvexPolygon clip(const ConvexPolygon& poly, const Eigen::Vector2d& a, double b, int label) {
  const std::size_t m = poly.vertices.size();
  ConvexPolygon out;
  if (m == 0) return out;
  std::vector<double> s(m);
  bool any_out = false, any_in = false;
  for (std::size_t i = 0; i < m; ++i) {
    s[i] = a.dot(poly.vertices[i]) - b;
    if (s[i] > 0) any_out = true;
    else any_in = true;
  }
  if (!any_out) return poly;
  if (!any_in) return out;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = (i + 1) % m;
    const bool in_i = s[i] <= 0, in_j = s[j] <= 0;
    if (in_i) {
      out.vertices.push_back(poly.vertices[i]);
      out.edge_labels.push_back(poly.edge_labels[i]);
    }
    if (in_i != in_j) {
      const double t = s[i] / (s[i] - s[j]);
      out.vertices.push_back(poly.vertices[i] + t * (poly.vertices[j] - poly.vertices[i]));
      // leaving the half-plane the new vertex starts the cut edge; entering it resumes edge i
      out.edge_labels.push_back(in_i ? label : poly.edge_labels[i]);
    }
  }
  return out;
}

double area(const ConvexPolygon& poly) {
  double s = 0.0;
  const std::size_t m = poly.vertices.size();
  for (std::size_t i = 0; i < m; ++i) {
    const auto& p = poly.vertices[i];
    const auto& q = poly.vertices[(i + 1) % m];
    s += p.x() * q.y() - p.y() * q.x();
  }
  return 0.5 * s;
}

Eigen::Vector2d first_moment(const ConvexPolygon& poly) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  const std::size_t m = poly.vertices.size();
  for (std::size_t i = 0; i < m; ++i) {
    const auto& p = poly.vertices[i];
    const auto& q = poly.vertices[(i + 1) % m];
    const double cr = p.x() * q.y() - p.y() * q.x();
    c += cr * (p + q);
  }
  return c / 6.0;
}

bool contains(const ConvexPolygon& poly, const Eigen::Vector2d& x, double slack) {
  const std::size_t m = poly.vertices.size();
  if (m < 3) return false;
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::Vector2d e = poly.vertices[(i + 1) % m] - poly.vertices[i];
    const Eigen::Vector2d d = x - poly.vertices[i];
    if (e.x() * d.y() - e.y() * d.x() < -slack * e.norm()) return false;
  }
  return true;
}

ConvexPolygon convex_hull_2d(const std::vector<Eigen::Vector2d>& pts) {
  PointSet P(2, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) P.col(static_cast<Eigen::Index>(i)) = pts[i];
  const std::vector<int> ext = extreme_points(P, 0.0);
  std::vector<Eigen::Vector2d> v;
  for (int i : ext) v.push_back(pts[static_cast<std::size_t>(i)]);
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : v) c += p;
  c /= static_cast<double>(std::max<std::size_t>(v.size(), 1));
  std::sort(v.begin(), v.end(), [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return std::atan2(a.y() - c.y(), a.x() - c.x()) < std::atan2(b.y() - c.y(), b.x() - c.x());
  });
  return ConvexPolygon::from_vertices(std::move(v));
}

}  // namespace tears
