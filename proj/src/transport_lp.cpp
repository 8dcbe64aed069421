#include "tears/transport_lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include "tears/errors.hpp"

namespace tears {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Entry {
  double key;
  int source;
  bool operator>(const Entry& o) const { return key > o.key || (key == o.key && source > o.source); }
};
using MinHeap = std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>>;

struct Residual {
  const Eigen::MatrixXd& cost;
  Eigen::MatrixXd& flow;
  int T;
  std::vector<MinHeap> heaps;  // heap (j, k): sources carrying flow to j, keyed by c(s,k) - c(s,j)
  double eps;

  MinHeap& heap(int j, int k) { return heaps[static_cast<std::size_t>(j * T + k)]; }

  void gained(int s, int j) {
    for (int k = 0; k < T; ++k)
      if (k != j) heap(j, k).push({cost(s, k) - cost(s, j), s});
  }

  // cheapest rerouting j -> k, or +inf
  const Entry* top(int j, int k) {
    MinHeap& h = heap(j, k);
    while (!h.empty() && flow(h.top().source, j) <= eps) h.pop();
    return h.empty() ? nullptr : &h.top();
  }
};

}  // namespace

Eigen::MatrixXd bilinear_cost(const PointSet& sources, const PointSet& targets) {
  return -(sources.transpose() * targets);
}

DiscretePlan discrete_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& source_mass,
                                const Eigen::VectorXd& target_mass) {
  const int S = static_cast<int>(cost.rows()), T = static_cast<int>(cost.cols());
  if (source_mass.size() != S || target_mass.size() != T) throw ArgumentError("discrete_transport: size mismatch");
  const double total = source_mass.sum();
  if (std::abs(total - target_mass.sum()) > 1e-9 * std::max(1.0, total))
    throw ArgumentError("discrete_transport: masses must balance");
  DiscretePlan plan;
  plan.flow = Eigen::MatrixXd::Zero(S, T);
  const double eps = 1e-15 * std::max(1.0, total);
  Residual R{cost, plan.flow, T, std::vector<MinHeap>(static_cast<std::size_t>(T * T)), eps};
  Eigen::VectorXd free = target_mass;

  std::vector<double> dist(static_cast<std::size_t>(T));
  std::vector<int> pred(static_cast<std::size_t>(T)), via(static_cast<std::size_t>(T));
  for (int s = 0; s < S; ++s) {
    double q = source_mass[s];
    while (q > eps) {
      for (int j = 0; j < T; ++j) {
        dist[static_cast<std::size_t>(j)] = cost(s, j);
        pred[static_cast<std::size_t>(j)] = -1;
      }
      for (int pass = 0; pass < T; ++pass) {
        bool changed = false;
        for (int j = 0; j < T; ++j)
          for (int k = 0; k < T; ++k) {
            if (j == k) continue;
            const Entry* e = R.top(j, k);
            if (!e) continue;
            const double nd = dist[static_cast<std::size_t>(j)] + e->key;
            if (nd < dist[static_cast<std::size_t>(k)] - 1e-14 * (1.0 + std::abs(nd))) {
              dist[static_cast<std::size_t>(k)] = nd;
              pred[static_cast<std::size_t>(k)] = j;
              via[static_cast<std::size_t>(k)] = e->source;
              changed = true;
            }
          }
        if (!changed) break;
      }
      int t = -1;
      for (int j = 0; j < T; ++j)
        if (free[j] > eps && (t < 0 || dist[static_cast<std::size_t>(j)] < dist[static_cast<std::size_t>(t)])) t = j;
      if (t < 0 && q <= 1e-9 * std::max(1.0, total)) break;  // rounding of the balance
      if (t < 0) throw ConvergenceFailure("discrete_transport: no free target capacity", q, s);
      double delta = std::min(q, free[t]);
      std::vector<int> path{t};
      for (int k = t, guard = 0; pred[static_cast<std::size_t>(k)] >= 0; ++guard) {
        if (guard > T) throw ConvergenceFailure("discrete_transport: cycle in shortest-path tree", q, s);
        const int j = pred[static_cast<std::size_t>(k)];
        delta = std::min(delta, plan.flow(via[static_cast<std::size_t>(k)], j));
        path.push_back(j);
        k = j;
      }
      for (std::size_t p = 0; p + 1 < path.size(); ++p) {
        const int k = path[p], j = path[p + 1], sp = via[static_cast<std::size_t>(k)];
        plan.flow(sp, j) -= delta;
        const bool was_zero = plan.flow(sp, k) <= eps;
        plan.flow(sp, k) += delta;
        if (was_zero) R.gained(sp, k);
      }
      const int first = path.back();
      const bool was_zero = plan.flow(s, first) <= eps;
      plan.flow(s, first) += delta;
      if (was_zero) R.gained(s, first);
      free[t] -= delta;
      q -= delta;
    }
  }
  plan.cost = (plan.flow.array() * cost.array()).sum();

  // potentials from shortest paths in the final residual graph
  std::vector<double> d(static_cast<std::size_t>(T), 0.0);
  for (int pass = 0; pass < T; ++pass) {
    bool changed = false;
    for (int j = 0; j < T; ++j)
      for (int k = 0; k < T; ++k) {
        if (j == k) continue;
        const Entry* e = R.top(j, k);
        if (!e) continue;
        const double nd = d[static_cast<std::size_t>(j)] + e->key;
        if (nd < d[static_cast<std::size_t>(k)] - 1e-14 * (1.0 + std::abs(nd))) {
          d[static_cast<std::size_t>(k)] = nd;
          changed = true;
        }
      }
    if (!changed) break;
  }
  plan.psi.resize(T);
  for (int j = 0; j < T; ++j) plan.psi[j] = -(d[static_cast<std::size_t>(j)] - d[0]);
  return plan;
}

namespace {

// Dinic max-flow on a small dense bipartite network.
struct MaxFlow {
  struct Edge {
    int to;
    double cap;
  };
  std::vector<Edge> edges;
  std::vector<std::vector<int>> adj;
  std::vector<int> level, it;

  explicit MaxFlow(int n) : adj(static_cast<std::size_t>(n)), level(static_cast<std::size_t>(n)), it(static_cast<std::size_t>(n)) {}

  void add(int u, int v, double c) {
    adj[static_cast<std::size_t>(u)].push_back(static_cast<int>(edges.size()));
    edges.push_back({v, c});
    adj[static_cast<std::size_t>(v)].push_back(static_cast<int>(edges.size()));
    edges.push_back({u, 0.0});
  }

  bool bfs(int s, int t, double eps) {
    std::fill(level.begin(), level.end(), -1);
    std::queue<int> q;
    level[static_cast<std::size_t>(s)] = 0;
    q.push(s);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int id : adj[static_cast<std::size_t>(u)]) {
        const Edge& e = edges[static_cast<std::size_t>(id)];
        if (e.cap > eps && level[static_cast<std::size_t>(e.to)] < 0) {
          level[static_cast<std::size_t>(e.to)] = level[static_cast<std::size_t>(u)] + 1;
          q.push(e.to);
        }
      }
    }
    return level[static_cast<std::size_t>(t)] >= 0;
  }

  double dfs(int u, int t, double f, double eps) {
    if (u == t) return f;
    for (int& i = it[static_cast<std::size_t>(u)]; i < static_cast<int>(adj[static_cast<std::size_t>(u)].size()); ++i) {
      const int id = adj[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)];
      Edge& e = edges[static_cast<std::size_t>(id)];
      if (e.cap > eps && level[static_cast<std::size_t>(e.to)] == level[static_cast<std::size_t>(u)] + 1) {
        const double got = dfs(e.to, t, std::min(f, e.cap), eps);
        if (got > eps) {
          e.cap -= got;
          edges[static_cast<std::size_t>(id ^ 1)].cap += got;
          return got;
        }
      }
    }
    return 0.0;
  }

  double run(int s, int t, double eps) {
    double total = 0.0;
    while (bfs(s, t, eps)) {
      std::fill(it.begin(), it.end(), 0);
      while (true) {
        const double f = dfs(s, t, kInf, eps);
        if (f <= eps) break;
        total += f;
      }
    }
    return total;
  }
};

}  // namespace

double bottleneck_distance(const PointSet& a, const Eigen::VectorXd& wa, const PointSet& b, const Eigen::VectorXd& wb,
                           double mass_tol) {
  const int na = static_cast<int>(a.cols()), nb = static_cast<int>(b.cols());
  Eigen::MatrixXd D(na, nb);
  std::vector<double> levels;
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j) {
      D(i, j) = (a.col(i) - b.col(j)).norm();
      levels.push_back(D(i, j));
    }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  const double total = wa.sum();
  auto feasible = [&](double t) {
    MaxFlow mf(na + nb + 2);
    const int src = na + nb, snk = na + nb + 1;
    for (int i = 0; i < na; ++i) mf.add(src, i, wa[i]);
    for (int j = 0; j < nb; ++j) mf.add(na + j, snk, wb[j]);
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < nb; ++j)
        if (D(i, j) <= t) mf.add(i, na + j, kInf);
    return mf.run(src, snk, 1e-15) >= total - mass_tol;
  };
  std::size_t lo = 0, hi = levels.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (feasible(levels[mid])) hi = mid;
    else lo = mid + 1;
  }
  return levels[lo];
}

}  // namespace tears
