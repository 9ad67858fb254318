#include "cpa/arborescence.h"

#include <cmath>
#include <limits>

#include "cpa/error.h"

namespace cpa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One contraction level of Chu-Liu/Edmonds.
std::vector<int> Solve(const Eigen::MatrixXd& cost, int root) {
  const int n = int(cost.rows());
  std::vector<int> in(n, -1);
  for (int v = 0; v < n; ++v) {
    if (v == root) continue;
    double best = kInf;
    for (int u = 0; u < n; ++u) {
      if (u != v && cost(u, v) < best) {
        best = cost(u, v);
        in[v] = u;
      }
    }
    if (in[v] < 0) throw Error("graph has no spanning arborescence");
  }

  // Label the cycles formed by the cheapest incoming edges.
  std::vector<int> id(n, -1), visit(n, -1);
  int groups = 0;
  for (int v = 0; v < n; ++v) {
    int x = v;
    while (x != root && visit[x] != v && id[x] < 0) {
      visit[x] = v;
      x = in[x];
    }
    if (x != root && id[x] < 0 && visit[x] == v) {
      for (int y = in[x]; y != x; y = in[y]) id[y] = groups;
      id[x] = groups++;
    }
  }
  if (groups == 0) {
    in[root] = -1;
    return in;
  }
  std::vector<bool> on_cycle(n);
  for (int v = 0; v < n; ++v) on_cycle[v] = id[v] >= 0;
  for (int v = 0; v < n; ++v) {
    if (id[v] < 0) id[v] = groups++;
  }

  // Contracted graph; remember which original edge realizes each super edge.
  Eigen::MatrixXd reduced = Eigen::MatrixXd::Constant(groups, groups, kInf);
  std::vector<std::pair<int, int>> origin(size_t(groups) * groups, {-1, -1});
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u == v || v == root || id[u] == id[v] || !std::isfinite(cost(u, v))) continue;
      const double w = cost(u, v) - (on_cycle[v] ? cost(in[v], v) : 0.0);
      if (w < reduced(id[u], id[v])) {
        reduced(id[u], id[v]) = w;
        origin[size_t(id[u]) * groups + id[v]] = {u, v};
      }
    }
  }
  const std::vector<int> sub = Solve(reduced, id[root]);

  std::vector<int> parent = in;
  for (int x = 0; x < groups; ++x) {
    if (x == id[root]) continue;
    const auto [u, v] = origin[size_t(sub[x]) * groups + x];
    parent[v] = u;
  }
  parent[root] = -1;
  return parent;
}

}  // namespace

std::vector<int> MinArborescence(const Eigen::MatrixXd& cost, int root) {
  if (cost.rows() != cost.cols() || root < 0 || root >= cost.rows()) {
    throw Error("arborescence: bad cost matrix");
  }
  return Solve(cost, root);
}

}  // namespace cpa
