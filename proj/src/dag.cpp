#include "vecchia/dag.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <set>

#include "vecchia/errors.hpp"

namespace vecchia {

Dag dag_from_plan(const VecchiaPlan& plan) {
  const int l = plan.block_count();
  Dag dag;
  dag.block_count = l;
  dag.y_vertex.resize(l);
  dag.z_vertex.assign(l, -1);
  for (int i = 0; i < l; ++i) {
    dag.y_vertex[i] = dag.vertex_count();
    Dag::Vertex y{VertexKind::latent, i, {}};
    for (int j : plan.qy[i]) y.parents.push_back(dag.y_vertex[j]);
    for (int j : plan.qz[i]) y.parents.push_back(dag.z_vertex[j]);
    std::sort(y.parents.begin(), y.parents.end());
    dag.vertices.push_back(std::move(y));
    if (plan.is_observed(i)) {
      dag.z_vertex[i] = dag.vertex_count();
      dag.vertices.push_back(Dag::Vertex{VertexKind::observed, i, {dag.y_vertex[i]}});
    }
  }
  const int b = dag.vertex_count();
  dag.children.assign(b, {});
  for (int v = 0; v < b; ++v) {
    for (int p : dag.vertices[v].parents) dag.children[p].push_back(v);
  }
  dag.has_observed_descendant.assign(b, 0);
  for (int v = b - 1; v >= 0; --v) {
    for (int c : dag.children[v]) {
      if (!dag.is_latent(c) || dag.has_observed_descendant[c]) {
        dag.has_observed_descendant[v] = 1;
        break;
      }
    }
  }
  return dag;
}

bool d_separated(const Dag& dag, const std::vector<int>& a, const std::vector<int>& b,
                 const std::vector<int>& c) {
  const int n = dag.vertex_count();
  std::vector<char> in_a(n, 0), in_b(n, 0), in_c(n, 0);
  auto mark = [&](const std::vector<int>& set, std::vector<char>& flags) {
    for (int v : set) {
      if (v < 0 || v >= n) throw ArgumentError("d_separated: vertex out of range");
      flags[v] = 1;
    }
  };
  mark(a, in_a);
  mark(b, in_b);
  mark(c, in_c);
  for (int v = 0; v < n; ++v) {
    if (in_a[v] + in_b[v] + in_c[v] > 1) {
      throw ArgumentError("d_separated: sets must be disjoint");
    }
  }

  // ancestors of the conditioning set (for collider openings)
  std::vector<char> anc_c = in_c;
  {
    std::deque<int> queue(c.begin(), c.end());
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      for (int p : dag.vertices[v].parents) {
        if (!anc_c[p]) {
          anc_c[p] = 1;
          queue.push_back(p);
        }
      }
    }
  }

  // active-trail reachability: states (vertex, direction of arrival)
  enum { kFromChild = 0, kFromParent = 1 };
  std::vector<std::array<char, 2>> visited(n, {0, 0});
  std::deque<std::pair<int, int>> queue;
  for (int v : a) queue.emplace_back(v, kFromChild);  // as if entered from below
  while (!queue.empty()) {
    auto [v, dir] = queue.front();
    queue.pop_front();
    if (visited[v][dir]) continue;
    visited[v][dir] = 1;
    if (in_b[v]) return false;

    if (dir == kFromChild) {
      // trail arrived against the arrows: may continue to parents and children
      if (!in_c[v]) {
        for (int p : dag.vertices[v].parents) queue.emplace_back(p, kFromChild);
        for (int ch : dag.children[v]) queue.emplace_back(ch, kFromParent);
      }
    } else {
      // trail arrived along an arrow: v is a collider candidate
      if (!in_c[v]) {
        for (int ch : dag.children[v]) queue.emplace_back(ch, kFromParent);
      }
      if (anc_c[v]) {
        for (int p : dag.vertices[v].parents) queue.emplace_back(p, kFromChild);
      }
    }
  }
  return true;
}

bool SparsityPattern::contains(int row, int col) const {
  const auto& c = cols[col];
  return std::binary_search(c.begin(), c.end(), row);
}

long long SparsityPattern::nnz() const {
  long long t = 0;
  for (const auto& c : cols) t += static_cast<long long>(c.size());
  return t;
}

int SparsityPattern::col_offdiag_nnz(int col) const {
  return static_cast<int>(cols[col].size()) - 1;
}

SparsityPattern predict_U_pattern(const Dag& dag) {
  SparsityPattern p;
  p.n = dag.vertex_count();
  p.cols.resize(p.n);
  for (int v = 0; v < p.n; ++v) {
    p.cols[v] = dag.vertices[v].parents;  // already sorted, all < v
    p.cols[v].push_back(v);
  }
  return p;
}

SparsityPattern predict_W_pattern(const Dag& dag) {
  const int l = dag.block_count;
  std::vector<std::set<int>> cols(l);
  for (int i = 0; i < l; ++i) cols[i].insert(i);
  for (int i = 0; i < l; ++i) {
    const int yi = dag.y_vertex[i];
    std::vector<int> latent_parents;
    for (int par : dag.vertices[yi].parents) {
      if (dag.is_latent(par)) latent_parents.push_back(dag.vertices[par].block);
    }
    for (std::size_t a = 0; a < latent_parents.size(); ++a) {
      cols[i].insert(latent_parents[a]);  // direct edge y_j -> y_i
      for (std::size_t b = a + 1; b < latent_parents.size(); ++b) {
        // shared latent child: moralization pairs the parents
        const int lo = std::min(latent_parents[a], latent_parents[b]);
        const int hi = std::max(latent_parents[a], latent_parents[b]);
        cols[hi].insert(lo);
      }
    }
  }
  SparsityPattern p;
  p.n = l;
  p.cols.resize(l);
  for (int i = 0; i < l; ++i) p.cols[i].assign(cols[i].begin(), cols[i].end());
  return p;
}

SparsityPattern predict_V_pattern(const Dag& dag) {
  const int l = dag.block_count;
  // undirected latent adjacency from the DAG edges
  std::vector<std::vector<int>> adj(l);
  for (int i = 0; i < l; ++i) {
    for (int par : dag.vertices[dag.y_vertex[i]].parents) {
      if (dag.is_latent(par)) {
        const int j = dag.vertices[par].block;
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
    }
  }
  std::vector<char> usable(l, 0);
  for (int k = 0; k < l; ++k) usable[k] = dag.has_observed_descendant[dag.y_vertex[k]];

  SparsityPattern p;
  p.n = l;
  p.cols.resize(l);
  std::vector<char> reached(l, 0);
  for (int i = 0; i < l; ++i) {
    // vertices reachable from block i through later usable blocks
    std::fill(reached.begin(), reached.end(), 0);
    std::deque<int> queue{i};
    reached[i] = 1;
    std::set<int> rows;
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      for (int w : adj[v]) {
        if (w < i) {
          rows.insert(w);  // endpoint adjacent to the reached set
        } else if (w > i && usable[w] && !reached[w]) {
          reached[w] = 1;
          queue.push_back(w);
        }
      }
    }
    rows.insert(i);
    p.cols[i].assign(rows.begin(), rows.end());
  }
  return p;
}

SparsityPattern expand_pattern(const SparsityPattern& p, const std::vector<int>& block_sizes) {
  if (static_cast<int>(block_sizes.size()) != p.n) {
    throw ArgumentError("expand_pattern: block size list mismatch");
  }
  std::vector<int> offset(p.n + 1, 0);
  for (int i = 0; i < p.n; ++i) offset[i + 1] = offset[i] + block_sizes[i];
  SparsityPattern out;
  out.n = offset[p.n];
  out.cols.resize(out.n);
  for (int bc = 0; bc < p.n; ++bc) {
    for (int c = offset[bc]; c < offset[bc + 1]; ++c) {
      for (int br : p.cols[bc]) {
        const int top = (br == bc) ? std::min(c, offset[br + 1] - 1) : offset[br + 1] - 1;
        for (int r = offset[br]; r <= top; ++r) out.cols[c].push_back(r);
      }
      std::sort(out.cols[c].begin(), out.cols[c].end());
    }
  }
  return out;
}

}  // namespace vecchia
