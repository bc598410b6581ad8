#pragma once

#include <vector>

#include "vecchia/plan.hpp"

namespace vecchia {

enum class VertexKind { latent, observed };

/// DAG over the interleaved latent/observed block vertices of a plan.
struct Dag {
  struct Vertex {
    VertexKind kind;
    int block;                 // ordered block position
    std::vector<int> parents;  // vertex ids, all smaller than this vertex
  };

  std::vector<Vertex> vertices;
  std::vector<std::vector<int>> children;
  std::vector<char> has_observed_descendant;  // reaches some observed vertex
  std::vector<int> y_vertex;                  // per block
  std::vector<int> z_vertex;                  // per block, -1 if unobserved
  int block_count = 0;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  bool is_latent(int v) const { return vertices[v].kind == VertexKind::latent; }
};

// Vertex sequence interleaves each latent block with its observation (when
// observed). Latent parents come from qy/qz; each observation's only parent
// is its own latent block.
Dag dag_from_plan(const VecchiaPlan& plan);

// Graphical conditional-independence test between disjoint vertex sets:
// true iff every undirected path from a to b is blocked given c, via the
// standard active-trail reachability sweep.
bool d_separated(const Dag& dag, const std::vector<int>& a, const std::vector<int>& b,
                 const std::vector<int>& c);

/// Upper-triangular structural-nonzero prediction at block granularity.
struct SparsityPattern {
  int n = 0;
  std::vector<std::vector<int>> cols;  // ascending row indices, diagonal included

  bool contains(int row, int col) const;
  long long nnz() const;
  int col_offdiag_nnz(int col) const;
};

// Support of the joint factor: diagonal plus one entry per DAG edge.
SparsityPattern predict_U_pattern(const Dag& dag);

// Support of the latent posterior precision: moral-graph adjacency among
// latent blocks (edges plus shared-child pairs).
SparsityPattern predict_W_pattern(const Dag& dag);

// Support of the posterior precision factor: (j,i) present iff the latent
// subgraph restricted to later-than-i vertices with observed descendants
// connects block i to block j.
SparsityPattern predict_V_pattern(const Dag& dag);

// Expand a block pattern to scalar granularity. Off-diagonal blocks expand
// densely; diagonal blocks expand to their upper triangle.
SparsityPattern expand_pattern(const SparsityPattern& p, const std::vector<int>& block_sizes);

}  // namespace vecchia
