#include "vecchia/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "vecchia/errors.hpp"

namespace vecchia {

namespace {

struct CscParts {
  std::vector<int> col_ptr, row_idx;
  std::vector<double> values;
};

CscParts compress(int rows, int cols, std::vector<std::tuple<int, int, double>>& t) {
  for (const auto& [r, c, v] : t) {
    if (r < 0 || r >= rows || c < 0 || c >= cols) {
      throw ArgumentError("sparse: triplet index out of range");
    }
  }
  std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<0>(a) < std::get<0>(b);
  });
  CscParts out;
  out.col_ptr.assign(cols + 1, 0);
  for (std::size_t k = 0; k < t.size();) {
    const int r = std::get<0>(t[k]);
    const int c = std::get<1>(t[k]);
    double v = 0.0;
    while (k < t.size() && std::get<0>(t[k]) == r && std::get<1>(t[k]) == c) {
      v += std::get<2>(t[k]);
      ++k;
    }
    out.row_idx.push_back(r);
    out.values.push_back(v);
    ++out.col_ptr[c + 1];
  }
  for (int c = 0; c < cols; ++c) out.col_ptr[c + 1] += out.col_ptr[c];
  return out;
}

// Elimination tree of a symmetric matrix given by its upper triangle.
std::vector<int> etree_upper(int n, const std::vector<int>& col_ptr,
                             const std::vector<int>& row_idx) {
  std::vector<int> parent(n, -1), ancestor(n, -1);
  for (int k = 0; k < n; ++k) {
    for (int p = col_ptr[k]; p < col_ptr[k + 1]; ++p) {
      int i = row_idx[p];
      while (i != -1 && i < k) {
        const int next = ancestor[i];
        ancestor[i] = k;  // path compression
        if (next == -1) parent[i] = k;
        i = next;
      }
    }
  }
  return parent;
}

// Nonzero pattern of row k of the Cholesky factor: union of etree paths from
// the entries of column k of the upper triangle up to (excluding) k. Returns
// indices in out[top..n-1], ascending along each path.
int ereach(int n, const std::vector<int>& col_ptr, const std::vector<int>& row_idx,
           const std::vector<int>& parent, int k, std::vector<int>& work_flag,
           std::vector<int>& out) {
  int top = n;
  work_flag[k] = k;
  for (int p = col_ptr[k]; p < col_ptr[k + 1]; ++p) {
    int i = row_idx[p];
    if (i > k) continue;
    int len = 0;
    for (; work_flag[i] != k; i = parent[i]) {
      out[len++] = i;
      work_flag[i] = k;
    }
    while (len > 0) out[--top] = out[--len];
  }
  return top;
}

}  // namespace

Eigen::MatrixXd SparseMatrix::dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int p = col_ptr[c]; p < col_ptr[c + 1]; ++p) out(row_idx[p], c) = values[p];
  }
  return out;
}

Eigen::MatrixXd SparseUpper::dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (int c = 0; c < n; ++c) {
    for (int p = col_ptr[c]; p < col_ptr[c + 1]; ++p) out(row_idx[p], c) = values[p];
  }
  return out;
}

Eigen::MatrixXd SparseSym::dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (int c = 0; c < n; ++c) {
    for (int p = col_ptr[c]; p < col_ptr[c + 1]; ++p) {
      out(row_idx[p], c) = values[p];
      out(c, row_idx[p]) = values[p];
    }
  }
  return out;
}

SparseMatrix csc_from_triplets(int rows, int cols,
                               std::vector<std::tuple<int, int, double>> triplets) {
  auto parts = compress(rows, cols, triplets);
  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.col_ptr = std::move(parts.col_ptr);
  m.row_idx = std::move(parts.row_idx);
  m.values = std::move(parts.values);
  return m;
}

SparseUpper upper_from_triplets(int n, std::vector<std::tuple<int, int, double>> triplets) {
  for (const auto& [r, c, v] : triplets) {
    if (r > c) throw ArgumentError("SparseUpper: entry below the diagonal");
  }
  auto parts = compress(n, n, triplets);
  SparseUpper u;
  u.n = n;
  u.col_ptr = std::move(parts.col_ptr);
  u.row_idx = std::move(parts.row_idx);
  u.values = std::move(parts.values);
  for (int j = 0; j < n; ++j) {
    if (u.col_ptr[j + 1] == u.col_ptr[j] || u.row_idx[u.col_ptr[j + 1] - 1] != j) {
      throw ArgumentError("SparseUpper: missing diagonal entry in column " + std::to_string(j));
    }
  }
  return u;
}

SparseSym sym_from_triplets(int n, std::vector<std::tuple<int, int, double>> triplets) {
  for (auto& [r, c, v] : triplets) {
    if (r > c) std::swap(r, c);  // fold into the upper triangle
  }
  auto parts = compress(n, n, triplets);
  SparseSym s;
  s.n = n;
  s.col_ptr = std::move(parts.col_ptr);
  s.row_idx = std::move(parts.row_idx);
  s.values = std::move(parts.values);
  for (int j = 0; j < n; ++j) {
    if (s.col_ptr[j + 1] == s.col_ptr[j] || s.row_idx[s.col_ptr[j + 1] - 1] != j) {
      throw ArgumentError("SparseSym: missing diagonal entry in column " + std::to_string(j));
    }
  }
  return s;
}

SparseUpper rchol(const SparseSym& a) {
  const int n = a.n;

  // Upper triangle of the row-column-reversed matrix: entry (r, c) of the
  // original upper triangle lands at (n-1-c, n-1-r).
  std::vector<std::tuple<int, int, double>> rev;
  rev.reserve(a.row_idx.size());
  for (int c = 0; c < n; ++c) {
    for (int p = a.col_ptr[c]; p < a.col_ptr[c + 1]; ++p) {
      rev.emplace_back(n - 1 - c, n - 1 - a.row_idx[p], a.values[p]);
    }
  }
  auto parts = compress(n, n, rev);
  const auto& cp = parts.col_ptr;
  const auto& ri = parts.row_idx;
  const auto& vx = parts.values;

  const std::vector<int> parent = etree_upper(n, cp, ri);

  // Symbolic phase: row patterns via ereach give the fill-in column counts.
  std::vector<int> flag(n, -1), stack(n);
  std::vector<int> col_count(n, 1);  // diagonal
  long long total = n;
  for (int k = 0; k < n; ++k) {
    const int top = ereach(n, cp, ri, parent, k, flag, stack);
    for (int t = top; t < n; ++t) {
      ++col_count[stack[t]];
      ++total;
    }
  }

  // Factor of the reversed matrix, stored by columns with a write cursor.
  std::vector<int> lp(n + 1, 0), cursor(n);
  for (int j = 0; j < n; ++j) lp[j + 1] = lp[j] + col_count[j];
  std::vector<int> li(total);
  std::vector<double> lx(total);
  for (int j = 0; j < n; ++j) cursor[j] = lp[j];

  std::fill(flag.begin(), flag.end(), -1);
  std::vector<double> x(n, 0.0);
  double max_diag = 0.0;
  for (int c = 0; c < n; ++c) {
    for (int p = cp[c]; p < cp[c + 1]; ++p) {
      if (ri[p] == c) max_diag = std::max(max_diag, std::abs(vx[p]));
    }
  }
  const double pivot_floor = 1e-14 * max_diag;

  for (int k = 0; k < n; ++k) {
    // scatter column k of the reversed matrix (rows <= k)
    const int top = ereach(n, cp, ri, parent, k, flag, stack);
    double d = 0.0;
    for (int p = cp[k]; p < cp[k + 1]; ++p) {
      if (ri[p] < k) {
        x[ri[p]] = vx[p];
      } else if (ri[p] == k) {
        d = vx[p];
      }
    }
    // up-looking solve against the already-computed columns
    for (int t = top; t < n; ++t) {
      const int i = stack[t];
      const double lki = x[i] / lx[lp[i]];  // diagonal is the first entry of column i
      x[i] = 0.0;
      for (int p = lp[i] + 1; p < cursor[i]; ++p) x[li[p]] -= lx[p] * lki;
      d -= lki * lki;
      li[cursor[i]] = k;
      lx[cursor[i]] = lki;
      ++cursor[i];
    }
    if (!(d > pivot_floor) || !std::isfinite(d)) {
      throw NotPositiveDefiniteError(
          "rchol: non-positive pivot at index " + std::to_string(n - 1 - k), n - 1 - k);
    }
    li[lp[k]] = k;
    lx[lp[k]] = std::sqrt(d);
    cursor[k] = lp[k] + 1;
  }

  // Un-reverse: factor entry (r, c), r >= c, becomes (n-1-r, n-1-c).
  SparseUpper u;
  u.n = n;
  u.col_ptr.assign(n + 1, 0);
  u.row_idx.resize(total);
  u.values.resize(total);
  for (int c = 0; c < n; ++c) u.col_ptr[n - c] = cursor[c] - lp[c];
  for (int j = 0; j < n; ++j) u.col_ptr[j + 1] += u.col_ptr[j];
  for (int c = 0; c < n; ++c) {
    // rows of reversed column c are ascending; reversed they come out ascending
    int w = u.col_ptr[n - 1 - c + 1];
    for (int p = lp[c]; p < cursor[c]; ++p) {
      --w;
      u.row_idx[w] = n - 1 - li[p];
      u.values[w] = lx[p];
    }
  }
  return u;
}

Eigen::MatrixXd rchol(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n) throw ArgumentError("rchol: matrix must be square");
  Eigen::MatrixXd rev = a.colwise().reverse().rowwise().reverse();
  Eigen::MatrixXd l = dense_chol(rev);
  return l.colwise().reverse().rowwise().reverse();
}

SparseSym sparse_outer(const SparseMatrix& m) {
  std::vector<std::tuple<int, int, double>> triplets;
  for (int c = 0; c < m.cols; ++c) {
    for (int p = m.col_ptr[c]; p < m.col_ptr[c + 1]; ++p) {
      for (int q = p; q < m.col_ptr[c + 1]; ++q) {
        triplets.emplace_back(m.row_idx[p], m.row_idx[q], m.values[p] * m.values[q]);
      }
    }
  }
  // make sure every diagonal entry exists even if a row is empty
  for (int r = 0; r < m.rows; ++r) triplets.emplace_back(r, r, 0.0);
  return sym_from_triplets(m.rows, std::move(triplets));
}

Eigen::VectorXd tri_solve(const SparseUpper& r, const Eigen::VectorXd& b, TriSide side) {
  const int n = r.n;
  if (b.size() != n) throw ArgumentError("tri_solve: dimension mismatch");
  for (int j = 0; j < n; ++j) {
    if (r.diag(j) == 0.0) {
      throw NumericError("tri_solve: zero diagonal at index " + std::to_string(j));
    }
  }
  Eigen::VectorXd x = b;
  if (side == TriSide::upper) {  // back substitution, columns right to left
    for (int j = n - 1; j >= 0; --j) {
      x[j] /= r.diag(j);
      for (int p = r.col_ptr[j]; p < r.col_ptr[j + 1] - 1; ++p) {
        x[r.row_idx[p]] -= r.values[p] * x[j];
      }
    }
  } else {  // R' x = b, forward substitution via columns of R
    for (int j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int p = r.col_ptr[j]; p < r.col_ptr[j + 1] - 1; ++p) {
        dot += r.values[p] * x[r.row_idx[p]];
      }
      x[j] = (x[j] - dot) / r.diag(j);
    }
  }
  return x;
}

namespace {

void check_dense(const Eigen::MatrixXd& a, int cap, const char* who) {
  if (a.rows() != a.cols()) throw ArgumentError(std::string(who) + ": matrix must be square");
  if (a.rows() > cap) {
    throw SizeError(std::string(who) + ": size " + std::to_string(a.rows()) +
                    " exceeds dense cap " + std::to_string(cap));
  }
}

}  // namespace

Eigen::MatrixXd dense_chol(const Eigen::MatrixXd& a, int cap) {
  check_dense(a, cap, "dense_chol");
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefiniteError("dense_chol: matrix is not positive definite", -1);
  }
  return llt.matrixL();
}

Eigen::MatrixXd dense_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int cap) {
  check_dense(a, cap, "dense_solve");
  if (b.rows() != a.rows()) throw ArgumentError("dense_solve: rhs dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefiniteError("dense_solve: matrix is not positive definite", -1);
  }
  return llt.solve(b);
}

double dense_logdet(const Eigen::MatrixXd& a, int cap) {
  Eigen::MatrixXd l = dense_chol(a, cap);
  return 2.0 * l.diagonal().array().log().sum();
}

}  // namespace vecchia
