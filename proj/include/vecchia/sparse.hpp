#pragma once

#include <Eigen/Dense>
#include <vector>

namespace vecchia {

// Dense matrices larger than this are refused by the dense oracle routines.
inline constexpr int kDenseOracleCap = 4096;

/// General sparse matrix in compressed-column form, rows ascending per column.
struct SparseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> col_ptr;  // size cols + 1
  std::vector<int> row_idx;
  std::vector<double> values;

  long long nnz() const { return static_cast<long long>(row_idx.size()); }
  Eigen::MatrixXd dense() const;
};

// Build from (row, col, value) triplets; duplicates are summed.
SparseMatrix csc_from_triplets(int rows, int cols,
                               std::vector<std::tuple<int, int, double>> triplets);

/// Square upper-triangular sparse matrix; every diagonal entry is stored.
struct SparseUpper {
  int n = 0;
  std::vector<int> col_ptr;
  std::vector<int> row_idx;  // ascending; last entry of each column is the diagonal
  std::vector<double> values;

  long long nnz() const { return static_cast<long long>(row_idx.size()); }
  double diag(int j) const { return values[col_ptr[j + 1] - 1]; }
  int col_nnz(int j) const { return col_ptr[j + 1] - col_ptr[j]; }
  Eigen::MatrixXd dense() const;
};

/// Symmetric sparse matrix, upper triangle stored (diagonal included).
struct SparseSym {
  int n = 0;
  std::vector<int> col_ptr;
  std::vector<int> row_idx;
  std::vector<double> values;

  long long nnz_stored() const { return static_cast<long long>(row_idx.size()); }
  Eigen::MatrixXd dense() const;  // symmetrized
};

SparseUpper upper_from_triplets(int n, std::vector<std::tuple<int, int, double>> triplets);
SparseSym sym_from_triplets(int n, std::vector<std::tuple<int, int, double>> triplets);

// Reverse Cholesky: the upper-triangular R with positive diagonal and
// R R' = A, obtained by factorizing the row-column-reversed matrix and
// un-reversing. Sparse path runs a symbolic (elimination-tree) analysis of
// the reversed matrix followed by an up-looking numeric phase.
SparseUpper rchol(const SparseSym& a);
Eigen::MatrixXd rchol(const Eigen::MatrixXd& a);

// W = M M' for a row slice M (kept in its own row order).
SparseSym sparse_outer(const SparseMatrix& m);

enum class TriSide { upper, transposed };

// Solve R x = b (upper) or R' x = b (transposed) by substitution.
Eigen::VectorXd tri_solve(const SparseUpper& r, const Eigen::VectorXd& b, TriSide side);

// Dense oracle routines (size-capped). Lower Cholesky factor; SPD solve;
// log-determinant via the factor diagonal.
Eigen::MatrixXd dense_chol(const Eigen::MatrixXd& a, int cap = kDenseOracleCap);
Eigen::MatrixXd dense_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            int cap = kDenseOracleCap);
double dense_logdet(const Eigen::MatrixXd& a, int cap = kDenseOracleCap);

}  // namespace vecchia
