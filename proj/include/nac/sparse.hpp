#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace nac {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_string(Index rows, Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

inline std::string shape_string(const Matrix& m) { return shape_string(m.rows(), m.cols()); }

struct Triplet {
  Index row;
  Index col;
  double value;
};

// Compressed-sparse-row matrix. Graph structure only: it never participates
// in differentiation, so products with it carry gradient to the dense side.
class SparseMatrix {
 public:
  SparseMatrix() : row_offsets_{0} {}

  SparseMatrix(Index rows, Index cols, std::vector<Index> row_offsets,
               std::vector<Index> col_indices, std::vector<double> values)
      : rows_(rows),
        cols_(cols),
        row_offsets_(std::move(row_offsets)),
        col_indices_(std::move(col_indices)),
        values_(std::move(values)) {
    validate();
  }

  // Duplicate (row, col) entries are summed; columns are sorted within a row.
  static SparseMatrix from_triplets(Index rows, Index cols, std::vector<Triplet> entries) {
    for (const auto& t : entries) {
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
        throw std::out_of_range("SparseMatrix: triplet (" + std::to_string(t.row) + "," +
                                std::to_string(t.col) + ") outside " + shape_string(rows, cols));
      }
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<Index> offsets(static_cast<std::size_t>(rows) + 1, 0);
    std::vector<Index> cols_out;
    std::vector<double> vals;
    cols_out.reserve(entries.size());
    vals.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& t = entries[i];
      if (!cols_out.empty() && i > 0 && entries[i - 1].row == t.row && entries[i - 1].col == t.col) {
        vals.back() += t.value;
        continue;
      }
      cols_out.push_back(t.col);
      vals.push_back(t.value);
      ++offsets[static_cast<std::size_t>(t.row) + 1];
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    return SparseMatrix(rows, cols, std::move(offsets), std::move(cols_out), std::move(vals));
  }

  static SparseMatrix identity(Index n) {
    std::vector<Index> offsets(static_cast<std::size_t>(n) + 1);
    std::iota(offsets.begin(), offsets.end(), Index{0});
    std::vector<Index> cols(static_cast<std::size_t>(n));
    std::iota(cols.begin(), cols.end(), Index{0});
    return SparseMatrix(n, n, std::move(offsets), std::move(cols),
                        std::vector<double>(static_cast<std::size_t>(n), 1.0));
  }

  static SparseMatrix from_dense(const Matrix& dense, double drop_below = 0.0) {
    std::vector<Index> offsets{0};
    std::vector<Index> cols;
    std::vector<double> vals;
    for (Index i = 0; i < dense.rows(); ++i) {
      for (Index j = 0; j < dense.cols(); ++j) {
        const double v = dense(i, j);
        if (v != 0.0 && std::abs(v) > drop_below) {
          cols.push_back(j);
          vals.push_back(v);
        }
      }
      offsets.push_back(static_cast<Index>(cols.size()));
    }
    return SparseMatrix(dense.rows(), dense.cols(), std::move(offsets), std::move(cols),
                        std::move(vals));
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index nnz() const { return static_cast<Index>(values_.size()); }
  const std::vector<Index>& row_offsets() const { return row_offsets_; }
  const std::vector<Index>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }

  Index row_begin(Index r) const { return row_offsets_[static_cast<std::size_t>(r)]; }
  Index row_end(Index r) const { return row_offsets_[static_cast<std::size_t>(r) + 1]; }
  Index col(Index e) const { return col_indices_[static_cast<std::size_t>(e)]; }
  double value(Index e) const { return values_[static_cast<std::size_t>(e)]; }

  // Same sparsity pattern, new values.
  SparseMatrix with_values(std::vector<double> values) const {
    if (values.size() != values_.size()) {
      throw ShapeError("SparseMatrix::with_values: expected " + std::to_string(values_.size()) +
                       " values, got " + std::to_string(values.size()));
    }
    return SparseMatrix(rows_, cols_, row_offsets_, col_indices_, std::move(values));
  }

  Matrix to_dense() const {
    Matrix out = Matrix::Zero(rows_, cols_);
    for (Index i = 0; i < rows_; ++i) {
      for (Index e = row_begin(i); e < row_end(i); ++e) out(i, col(e)) += value(e);
    }
    return out;
  }

  SparseMatrix transpose() const {
    std::vector<Triplet> t;
    t.reserve(values_.size());
    for (Index i = 0; i < rows_; ++i) {
      for (Index e = row_begin(i); e < row_end(i); ++e) t.push_back({col(e), i, value(e)});
    }
    return from_triplets(cols_, rows_, std::move(t));
  }

  // this * dense
  Matrix multiply(const Matrix& dense) const {
    if (dense.rows() != cols_) {
      throw ShapeError("spmm: shape mismatch " + shape_string(rows_, cols_) + " * " +
                       shape_string(dense));
    }
    Matrix out = Matrix::Zero(rows_, dense.cols());
    for (Index i = 0; i < rows_; ++i) {
      auto out_row = out.row(i);
      for (Index e = row_begin(i); e < row_end(i); ++e) out_row.noalias() += value(e) * dense.row(col(e));
    }
    return out;
  }

  // transpose(this) * dense, without materializing the transpose
  Matrix transpose_multiply(const Matrix& dense) const {
    if (dense.rows() != rows_) {
      throw ShapeError("spmm^T: shape mismatch " + shape_string(cols_, rows_) + " * " +
                       shape_string(dense));
    }
    Matrix out = Matrix::Zero(cols_, dense.cols());
    for (Index i = 0; i < rows_; ++i) {
      const auto in_row = dense.row(i);
      for (Index e = row_begin(i); e < row_end(i); ++e) out.row(col(e)).noalias() += value(e) * in_row;
    }
    return out;
  }

  void validate() const {
    if (rows_ < 0 || cols_ < 0) throw ShapeError("SparseMatrix: negative dimensions");
    if (row_offsets_.size() != static_cast<std::size_t>(rows_) + 1) {
      throw ShapeError("SparseMatrix: row_offsets has " + std::to_string(row_offsets_.size()) +
                       " entries for " + std::to_string(rows_) + " rows");
    }
    if (row_offsets_.front() != 0) throw ShapeError("SparseMatrix: row_offsets must start at 0");
    for (std::size_t i = 1; i < row_offsets_.size(); ++i) {
      if (row_offsets_[i] < row_offsets_[i - 1]) {
        throw ShapeError("SparseMatrix: row_offsets decreasing at row " + std::to_string(i - 1));
      }
    }
    if (static_cast<std::size_t>(row_offsets_.back()) != col_indices_.size() ||
        col_indices_.size() != values_.size()) {
      throw ShapeError("SparseMatrix: last row offset " + std::to_string(row_offsets_.back()) +
                       " does not match nnz " + std::to_string(values_.size()));
    }
    for (Index c : col_indices_) {
      if (c < 0 || c >= cols_) {
        throw std::out_of_range("SparseMatrix: column index " + std::to_string(c) +
                                " outside [0," + std::to_string(cols_) + ")");
      }
    }
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_offsets_;
  std::vector<Index> col_indices_;
  std::vector<double> values_;
};

}  // namespace nac
