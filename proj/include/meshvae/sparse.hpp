#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshvae {

struct Triplet {
  int row;
  int col;
  double value;
};

/// Coordinate-format sparse matrix with a CSR index for products.
/// Entries are unique, sorted by (row, col); explicit zeros are dropped.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  SparseMatrix(int rows, int cols, std::vector<Triplet> entries)
      : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("SparseMatrix: negative size");
    for (const Triplet& t : entries) {
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
        throw std::invalid_argument("SparseMatrix: index out of range (" +
                                    std::to_string(t.row) + "," + std::to_string(t.col) + ")");
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    entries_.reserve(entries.size());
    for (const Triplet& t : entries) {
      if (!entries_.empty() && entries_.back().row == t.row && entries_.back().col == t.col) {
        entries_.back().value += t.value;
      } else {
        entries_.push_back(t);
      }
    }
    entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                  [](const Triplet& t) { return t.value == 0.0; }),
                   entries_.end());
    build_row_index();
  }

  static SparseMatrix identity(int n) {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return SparseMatrix(n, n, std::move(t));
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t nnz() const { return entries_.size(); }
  const std::vector<Triplet>& entries() const { return entries_; }

  /// this * x
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    if (x.rows() != cols_)
      throw std::invalid_argument("SparseMatrix::apply: inner dimension mismatch");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows_, x.cols());
    for (const Triplet& t : entries_) out.row(t.row) += t.value * x.row(t.col);
    return out;
  }

  /// this^T * x
  Eigen::MatrixXd apply_transpose(const Eigen::MatrixXd& x) const {
    if (x.rows() != rows_)
      throw std::invalid_argument("SparseMatrix::apply_transpose: inner dimension mismatch");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(cols_, x.cols());
    for (const Triplet& t : entries_) out.row(t.col) += t.value * x.row(t.row);
    return out;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows_, cols_);
    for (const Triplet& t : entries_) d(t.row, t.col) = t.value;
    return d;
  }

  SparseMatrix transposed() const {
    std::vector<Triplet> t;
    t.reserve(entries_.size());
    for (const Triplet& e : entries_) t.push_back({e.col, e.row, e.value});
    return SparseMatrix(cols_, rows_, std::move(t));
  }

  double coeff(int r, int c) const {
    if (r < 0 || r >= rows_ || c < 0 || c >= cols_)
      throw std::invalid_argument("SparseMatrix::coeff: index out of range");
    auto lo = entries_.begin() + row_ptr_[r];
    auto hi = entries_.begin() + row_ptr_[r + 1];
    auto it = std::lower_bound(lo, hi, c,
                               [](const Triplet& t, int col) { return t.col < col; });
    return (it != hi && it->col == c) ? it->value : 0.0;
  }

  bool is_symmetric(double tol = 0.0) const {
    if (rows_ != cols_) return false;
    for (const Triplet& t : entries_) {
      if (std::abs(t.value - coeff(t.col, t.row)) > tol) return false;
    }
    return true;
  }

  /// Entries of one row, as a span into the sorted entry list.
  std::pair<const Triplet*, const Triplet*> row_span(int r) const {
    return {entries_.data() + row_ptr_[r], entries_.data() + row_ptr_[r + 1]};
  }

 private:
  void build_row_index() {
    row_ptr_.assign(static_cast<std::size_t>(rows_) + 1, 0);
    for (const Triplet& t : entries_) ++row_ptr_[static_cast<std::size_t>(t.row) + 1];
    for (int r = 0; r < rows_; ++r) row_ptr_[r + 1] += row_ptr_[r];
  }

  int rows_ = 0, cols_ = 0;
  std::vector<Triplet> entries_;
  std::vector<std::size_t> row_ptr_;
};

}  // namespace meshvae
