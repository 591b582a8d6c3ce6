#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lte4g/dense.hpp"
#include "lte4g/error.hpp"

namespace lte4g {

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Compressed sparse row matrix. Column indices are strictly increasing within a row.
class SparseMat {
 public:
  SparseMat() : row_ptr_(1, 0) {}
  SparseMat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  /// Takes ownership of raw CSR arrays after validating them.
  SparseMat(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
            std::vector<std::size_t> col_index, std::vector<double> values)
      : rows_(rows),
        cols_(cols),
        row_ptr_(std::move(row_ptr)),
        col_index_(std::move(col_index)),
        values_(std::move(values)) {
    validate();
  }

  /// Builds a CSR matrix from unordered triplets; duplicate coordinates are summed.
  static SparseMat from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
    for (const auto& t : entries)
      LTE4G_REQUIRE(t.row < rows && t.col < cols, ContractError,
                    "SparseMat::from_triplets: coordinate out of range");
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> ptr(rows + 1, 0);
    std::vector<std::size_t> cidx;
    std::vector<double> vals;
    cidx.reserve(entries.size());
    vals.reserve(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto& t = entries[k];
      if (k > 0 && entries[k - 1].row == t.row && entries[k - 1].col == t.col) {
        vals.back() += t.value;
        continue;
      }
      cidx.push_back(t.col);
      vals.push_back(t.value);
      ++ptr[t.row + 1];
    }
    for (std::size_t i = 0; i < rows; ++i) ptr[i + 1] += ptr[i];
    return SparseMat(rows, cols, std::move(ptr), std::move(cidx), std::move(vals));
  }

  static SparseMat from_dense(const DenseMat& d) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j)
        if (d(i, j) != 0.0) t.push_back({i, j, d(i, j)});
    return from_triplets(d.rows(), d.cols(), std::move(t));
  }

  static SparseMat identity(std::size_t n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, n, std::move(t));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const std::size_t> col_index() const noexcept { return col_index_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const std::size_t> row_cols(std::size_t i) const noexcept {
    return {col_index_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  std::span<const double> row_values(std::size_t i) const noexcept {
    return {values_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }

  /// Entry lookup by binary search within the row; 0 for structural zeros.
  double at(std::size_t i, std::size_t j) const {
    auto cols = row_cols(i);
    auto it = std::lower_bound(cols.begin(), cols.end(), j);
    if (it == cols.end() || *it != j) return 0.0;
    return row_values(i)[static_cast<std::size_t>(it - cols.begin())];
  }

  DenseMat to_dense() const {
    DenseMat d(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i) {
      auto c = row_cols(i);
      auto v = row_values(i);
      for (std::size_t k = 0; k < c.size(); ++k) d(i, c[k]) = v[k];
    }
    return d;
  }

  bool is_symmetric() const {
    if (rows_ != cols_) return false;
    for (std::size_t i = 0; i < rows_; ++i) {
      auto c = row_cols(i);
      auto v = row_values(i);
      for (std::size_t k = 0; k < c.size(); ++k)
        if (at(c[k], i) != v[k]) return false;
    }
    return true;
  }

  friend bool operator==(const SparseMat&, const SparseMat&) = default;

 private:
  void validate() const {
    LTE4G_REQUIRE(row_ptr_.size() == rows_ + 1, ContractError, "CSR: row_ptr length != rows+1");
    LTE4G_REQUIRE(row_ptr_.front() == 0, ContractError, "CSR: row_ptr[0] != 0");
    LTE4G_REQUIRE(col_index_.size() == values_.size(), ContractError,
                  "CSR: col_index/values length mismatch");
    LTE4G_REQUIRE(row_ptr_.back() == values_.size(), ContractError, "CSR: row_ptr[rows] != nnz");
    for (std::size_t i = 0; i < rows_; ++i) {
      LTE4G_REQUIRE(row_ptr_[i] <= row_ptr_[i + 1], ContractError, "CSR: row_ptr not monotone");
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        LTE4G_REQUIRE(col_index_[k] < cols_, ContractError, "CSR: column index out of range");
        if (k > row_ptr_[i])
          LTE4G_REQUIRE(col_index_[k - 1] < col_index_[k], ContractError,
                        "CSR: column indices not strictly increasing in row " + std::to_string(i));
      }
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> col_index_;
  std::vector<double> values_;
};

}  // namespace lte4g
