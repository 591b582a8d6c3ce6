#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "lte4g/error.hpp"

namespace lte4g {

/// Row-major dense matrix of doubles.
class DenseMat {
 public:
  DenseMat() = default;
  DenseMat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMat(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    LTE4G_REQUIRE(data_.size() == rows_ * cols_, ShapeError,
                  "DenseMat: data length " + std::to_string(data_.size()) + " != " +
                      std::to_string(rows_) + "x" + std::to_string(cols_));
  }

  static DenseMat from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    DenseMat m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      LTE4G_REQUIRE(row.size() == c, ShapeError, "DenseMat::from_rows: ragged rows");
      std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
      ++i;
    }
    return m;
  }

  static DenseMat identity(std::size_t n) {
    DenseMat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  bool same_shape(const DenseMat& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  DenseMat& operator+=(const DenseMat& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  void require_same_shape(const DenseMat& o, const char* what) const {
    LTE4G_REQUIRE(same_shape(o), ShapeError,
                  std::string(what) + ": shape " + shape_str() + " vs " + o.shape_str());
  }

  friend bool operator==(const DenseMat&, const DenseMat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double max_abs_diff(const DenseMat& a, const DenseMat& b) {
  a.require_same_shape(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

/// Rows of `m` at the given indices, in order.
inline DenseMat gather_rows(const DenseMat& m, std::span<const std::size_t> idx) {
  DenseMat out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    LTE4G_REQUIRE(idx[r] < m.rows(), ContractError, "gather_rows: row index out of range");
    auto src = m.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace lte4g
