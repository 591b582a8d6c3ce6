#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "lte4g/dense.hpp"
#include "lte4g/sparse.hpp"

namespace lte4g {

/// Worker count for row-parallel kernels: hardware concurrency, capped by LTE4G_THREADS.
inline std::size_t kernel_threads() {
  static const std::size_t n = [] {
    std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("LTE4G_THREADS")) {
      const long cap = std::strtol(env, nullptr, 10);
      if (cap >= 1) hw = std::min<std::size_t>(hw, static_cast<std::size_t>(cap));
    }
    return hw;
  }();
  return n;
}

/// Runs body(begin, end) over disjoint row ranges. Each output row is owned by one worker,
/// so results do not depend on the thread count.
template <typename Body>
void parallel_rows(std::size_t rows, std::size_t work_per_row, Body&& body) {
  const std::size_t threads = kernel_threads();
  if (threads <= 1 || rows * work_per_row < (1u << 16) || rows < 2 * threads) {
    body(std::size_t{0}, rows);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (rows + threads - 1) / threads;
  for (std::size_t b = 0; b < rows; b += chunk)
    pool.emplace_back([&body, b, e = std::min(rows, b + chunk)] { body(b, e); });
}

/// C = A * B
inline DenseMat matmul(const DenseMat& a, const DenseMat& b) {
  LTE4G_REQUIRE(a.cols() == b.rows(), ShapeError,
                "matmul: " + a.shape_str() + " * " + b.shape_str());
  DenseMat c(a.rows(), b.cols());
  const std::size_t k = a.cols(), n = b.cols();
  parallel_rows(a.rows(), k * n, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      double* ci = c.row(i).data();
      const double* ai = a.row(i).data();
      for (std::size_t t = 0; t < k; ++t) {
        const double av = ai[t];
        if (av == 0.0) continue;
        const double* bt = b.row(t).data();
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
      }
    }
  });
  return c;
}

/// C = A^T * B
inline DenseMat matmul_tn(const DenseMat& a, const DenseMat& b) {
  LTE4G_REQUIRE(a.rows() == b.rows(), ShapeError,
                "matmul_tn: " + a.shape_str() + "^T * " + b.shape_str());
  DenseMat c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t t = 0; t < a.rows(); ++t) {
    const double* at = a.row(t).data();
    const double* bt = b.row(t).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = at[i];
      if (av == 0.0) continue;
      double* ci = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
  return c;
}

/// C = A * B^T
inline DenseMat matmul_nt(const DenseMat& a, const DenseMat& b) {
  LTE4G_REQUIRE(a.cols() == b.cols(), ShapeError,
                "matmul_nt: " + a.shape_str() + " * " + b.shape_str() + "^T");
  DenseMat c(a.rows(), b.rows());
  const std::size_t k = a.cols();
  parallel_rows(a.rows(), k * b.rows(), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const double* ai = a.row(i).data();
      for (std::size_t j = 0; j < b.rows(); ++j) {
        const double* bj = b.row(j).data();
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s += ai[t] * bj[t];
        c(i, j) = s;
      }
    }
  });
  return c;
}

/// C = S * D
inline DenseMat spmm(const SparseMat& s, const DenseMat& d) {
  LTE4G_REQUIRE(s.cols() == d.rows(), ShapeError,
                "spmm: sparse " + std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                    " * " + d.shape_str());
  DenseMat c(s.rows(), d.cols());
  const std::size_t n = d.cols();
  const std::size_t avg = s.rows() == 0 ? 0 : s.nnz() / s.rows() + 1;
  parallel_rows(s.rows(), avg * n, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      auto cols = s.row_cols(i);
      auto vals = s.row_values(i);
      double* ci = c.row(i).data();
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const double v = vals[k];
        const double* dr = d.row(cols[k]).data();
        for (std::size_t j = 0; j < n; ++j) ci[j] += v * dr[j];
      }
    }
  });
  return c;
}

/// C = S^T * D, scattering row contributions; sequential so accumulation order is fixed.
inline DenseMat spmm_tn(const SparseMat& s, const DenseMat& d) {
  LTE4G_REQUIRE(s.rows() == d.rows(), ShapeError, "spmm_tn: row mismatch");
  DenseMat c(s.cols(), d.cols());
  const std::size_t n = d.cols();
  for (std::size_t i = 0; i < s.rows(); ++i) {
    auto cols = s.row_cols(i);
    auto vals = s.row_values(i);
    const double* di = d.row(i).data();
    for (std::size_t k = 0; k < cols.size(); ++k) {
      double* cr = c.row(cols[k]).data();
      const double v = vals[k];
      for (std::size_t j = 0; j < n; ++j) cr[j] += v * di[j];
    }
  }
  return c;
}

}  // namespace lte4g
