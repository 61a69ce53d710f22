#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "digitwise/core/error.hpp"

namespace digitwise::learner {

/// Dense column-major feature matrix; missing entries hold kMissing.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, kMissing) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[c * rows_ + r]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[c * rows_ + r]; }

  std::span<const double> column(std::size_t c) const { return {data_.data() + c * rows_, rows_}; }
  std::span<double> column(std::size_t c) { return {data_.data() + c * rows_, rows_}; }

  std::vector<double> row(std::size_t r) const {
    std::vector<double> out(cols_);
    for (std::size_t c = 0; c < cols_; ++c) out[c] = (*this)(r, c);
    return out;
  }

  /// Subset of rows, in the given order.
  Matrix select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols_);
    for (std::size_t c = 0; c < cols_; ++c) {
      const double* src = data_.data() + c * rows_;
      double* dst = out.data_.data() + c * idx.size();
      for (std::size_t i = 0; i < idx.size(); ++i) dst[i] = src[idx[i]];
    }
    return out;
  }

  Matrix select_cols(std::span<const std::size_t> idx) const {
    Matrix out(rows_, idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      auto src = column(idx[j]);
      auto dst = out.column(j);
      std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != m.cols_) throw SchemaError("Matrix::from_rows: ragged rows");
      for (std::size_t c = 0; c < m.cols_; ++c) m(r, c) = rows[r][c];
    }
    return m;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Named feature table with a regression target.
struct Dataset {
  std::vector<std::string> feature_names;
  Matrix x;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out{feature_names, x.select_rows(idx), {}};
    out.y.reserve(idx.size());
    for (auto i : idx) out.y.push_back(y[i]);
    return out;
  }
};

}  // namespace digitwise::learner
