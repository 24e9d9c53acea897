#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace osdr {

/// Dense row-major matrix of 64-bit floats. Plain value type; every
/// exposed operation keeps entries finite.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::span<const double> v);
  static Matrix col_vector(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> flat() const { return data_; }
  std::span<double> flat() { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

  /// True when every entry is finite (no NaN/Inf).
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Shape-checked arithmetic. All throw DimensionError on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double k);

/// Row-wise softmax with per-row max subtraction. Rows sum to 1 within 1e-12.
Matrix softmax_rows(const Matrix& m);

/// dot(u,v) / (|u||v|); 0 when either norm is below 1e-12.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Euclidean norm of u - v.
double l2_distance(std::span<const double> u, std::span<const double> v);

double dot(std::span<const double> u, std::span<const double> v);
double norm2(std::span<const double> u);

/// Throws Error if any entry of m is NaN or infinite.
void ensure_finite(const Matrix& m, const char* where);

}  // namespace osdr
