#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace kausal {

// Dense row-major matrix of doubles. Snapshot matrices keep one snapshot
// per column, so column index is the sample index.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::vector<double> col(std::size_t j) const;
  void set_col(std::size_t j, std::span<const double> v);

  Matrix transposed() const;
  bool all_finite() const;
  double frobenius_norm() const;

  Matrix& operator*=(double s);
  Matrix& operator-=(const Matrix& other);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_abt(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_atb(const Matrix& a, const Matrix& b);
// G = A * A^T, computed on the lower triangle and mirrored.
Matrix gram(const Matrix& a);
// y = A * x
std::vector<double> matvec(const Matrix& a, std::span<const double> x);

struct SvdResult {
  Matrix u;                            // m x r, orthonormal columns
  std::vector<double> singular_values; // length r, non-increasing
  Matrix vt;                           // r x n, orthonormal rows
};

// One-sided Jacobi SVD (economy size, r = min(m, n)). Throws on
// non-convergence after the sweep cap.
SvdResult svd(const Matrix& a);

// Moore-Penrose pseudo-inverse via svd(). Singular values below
// rel_tol * sigma_max are treated as zero.
Matrix pinv(const Matrix& a, double rel_tol = 1e-12);

struct SymEig {
  std::vector<double> values; // descending
  Matrix vectors;             // columns are eigenvectors
};

// Eigendecomposition of a symmetric matrix: Householder tridiagonalization
// followed by implicit-shift QL. Cheaper than Jacobi for the repeated
// normal-equation solves in the Koopman fits.
SymEig sym_eig(const Matrix& a);

struct Eig2x2 {
  std::complex<double> first;  // larger real part
  std::complex<double> second;
};

// Closed-form eigenvalues of a 2x2 matrix; complex branch when the
// discriminant is negative. Complex pairs come conjugate, +Im first.
Eig2x2 eig2x2(const Matrix& a);

}  // namespace kausal
