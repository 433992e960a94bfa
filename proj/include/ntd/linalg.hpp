#pragma once

// Dense kernels for the small matrices that show up in policy evaluation
// (|S| up to ~100, feature dimension up to ~20). Row-major storage.

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "ntd/error.hpp"

namespace ntd::linalg {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix column(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  Vector col(std::size_t c) const;

  std::span<const double> data() const { return data_; }

  Matrix transpose() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator-(Matrix a);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, std::span<const double> x);

/// Matrix power by repeated squaring; power(a, 0) is the identity.
Matrix power(const Matrix& a, unsigned n);

// Vector helpers.
Vector add(std::span<const double> a, std::span<const double> b);
Vector subtract(std::span<const double> a, std::span<const double> b);
Vector scale(std::span<const double> a, double s);
double dot(std::span<const double> a, std::span<const double> b);

/// Largest absolute row sum.
double norm_inf(const Matrix& a);
/// Largest absolute entry.
double norm_inf(std::span<const double> x);
/// sqrt(sum_s d[s] x[s]^2).
double weighted_norm(std::span<const double> x, std::span<const double> d);
/// Symmetric-part-free asymmetry measure ||A - A^T||_inf.
double asymmetry(const Matrix& a);

/// LU factorisation with partial pivoting. A pivot smaller than
/// 1e-13 * max|a_ij| marks the matrix as singular.
class LuDecomposition {
 public:
  explicit LuDecomposition(const Matrix& a);

  bool singular() const { return singular_; }
  double determinant() const;
  /// Throws SingularMatrixError when singular().
  Vector solve(std::span<const double> b) const;
  Matrix solve(const Matrix& b) const;
  Matrix inverse() const;

 private:
  Matrix lu_;
  std::vector<std::size_t> perm_;
  int sign_ = 1;
  bool singular_ = false;
};

Vector solve(const Matrix& a, std::span<const double> b);
Matrix solve(const Matrix& a, const Matrix& b);
Matrix inverse(const Matrix& a);
double determinant(const Matrix& a);

struct Spectrum {
  std::vector<std::complex<double>> eigenvalues;
  double spectral_radius = 0.0;
  double max_real_part = 0.0;
};

/// All eigenvalues of a general square matrix: Householder reduction to
/// upper Hessenberg form followed by Francis double-shift QR. Throws
/// ConvergenceError when the sweep budget is exhausted.
Spectrum eig_general(const Matrix& a);

/// Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
/// The input is symmetrised first; inputs whose asymmetry exceeds
/// 1e-10 * ||A||_inf are rejected with PreconditionError.
Vector eig_symmetric(const Matrix& a);

/// Solves B^T P + P B = -I for symmetric P through the Kronecker form
/// (I (x) B^T + B^T (x) I) vec(P) = -vec(I). B must be Hurwitz.
Matrix lyapunov_solve(const Matrix& b);

/// Smallest / largest eigenvalue of a symmetric matrix.
double lambda_min(const Matrix& sym);
double lambda_max(const Matrix& sym);

/// Schur / Hurwitz classification thresholds.
inline constexpr double kSchurMargin = 1e-9;
inline constexpr double kHurwitzMargin = 1e-9;

inline bool is_schur(const Spectrum& s) { return s.spectral_radius < 1.0 - kSchurMargin; }
inline bool is_hurwitz(const Spectrum& s) { return s.max_real_part < -kHurwitzMargin; }

}  // namespace ntd::linalg
