#include "ntd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace ntd::linalg {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
        << b.cols();
    throw PreconditionError(msg.str());
  }
}

void require_square(const Matrix& a, const char* op) {
  if (!a.square() || a.rows() == 0) {
    throw PreconditionError(std::string(op) + ": matrix must be square and non-empty");
  }
}

double max_abs_entry(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw PreconditionError("Matrix: data length does not match rows*cols");
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw PreconditionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::column(std::span<const double> v) {
  return Matrix(v.size(), 1, Vector(v.begin(), v.end()));
}

Vector Matrix::col(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator-(Matrix a) { return a *= -1.0; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw PreconditionError("operator*: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Vector operator*(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw PreconditionError("operator*: vector length differs");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    y[i] = std::inner_product(r.begin(), r.end(), x.begin(), 0.0);
  }
  return y;
}

Matrix power(const Matrix& a, unsigned n) {
  require_square(a, "power");
  Matrix result = Matrix::identity(a.rows());
  Matrix base = a;
  while (n > 0) {
    if (n & 1u) result = result * base;
    n >>= 1u;
    if (n > 0) base = base * base;
  }
  return result;
}

Vector add(std::span<const double> a, std::span<const double> b) {
  Vector out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Vector subtract(std::span<const double> a, std::span<const double> b) {
  Vector out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Vector scale(std::span<const double> a, double s) {
  Vector out(a.begin(), a.end());
  for (double& v : out) v *= s;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm_inf(const Matrix& a) {
  double best = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (double v : a.row(r)) s += std::abs(v);
    best = std::max(best, s);
  }
  return best;
}

double norm_inf(std::span<const double> x) {
  double best = 0.0;
  for (double v : x) best = std::max(best, std::abs(v));
  return best;
}

double weighted_norm(std::span<const double> x, std::span<const double> d) {
  if (x.size() != d.size()) throw PreconditionError("weighted_norm: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += d[i] * x[i] * x[i];
  return std::sqrt(s);
}

double asymmetry(const Matrix& a) { return norm_inf(a - a.transpose()); }

// ---------------------------------------------------------------- LU

LuDecomposition::LuDecomposition(const Matrix& a) : lu_(a), perm_(a.rows()) {
  require_square(a, "LuDecomposition");
  const std::size_t n = a.rows();
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  const double threshold = 1e-13 * max_abs_entry(a);
  if (max_abs_entry(a) == 0.0) {
    singular_ = true;
    return;
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu_(i, k)) > std::abs(lu_(p, k))) p = i;
    if (std::abs(lu_(p, k)) <= threshold) {
      singular_ = true;
      return;
    }
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu_(p, j), lu_(k, j));
      std::swap(perm_[p], perm_[k]);
      sign_ = -sign_;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu_(i, k) / lu_(k, k);
      lu_(i, k) = f;
      for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= f * lu_(k, j);
    }
  }
}

double LuDecomposition::determinant() const {
  if (singular_) return 0.0;
  double det = sign_;
  for (std::size_t i = 0; i < lu_.rows(); ++i) det *= lu_(i, i);
  return det;
}

Vector LuDecomposition::solve(std::span<const double> b) const {
  if (singular_) throw SingularMatrixError("solve: matrix is singular to working precision");
  const std::size_t n = lu_.rows();
  if (b.size() != n) throw PreconditionError("solve: right-hand side length mismatch");
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[perm_[i]];
    for (std::size_t j = 0; j < i; ++j) s -= lu_(i, j) * x[j];
    x[i] = s;
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= lu_(i, j) * x[j];
    x[i] = s / lu_(i, i);
  }
  return x;
}

Matrix LuDecomposition::solve(const Matrix& b) const {
  Matrix x(b.rows(), b.cols());
  for (std::size_t c = 0; c < b.cols(); ++c) {
    const Vector xc = solve(b.col(c));
    for (std::size_t r = 0; r < b.rows(); ++r) x(r, c) = xc[r];
  }
  return x;
}

Matrix LuDecomposition::inverse() const { return solve(Matrix::identity(lu_.rows())); }

Vector solve(const Matrix& a, std::span<const double> b) { return LuDecomposition(a).solve(b); }
Matrix solve(const Matrix& a, const Matrix& b) { return LuDecomposition(a).solve(b); }
Matrix inverse(const Matrix& a) { return LuDecomposition(a).inverse(); }
double determinant(const Matrix& a) { return LuDecomposition(a).determinant(); }

// ---------------------------------------------------------------- eigen

namespace {

// Householder reduction to upper Hessenberg form, in place.
void reduce_to_hessenberg(Matrix& h) {
  const std::size_t n = h.rows();
  if (n < 3) return;
  Vector v(n);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double alpha = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) alpha += h(i, k) * h(i, k);
    alpha = std::sqrt(alpha);
    if (alpha == 0.0) continue;
    if (h(k + 1, k) > 0) alpha = -alpha;
    std::fill(v.begin(), v.end(), 0.0);
    v[k + 1] = h(k + 1, k) - alpha;
    for (std::size_t i = k + 2; i < n; ++i) v[i] = h(i, k);
    double vnorm2 = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0.0) continue;
    // H <- (I - 2vv^T/|v|^2) H (I - 2vv^T/|v|^2)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) s += v[i] * h(i, j);
      s = 2.0 * s / vnorm2;
      for (std::size_t i = k + 1; i < n; ++i) h(i, j) -= s * v[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) s += h(i, j) * v[j];
      s = 2.0 * s / vnorm2;
      for (std::size_t j = k + 1; j < n; ++j) h(i, j) -= s * v[j];
    }
    for (std::size_t i = k + 2; i < n; ++i) h(i, k) = 0.0;
  }
}

double sign_of(double magnitude, double s) { return s >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude); }

constexpr int kMaxSweeps = 10000;
constexpr int kMaxItsPerEigenvalue = 60;

// Francis double-shift QR on an upper Hessenberg matrix (EISPACK hqr
// structure). Uses 1-based indexing internally to stay close to the
// classical formulation.
void hessenberg_qr(Matrix& hm, Vector& wr, Vector& wi) {
  const int n = static_cast<int>(hm.rows());
  auto a = [&hm](int i, int j) -> double& { return hm(i - 1, j - 1); };
  wr.assign(n, 0.0);
  wi.assign(n, 0.0);

  double anorm = 0.0;
  for (int i = 1; i <= n; ++i)
    for (int j = std::max(i - 1, 1); j <= n; ++j) anorm += std::abs(a(i, j));

  int nn = n;
  int total_sweeps = 0;
  double t = 0.0;
  double p = 0, q = 0, r = 0, s = 0, w = 0, x = 0, y = 0, z = 0;
  while (nn >= 1) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l >= 2; --l) {
        s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) + s == s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      x = a(nn, nn);
      if (l == nn) {
        wr[nn - 1] = x + t;
        wi[nn - 1] = 0.0;
        --nn;
      } else {
        y = a(nn - 1, nn - 1);
        w = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          p = 0.5 * (y - x);
          q = p * p + w;
          z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            wr[nn - 2] = wr[nn - 1] = x + z;
            if (z != 0.0) wr[nn - 1] = x - w / z;
            wi[nn - 2] = wi[nn - 1] = 0.0;
          } else {
            wr[nn - 2] = wr[nn - 1] = x + p;
            wi[nn - 2] = -z;
            wi[nn - 1] = z;
          }
          nn -= 2;
        } else {
          if (its >= kMaxItsPerEigenvalue || total_sweeps >= kMaxSweeps) {
            throw ConvergenceError("eig_general: QR iteration did not converge");
          }
          if (its > 0 && its % 10 == 0) {
            // exceptional shift
            t += x;
            for (int i = 1; i <= nn; ++i) a(i, i) -= x;
            s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            w = -0.4375 * s * s;
          }
          ++its;
          ++total_sweeps;
          int m = nn - 2;
          for (; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            s = y - z;
            p = (r * s - w) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) +
                                            std::abs(a(m + 1, m + 1)));
            if (u + v == v) break;
          }
          for (int i = m + 2; i <= nn; ++i) {
            a(i, i - 2) = 0.0;
            if (i != m + 2) a(i, i - 3) = 0.0;
          }
          for (int k = m; k <= nn - 1; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k != nn - 1) r = a(k + 2, k - 1);
              x = std::abs(p) + std::abs(q) + std::abs(r);
              if (x != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            s = sign_of(std::sqrt(p * p + q * q + r * r), p);
            if (s != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k != nn - 1) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k != nn - 1) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (nn >= 1 && l < nn - 1);
  }
}

}  // namespace

Spectrum eig_general(const Matrix& a) {
  require_square(a, "eig_general");
  for (double v : a.data())
    if (!std::isfinite(v)) throw PreconditionError("eig_general: non-finite entry");
  Matrix h = a;
  reduce_to_hessenberg(h);
  Vector wr;
  Vector wi;
  hessenberg_qr(h, wr, wi);

  Spectrum spec;
  spec.eigenvalues.reserve(wr.size());
  spec.spectral_radius = 0.0;
  spec.max_real_part = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < wr.size(); ++i) {
    spec.eigenvalues.emplace_back(wr[i], wi[i]);
    spec.spectral_radius = std::max(spec.spectral_radius, std::hypot(wr[i], wi[i]));
    spec.max_real_part = std::max(spec.max_real_part, wr[i]);
  }
  return spec;
}

Vector eig_symmetric(const Matrix& input) {
  require_square(input, "eig_symmetric");
  const double scale_ref = norm_inf(input);
  if (asymmetry(input) > 1e-10 * std::max(scale_ref, 1e-300)) {
    throw PreconditionError("eig_symmetric: matrix is not symmetric");
  }
  const std::size_t n = input.rows();
  Matrix a = 0.5 * (input + input.transpose());

  double frob = 0.0;
  for (double v : a.data()) frob += v * v;
  frob = std::sqrt(frob);
  const double target = 1e-12 * frob;

  auto off_norm = [&a, n] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < 100 && off_norm() > target; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }

  Vector eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

double lambda_min(const Matrix& sym) { return eig_symmetric(sym).front(); }
double lambda_max(const Matrix& sym) { return eig_symmetric(sym).back(); }

Matrix lyapunov_solve(const Matrix& b) {
  require_square(b, "lyapunov_solve");
  const Spectrum spec = eig_general(b);
  if (!is_hurwitz(spec)) {
    std::ostringstream msg;
    msg << "lyapunov_solve: matrix is not Hurwitz (max real part " << spec.max_real_part << ")";
    throw PreconditionError(msg.str());
  }
  const std::size_t m = b.rows();
  const Matrix bt = b.transpose();
  // Column-major vec: vec(B^T P) = (I (x) B^T) vec(P), vec(P B) = (B^T (x) I) vec(P).
  Matrix k(m * m, m * m);
  for (std::size_t blk_r = 0; blk_r < m; ++blk_r) {
    for (std::size_t blk_c = 0; blk_c < m; ++blk_c) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          double v = 0.0;
          if (blk_r == blk_c) v += bt(i, j);
          if (i == j) v += bt(blk_r, blk_c);
          k(blk_r * m + i, blk_c * m + j) = v;
        }
      }
    }
  }
  Vector rhs(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) rhs[i * m + i] = -1.0;
  const Vector vec_p = solve(k, rhs);

  Matrix p(m, m);
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t r = 0; r < m; ++r) p(r, c) = vec_p[c * m + r];
  return 0.5 * (p + p.transpose());
}

}  // namespace ntd::linalg
