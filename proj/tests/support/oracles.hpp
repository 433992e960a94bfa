#pragma once

// Test-only reference computations. Everything here is written against plain
// nested vectors so that it shares no code with the library under test.

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ntd/mdp.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline Dense dense(const ntd::Matrix& m) {
  Dense out(m.rows(), Vec(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline Dense eye(std::size_t n) {
  Dense out(n, Vec(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) out[i][i] = 1.0;
  return out;
}

inline Dense mul(const Dense& a, const Dense& b) {
  Dense out(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

inline Vec mul(const Dense& a, const Vec& x) {
  Vec out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < x.size(); ++k) out[i] += a[i][k] * x[k];
  return out;
}

inline Dense transpose(const Dense& a) {
  Dense out(a[0].size(), Vec(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) out[j][i] = a[i][j];
  return out;
}

inline Dense diag(const Vec& d) {
  Dense out(d.size(), Vec(d.size(), 0.0));
  for (std::size_t i = 0; i < d.size(); ++i) out[i][i] = d[i];
  return out;
}

inline Dense lin(double a, const Dense& x, double b, const Dense& y) {
  Dense out = x;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[0].size(); ++j) out[i][j] = a * x[i][j] + b * y[i][j];
  return out;
}

inline Dense mpow(const Dense& a, int n) {
  Dense out = eye(a.size());
  for (int i = 0; i < n; ++i) out = mul(out, a);
  return out;
}

/// Gauss-Jordan elimination with full row scan for the pivot.
inline Vec gauss_solve(Dense a, Vec b) {
  const std::size_t n = a.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    if (std::abs(a[p][c]) < 1e-300) throw std::runtime_error("oracle: singular");
    std::swap(a[p], a[c]);
    std::swap(b[p], b[c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t i = 0; i < n; ++i) b[i] /= a[i][i];
  return b;
}

inline Dense gauss_inverse(const Dense& a) {
  const std::size_t n = a.size();
  Dense cols;
  for (std::size_t j = 0; j < n; ++j) {
    Vec e(n, 0.0);
    e[j] = 1.0;
    cols.push_back(gauss_solve(a, e));
  }
  return transpose(cols);
}

inline double max_abs_diff(const Dense& a, const ntd::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) m = std::max(m, std::abs(a[i][j] - b(i, j)));
  return m;
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double row_sum_norm(const Dense& a) {
  double m = 0.0;
  for (const auto& row : a) {
    double s = 0.0;
    for (double v : row) s += std::abs(v);
    m = std::max(m, s);
  }
  return m;
}

/// Eigenvalues of a 2x2 matrix from the characteristic polynomial.
inline std::pair<std::complex<double>, std::complex<double>> eig2(double a, double b, double c, double d) {
  const double tr = a + d;
  const double det = a * d - b * c;
  const std::complex<double> disc = std::sqrt(std::complex<double>(tr * tr / 4.0 - det));
  return {tr / 2.0 + disc, tr / 2.0 - disc};
}

/// Spectral radius by repeated squaring and normalisation: rho = lim ||A^k||^(1/k).
inline double spectral_radius_gelfand(const Dense& a, int squarings = 40) {
  Dense m = a;
  double log_scale = 0.0;
  double k = 1.0;
  for (int i = 0; i < squarings; ++i) {
    double s = row_sum_norm(m);
    if (s == 0.0) return 0.0;
    for (auto& row : m)
      for (double& v : row) v /= s;
    log_scale += std::log(s) / k;
    m = mul(m, m);
    k *= 2.0;
  }
  return std::exp(log_scale + std::log(row_sum_norm(m)) / k);
}

// ------------------------------------------------------------------ models

inline Vec random_simplex(std::mt19937_64& g, std::size_t n, double floor = 0.02) {
  std::uniform_real_distribution<double> u(floor, 1.0);
  Vec v(n);
  double s = 0.0;
  for (double& x : v) s += (x = u(g));
  for (double& x : v) x /= s;
  return v;
}

struct ModelShape {
  std::size_t states = 3;
  std::size_t actions = 2;
  std::size_t features = 2;
  double gamma = 0.9;
  bool on_policy = false;
};

/// Random valid spec: strictly positive transition rows (irreducible),
/// strictly positive behaviour policy, Gaussian features.
inline ntd::MdpSpec random_spec(std::uint64_t seed, const ModelShape& shape) {
  std::mt19937_64 g(seed * 0x9e3779b97f4a7c15ULL + 12345);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  ntd::MdpSpec spec;
  spec.num_states = shape.states;
  spec.num_actions = shape.actions;
  spec.discount = shape.gamma;
  for (std::size_t a = 0; a < shape.actions; ++a) {
    ntd::Matrix p(shape.states, shape.states), r(shape.states, shape.states);
    for (std::size_t s = 0; s < shape.states; ++s) {
      const Vec row = random_simplex(g, shape.states);
      for (std::size_t t = 0; t < shape.states; ++t) {
        p(s, t) = row[t];
        r(s, t) = unif(g);
      }
    }
    spec.transition.push_back(p);
    spec.reward.push_back(r);
  }
  spec.features = ntd::Matrix(shape.states, shape.features);
  for (std::size_t s = 0; s < shape.states; ++s)
    for (std::size_t j = 0; j < shape.features; ++j) spec.features(s, j) = normal(g);
  spec.target_policy = ntd::Matrix(shape.states, shape.actions);
  spec.behavior_policy = ntd::Matrix(shape.states, shape.actions);
  for (std::size_t s = 0; s < shape.states; ++s) {
    const Vec pi = random_simplex(g, shape.actions, 0.0);
    const Vec beta = shape.on_policy ? pi : random_simplex(g, shape.actions);
    for (std::size_t a = 0; a < shape.actions; ++a) {
      spec.target_policy(s, a) = pi[a];
      spec.behavior_policy(s, a) = shape.on_policy ? pi[a] : beta[a];
    }
  }
  return spec;
}

/// Shape drawn from the ranges |S| in [2, max_states], m in [1, min(|S|, max_features)].
inline ModelShape random_shape(std::uint64_t seed, std::size_t max_states, std::size_t max_features) {
  std::mt19937_64 g(seed ^ 0xabcdef1234567ULL);
  ModelShape shape;
  shape.states = 2 + g() % (max_states - 1);
  shape.features = 1 + g() % std::min(shape.states, max_features);
  shape.actions = 1 + g() % 3;
  shape.gamma = std::uniform_real_distribution<double>(0.5, 0.99)(g);
  return shape;
}

}  // namespace oracle
