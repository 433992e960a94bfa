#include "ntd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ntd {

namespace {

void require_horizon(int n) {
  if (n < 1) throw PreconditionError("horizon n must be >= 1");
}

// Smallest positive integer n with gamma^n * c < 1. The closed form
// ceil(ln(1/c)/ln(gamma)) is bumped by one when it lands exactly on the
// boundary, so the returned n always satisfies the strict inequality.
int smallest_contracting_horizon(double c, double gamma) {
  if (c < 1.0) return 1;
  const double r = std::log(1.0 / c) / std::log(gamma);
  int n = std::max(1, static_cast<int>(std::ceil(r)));
  while (std::pow(gamma, n) * c >= 1.0) ++n;
  return n;
}

constexpr double kMarginalRho = 1e-6;
constexpr double kSingularDet = 1e-12;

// |det N| against the size of the two terms N is the difference of, so that
// cancellation is detected even when N is 1x1.
bool pbe_nonsingular(const DerivedModel& model, int n, const Matrix& nmat, double det) {
  const Matrix boot = model.phi_t_d * (std::pow(model.gamma(), n) * linalg::power(model.p_pi, static_cast<unsigned>(n))) *
                      model.phi();
  const double scale = linalg::norm_inf(model.gram) + linalg::norm_inf(boot);
  return std::abs(det) > kSingularDet * std::pow(scale, static_cast<double>(nmat.rows()));
}

}  // namespace

Matrix discounted_power(const DerivedModel& model, int n) {
  require_horizon(n);
  return std::pow(model.gamma(), n) * linalg::power(model.p_pi, static_cast<unsigned>(n));
}

Vector n_step_reward(const DerivedModel& model, int n) {
  require_horizon(n);
  Vector acc(model.num_states(), 0.0);
  Vector term = model.r_pi;
  for (int k = 0; k < n; ++k) {
    for (std::size_t s = 0; s < acc.size(); ++s) acc[s] += term[s];
    if (k + 1 < n) term = linalg::scale(model.p_pi * term, model.gamma());
  }
  return acc;
}

Vector bellman_n(const DerivedModel& model, int n, std::span<const double> x) {
  return linalg::add(n_step_reward(model, n), discounted_power(model, n) * x);
}

Matrix iteration_matrix_a(const DerivedModel& model, int n) {
  return model.proj_coef * discounted_power(model, n) * model.phi();
}

Matrix pbe_matrix_n(const DerivedModel& model, int n) {
  const Matrix inner = Matrix::identity(model.num_states()) - discounted_power(model, n);
  return model.phi_t_d * inner * model.phi();
}

Vector pbe_vector_b(const DerivedModel& model, int n) {
  return model.phi_t_d * n_step_reward(model, n);
}

TdMatrix td_matrix_s(const DerivedModel& model, int n) {
  TdMatrix out;
  out.s = -pbe_matrix_n(model, n);
  out.spectrum = linalg::eig_general(out.s);
  out.hurwitz = linalg::is_hurwitz(out.spectrum);
  out.marginal = std::abs(out.spectrum.max_real_part) < linalg::kHurwitzMargin;
  out.sym_lambda_max = linalg::lambda_max(0.5 * (out.s + out.s.transpose()));
  out.negdef = out.sym_lambda_max < -linalg::kHurwitzMargin;
  return out;
}

int bound_n1(const DerivedModel& model) {
  const double c = linalg::norm_inf(model.proj_coef) * linalg::norm_inf(model.phi());
  return smallest_contracting_horizon(c, model.gamma());
}

int bound_n2(const DerivedModel& model) {
  return smallest_contracting_horizon(linalg::norm_inf(model.pi_proj), model.gamma());
}

NthBound bound_nth(const DerivedModel& model) {
  const Matrix& phi = model.phi();
  const Vector ev = linalg::eig_symmetric(phi.transpose() * phi);
  const double lam_min = ev.front();
  const double lam_max = ev.back();
  const auto [dmin_it, dmax_it] = std::minmax_element(model.d_beta.begin(), model.d_beta.end());
  double phi_max = 0.0;  // max_s ||phi(s)||_2
  for (std::size_t s = 0; s < phi.rows(); ++s) {
    phi_max = std::max(phi_max, std::sqrt(linalg::dot(phi.row(s), phi.row(s))));
  }
  NthBound out;
  out.q1 = *dmin_it * lam_min / (phi_max * phi_max);
  out.q2 = (*dmin_it * lam_min) / (*dmax_it * lam_max) / std::sqrt(static_cast<double>(phi.rows()));
  const double log_gamma = std::log(model.gamma());
  out.ratio_q1 = std::log(out.q1) / log_gamma;
  out.ratio_q2 = std::log(out.q2) / log_gamma;
  out.winner = out.q1 >= out.q2 ? NthBranch::feature_norm : NthBranch::spectral_ratio;
  const double best = std::max(out.q1, out.q2);
  out.value = best >= 1.0 ? 1 : std::max(1, static_cast<int>(std::ceil(std::log(best) / log_gamma)));
  return out;
}

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::schur: return "schur";
    case Criterion::contraction_inf: return "contraction_inf";
    case Criterion::hurwitz: return "hurwitz";
    case Criterion::negdef: return "negdef";
  }
  return "unknown";
}

std::optional<Criterion> criterion_from_string(const std::string& s) {
  for (Criterion c : {Criterion::schur, Criterion::contraction_inf, Criterion::hurwitz, Criterion::negdef}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

bool criterion_holds(const DerivedModel& model, Criterion criterion, int n) {
  switch (criterion) {
    case Criterion::schur:
      return linalg::is_schur(linalg::eig_general(iteration_matrix_a(model, n)));
    case Criterion::contraction_inf:
      return std::pow(model.gamma(), n) * linalg::norm_inf(model.pi_proj) < 1.0 - linalg::kSchurMargin;
    case Criterion::hurwitz:
      return td_matrix_s(model, n).hurwitz;
    case Criterion::negdef:
      return td_matrix_s(model, n).negdef;
  }
  return false;
}

SearchResult min_n_search(const DerivedModel& model, Criterion criterion, int n_max) {
  if (n_max < 1) throw PreconditionError("min_n_search: n_max must be >= 1");
  SearchResult out;
  out.n_max = n_max;
  out.bitmap.reserve(static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) {
    const bool ok = criterion_holds(model, criterion, n);
    out.bitmap.push_back(ok);
    if (ok && !out.min_n) out.min_n = n;
  }
  return out;
}

Vector fixed_point_theta_n(const DerivedModel& model, int n) {
  const Matrix nmat = pbe_matrix_n(model, n);
  const linalg::LuDecomposition lu(nmat);
  if (lu.singular() || !pbe_nonsingular(model, n, nmat, lu.determinant())) {
    std::ostringstream os;
    os << "Phi^T D (I - gamma^n (P^pi)^n) Phi is singular at n=" << n
       << "; the n-step projected Bellman equation has no unique solution (A is not Schur)";
    throw SingularMatrixError(os.str());
  }
  return lu.solve(pbe_vector_b(model, n));
}

Vector theta_star_pbe(const DerivedModel& model) {
  const std::size_t ns = model.num_states();
  const Matrix m = model.phi_t_d * (model.gamma() * model.p_pi - Matrix::identity(ns)) * model.phi();
  const linalg::LuDecomposition lu(m);
  if (lu.singular()) {
    throw SingularMatrixError("Phi^T D (gamma P^pi - I) Phi is singular; the one-step PBE solution is undefined");
  }
  return linalg::scale(lu.solve(model.phi_t_d * model.r_pi), -1.0);
}

Vector theta_infinity(const DerivedModel& model) { return model.proj_coef * model.v_pi; }

double mspbe(const DerivedModel& model, std::span<const double> theta, int n) {
  const Vector x = model.phi() * theta;
  const Vector residual = linalg::subtract(model.pi_proj * bellman_n(model, n, x), x);
  const double w = linalg::weighted_norm(residual, model.d_beta);
  return 0.5 * w * w;
}

ErrorBounds error_bounds(const DerivedModel& model, int n) {
  require_horizon(n);
  ErrorBounds out;
  out.contraction_factor = std::pow(model.gamma(), n) * linalg::norm_inf(model.pi_proj);
  if (!(out.contraction_factor < 1.0)) {
    std::ostringstream os;
    os << "error_bounds: gamma^n ||Pi||_inf = " << out.contraction_factor << " >= 1 at n=" << n;
    throw PreconditionError(os.str());
  }
  const Vector proj_v = model.pi_proj * model.v_pi;
  const double approx = linalg::norm_inf(linalg::subtract(proj_v, model.v_pi));
  out.bound_value = approx / (1.0 - out.contraction_factor);
  out.bound_projection = out.contraction_factor * out.bound_value;

  const Vector fit_n = model.phi() * fixed_point_theta_n(model, n);
  out.actual_value = linalg::norm_inf(linalg::subtract(fit_n, model.v_pi));
  out.actual_projection = linalg::norm_inf(linalg::subtract(fit_n, proj_v));
  return out;
}

double alpha_star_bound(const Matrix& s) {
  const Matrix p = linalg::lyapunov_solve(s);
  return 1.0 / (linalg::lambda_max(p) * linalg::lambda_max(s.transpose() * s));
}

StabilityReport stability_report(const DerivedModel& model, int n) {
  require_horizon(n);
  StabilityReport r;
  r.n = n;
  r.matrix_a = iteration_matrix_a(model, n);
  r.matrix_n = pbe_matrix_n(model, n);
  r.matrix_s = -r.matrix_n;
  r.a_spectrum = linalg::eig_general(r.matrix_a);
  r.a_is_schur = linalg::is_schur(r.a_spectrum);
  r.a_marginal = std::abs(r.a_spectrum.spectral_radius - 1.0) < kMarginalRho;

  r.n_determinant = linalg::determinant(r.matrix_n);
  r.n_is_nonsingular = pbe_nonsingular(model, n, r.matrix_n, r.n_determinant);

  const TdMatrix s = td_matrix_s(model, n);
  r.s_spectrum = s.spectrum;
  r.s_is_hurwitz = s.hurwitz;
  r.s_marginal = s.marginal;
  r.s_symmetric_part_negdef = s.negdef;

  r.gamma_n_pi_norm = std::pow(model.gamma(), n) * linalg::norm_inf(model.pi_proj);
  r.inf_norm_contraction = r.gamma_n_pi_norm < 1.0 - linalg::kSchurMargin;
  if (r.s_is_hurwitz) r.alpha_star_lower = alpha_star_bound(r.matrix_s);

  auto check = [n](bool ok, const char* what) {
    if (!ok) {
      std::ostringstream os;
      os << "stability_report invariant violated at n=" << n << ": " << what;
      throw Error(os.str());
    }
  };
  check(!r.a_is_schur || r.n_is_nonsingular, "Schur A with singular N");
  check(!r.s_symmetric_part_negdef || r.s_is_hurwitz, "negative definite S that is not Hurwitz");
  check(!r.inf_norm_contraction || r.a_is_schur, "infinity-norm contraction without Schur A");
  return r;
}

int default_search_cap(const DerivedModel& model) {
  return std::max(4 * bound_nth(model).value, 200);
}

BoundSet bound_set(const DerivedModel& model, int n_max) {
  BoundSet b;
  b.n1_upper = bound_n1(model);
  b.n2_upper = bound_n2(model);
  b.nth_detail = bound_nth(model);
  b.nth_upper = b.nth_detail.value;
  b.search_cap = n_max > 0 ? n_max : default_search_cap(model);
  b.min_n_schur = min_n_search(model, Criterion::schur, b.search_cap).min_n;
  b.min_n_contraction_inf = min_n_search(model, Criterion::contraction_inf, b.search_cap).min_n;
  b.min_n_hurwitz = min_n_search(model, Criterion::hurwitz, b.search_cap).min_n;

  auto dominated = [](const std::optional<int>& found, int bound, int cap) {
    // a bound beyond the search cap cannot be contradicted by a failed search
    if (!found) return bound > cap;
    return *found <= bound;
  };
  if (!dominated(b.min_n_schur, b.n1_upper, b.search_cap) ||
      !dominated(b.min_n_contraction_inf, b.n2_upper, b.search_cap) ||
      !dominated(b.min_n_hurwitz, b.nth_upper, b.search_cap)) {
    throw Error("bound_set invariant violated: a sufficient bound is below the observed threshold");
  }
  if (b.min_n_schur && b.min_n_contraction_inf && *b.min_n_schur > *b.min_n_contraction_inf) {
    throw Error("bound_set invariant violated: infinity-norm contraction before A is Schur");
  }
  return b;
}

}  // namespace ntd
