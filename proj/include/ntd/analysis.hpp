#pragma once

// Deterministic diagnostics of off-policy n-step projected value iteration:
// iteration matrices, stability verdicts, sufficient horizons, fixed points
// and their approximation-error bounds.

#include <optional>
#include <string>
#include <vector>

#include "ntd/linalg.hpp"
#include "ntd/mdp.hpp"

namespace ntd {

using linalg::Spectrum;

/// gamma^n (P^pi)^n.
Matrix discounted_power(const DerivedModel& model, int n);

/// sum_{k<n} gamma^k (P^pi)^k R^pi, the expected n-step reward.
Vector n_step_reward(const DerivedModel& model, int n);

/// T^n(x) = sum_{k<n} gamma^k (P^pi)^k R^pi + gamma^n (P^pi)^n x.
Vector bellman_n(const DerivedModel& model, int n, std::span<const double> x);

/// Linear part of n-step projected value iteration,
/// (Phi^T D Phi)^{-1} Phi^T D gamma^n (P^pi)^n Phi.
Matrix iteration_matrix_a(const DerivedModel& model, int n);

/// N = Phi^T D (I - gamma^n (P^pi)^n) Phi.
Matrix pbe_matrix_n(const DerivedModel& model, int n);
/// b = Phi^T D sum_{k<n} gamma^k (P^pi)^k R^pi.
Vector pbe_vector_b(const DerivedModel& model, int n);

struct TdMatrix {
  Matrix s;  // Phi^T D (gamma^n (P^pi)^n - I) Phi
  Spectrum spectrum;
  bool hurwitz = false;
  bool negdef = false;
  bool marginal = false;  // |max real part| < 1e-9
  double sym_lambda_max = 0.0;
};
TdMatrix td_matrix_s(const DerivedModel& model, int n);

/// Smallest n with ||A(n)||_inf < 1 guaranteed by the norm bound
/// gamma^n ||(Phi^T D Phi)^{-1} Phi^T D||_inf ||Phi||_inf < 1.
int bound_n1(const DerivedModel& model);

/// Smallest n with gamma^n ||Pi||_inf < 1 (infinity-norm contraction of Pi T^n).
int bound_n2(const DerivedModel& model);

enum class NthBranch { feature_norm, spectral_ratio };

struct NthBound {
  int value = 1;
  double q1 = 0.0;       // d_min lambda_min(Phi^T Phi) / phi_max^2
  double q2 = 0.0;       // d_min lambda_min / (d_max lambda_max sqrt|S|)
  double ratio_q1 = 0.0; // ln(q1) / ln(gamma)
  double ratio_q2 = 0.0; // ln(q2) / ln(gamma)
  NthBranch winner = NthBranch::feature_norm;
};
/// Sufficient horizon for S to be negative definite (hence Hurwitz).
NthBound bound_nth(const DerivedModel& model);

enum class Criterion { schur, contraction_inf, hurwitz, negdef };
std::string to_string(Criterion c);
std::optional<Criterion> criterion_from_string(const std::string& s);

/// Whether the criterion holds at horizon n. Marginal spectra count as
/// not satisfied.
bool criterion_holds(const DerivedModel& model, Criterion criterion, int n);

struct SearchResult {
  std::optional<int> min_n;
  std::vector<bool> bitmap;  // bitmap[n-1] for n = 1..n_max
  int n_max = 0;
};
/// Satisfaction is not monotone in n, so the full bitmap is recorded.
SearchResult min_n_search(const DerivedModel& model, Criterion criterion, int n_max);

/// theta*^n = N^{-1} b. Throws SingularMatrixError if N is singular.
Vector fixed_point_theta_n(const DerivedModel& model, int n);

/// theta* = -(Phi^T D (gamma P^pi - I) Phi)^{-1} Phi^T D R^pi, the one-step
/// PBE solution. Throws SingularMatrixError when that matrix is singular.
Vector theta_star_pbe(const DerivedModel& model);

/// Weighted least-squares fit of V^pi: (Phi^T D Phi)^{-1} Phi^T D V^pi.
Vector theta_infinity(const DerivedModel& model);

/// 0.5 ||Pi T^n(Phi theta) - Phi theta||^2_D.
double mspbe(const DerivedModel& model, std::span<const double> theta, int n);

struct ErrorBounds {
  double contraction_factor = 0.0;  // gamma^n ||Pi||_inf
  double bound_value = 0.0;         // bound on ||Phi theta*^n - V^pi||_inf
  double bound_projection = 0.0;    // bound on ||Phi theta*^n - Phi theta*inf||_inf
  double actual_value = 0.0;
  double actual_projection = 0.0;
};
/// Requires gamma^n ||Pi||_inf < 1 (PreconditionError otherwise).
ErrorBounds error_bounds(const DerivedModel& model, int n);

/// 1 / (lambda_max(P) lambda_max(S^T S)) with S^T P + P S = -I. S must be Hurwitz.
double alpha_star_bound(const Matrix& s);

struct StabilityReport {
  int n = 1;
  Matrix matrix_a;
  Matrix matrix_n;
  Matrix matrix_s;
  Spectrum a_spectrum;
  Spectrum s_spectrum;
  bool a_is_schur = false;
  bool a_marginal = false;  // |rho(A) - 1| < 1e-6
  bool n_is_nonsingular = false;
  double n_determinant = 0.0;
  bool s_is_hurwitz = false;
  bool s_marginal = false;
  bool s_symmetric_part_negdef = false;
  bool inf_norm_contraction = false;
  double gamma_n_pi_norm = 0.0;
  std::optional<double> alpha_star_lower;
};
StabilityReport stability_report(const DerivedModel& model, int n);

struct BoundSet {
  int n1_upper = 1;
  int n2_upper = 1;
  int nth_upper = 1;
  NthBound nth_detail;
  std::optional<int> min_n_schur;
  std::optional<int> min_n_contraction_inf;
  std::optional<int> min_n_hurwitz;
  int search_cap = 0;
};
/// n_max <= 0 selects the default cap max(4 * nth_upper, 200).
BoundSet bound_set(const DerivedModel& model, int n_max = 0);

/// Default search cap for min_n_search.
int default_search_cap(const DerivedModel& model);

}  // namespace ntd
