#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ntd/linalg.hpp"

namespace ntd {

using linalg::Matrix;
using linalg::Vector;

/// A finite MDP together with the evaluation setup: features plus a target
/// and a behaviour policy. Transition and reward tensors are indexed
/// [action](state, next_state).
struct MdpSpec {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  double discount = 0.0;
  std::vector<Matrix> transition;
  std::vector<Matrix> reward;
  Matrix features;         // |S| x m
  Matrix target_policy;    // |S| x |A|
  Matrix behavior_policy;  // |S| x |A|
  std::optional<Vector> state_weights;

  std::size_t num_features() const { return features.cols(); }
};

inline constexpr double kStochasticTol = 1e-12;

/// Parses the JSON problem document and validates it.
MdpSpec parse_mdp_spec(std::string_view json_text);
/// Reads and parses a problem file.
MdpSpec load_mdp_spec(const std::filesystem::path& path);
/// Serialises back to the on-disk JSON layout.
std::string to_json_text(const MdpSpec& spec);

/// Checks every MdpSpec invariant; throws ValidationError naming the
/// offending row or entry.
void validate(const MdpSpec& spec);

/// M(s, s') = sum_a policy(s, a) P[a](s, s').
Matrix induced_transition(const MdpSpec& spec, const Matrix& policy);

/// R(s) = sum_a policy(s, a) sum_s' P[a](s, s') r[a](s, s').
Vector expected_reward(const MdpSpec& spec, const Matrix& policy);

/// Throws ValidationError naming an unreachable (from, to) pair when the
/// chain's positive-entry graph is not strongly connected.
void require_irreducible(const Matrix& chain);

/// Stationary distribution of an irreducible chain, from the least-squares
/// solution of [chain^T - I; 1^T] d = [0; 1]. Works for periodic chains.
Vector stationary_distribution(const Matrix& chain);

/// Solves (I - gamma P) V = R.
Vector true_value(const Matrix& p_pi, std::span<const double> r_pi, double gamma);

/// Phi (Phi^T D Phi)^{-1} Phi^T D.
Matrix projection_matrix(const Matrix& features, std::span<const double> weights);

/// Numerical rank test: Phi is rank deficient when
/// sqrt(lambda_min(Phi^T Phi)) < 1e-10 * sqrt(lambda_max(Phi^T Phi)).
bool full_column_rank(const Matrix& features);

/// Every model quantity derived from an MdpSpec. Immutable once built.
struct DerivedModel {
  MdpSpec spec;
  Matrix p_pi;
  Matrix p_beta;
  Vector r_pi;
  Vector d_beta;
  Matrix D_beta;
  Vector v_pi;
  Matrix pi_proj;
  Matrix gram;      // Phi^T D Phi
  Matrix gram_inv;
  Matrix phi_t_d;   // Phi^T D
  Matrix proj_coef; // (Phi^T D Phi)^{-1} Phi^T D, so pi_proj = Phi * proj_coef

  double gamma() const { return spec.discount; }
  const Matrix& phi() const { return spec.features; }
  std::size_t num_states() const { return spec.num_states; }
  std::size_t num_features() const { return spec.features.cols(); }
  /// Row s of Phi.
  std::span<const double> feature(std::size_t s) const { return spec.features.row(s); }
};

DerivedModel derived_model(MdpSpec spec);

}  // namespace ntd
