#pragma once

// Model-based iterations: n-step projected value iteration and the
// Richardson iteration on the n-step projected Bellman equation.

#include <optional>
#include <string>
#include <vector>

#include "ntd/mdp.hpp"

namespace ntd {

enum class Algorithm { n_pvi, richardson, td_iid, td_markov };
std::string to_string(Algorithm a);

/// Recorded run of one of the iterations.
///
/// params[i] is theta at iteration steps[i]. For the deterministic
/// iterations every step is recorded and final_error is the last successive
/// difference ||theta_K - theta_{K-1}||_inf; for TD runs final_error is
/// ||theta_K - theta*^n||_inf. In both cases converged == (final_error <= tolerance)
/// and the run did not hit the divergence guard.
struct IterationTrace {
  Algorithm algorithm = Algorithm::n_pvi;
  int n = 1;
  std::vector<std::size_t> steps;
  std::vector<Vector> params;
  std::vector<double> errors_to_fixed_point;  // empty when theta*^n is undefined
  std::optional<double> step_size;
  std::string schedule;  // TD runs: textual schedule id
  std::vector<double> alphas;  // TD runs: alpha_k at recorded steps
  std::vector<double> rhos;    // TD runs: clipped ratio at recorded steps
  double tolerance = 0.0;
  bool converged = false;
  bool diverged = false;
  double final_error = 0.0;

  const Vector& final_params() const { return params.back(); }
  std::optional<double> final_error_to_fixed_point() const {
    if (errors_to_fixed_point.empty()) return std::nullopt;
    return errors_to_fixed_point.back();
  }
};

inline constexpr double kDivergenceGuard = 1e12;
inline constexpr double kDefaultTol = 1e-10;
inline constexpr std::size_t kDefaultMaxIters = 100000;

struct DpOptions {
  std::size_t max_iters = kDefaultMaxIters;
  double tol = kDefaultTol;
  bool record_all = true;  // false keeps only the first and last iterates
};

/// theta_{k+1} = (Phi^T D Phi)^{-1} Phi^T D T^n(Phi theta_k).
IterationTrace n_pvi(const DerivedModel& model, int n, std::span<const double> theta0,
                     const DpOptions& options = {});

/// theta_{k+1} = theta_k + alpha Phi^T D (T^n(Phi theta_k) - Phi theta_k).
IterationTrace richardson(const DerivedModel& model, int n, double alpha,
                          std::span<const double> theta0, const DpOptions& options = {});

struct RichardsonVerdict {
  bool converges = false;
  double spectral_radius = 0.0;  // rho(I - alpha N)
};
RichardsonVerdict spectral_verdict_richardson(const DerivedModel& model, int n, double alpha);

}  // namespace ntd
