#pragma once

// Sample-based off-policy n-step TD: i.i.d. restarts from d^beta and a single
// Markovian trajectory, with per-window importance-sampling ratios.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ntd/dp.hpp"
#include "ntd/mdp.hpp"

namespace ntd {

/// Seeded generator. Identical seeds give identical streams on a given
/// platform/toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal();

 private:
  std::mt19937_64 engine_;
};

Rng rng_new(std::uint64_t seed);

/// Inverse-CDF draw over the normalised weights. Throws PreconditionError for
/// negative or all-zero weights.
std::size_t rng_categorical(Rng& rng, std::span<const double> weights);

/// alpha_k = a / (k + b + 1).
struct StepSchedule {
  double a = 1.0;
  double b = 0.0;

  std::string id() const;
};
double step_size(const StepSchedule& schedule, std::size_t k);

enum class TdAlgorithm { iid, markov };
std::string to_string(TdAlgorithm a);

struct TdRunConfig {
  TdAlgorithm algorithm = TdAlgorithm::iid;
  int n = 1;
  StepSchedule schedule;
  std::optional<double> clip;  // ratio cap min(rho, clip)
  std::uint64_t seed = 0;
  std::size_t max_iters = 100000;
  std::size_t record_every = 100;
  std::optional<Vector> theta0;  // zero when absent
  double tol = 1e-2;             // on ||theta_K - theta*^n||_inf, for the converged flag

  void validate() const;
};

struct Rollout {
  std::vector<std::size_t> states;   // s_0 .. s_n
  std::vector<std::size_t> actions;  // a_0 .. a_{n-1}
  std::vector<double> rewards;       // r_1 .. r_n
  double is_ratio = 1.0;             // after clipping
  double is_ratio_unclipped = 1.0;
  double n_step_return_base = 0.0;   // sum_{k<n} gamma^k r_{k+1}
};

/// Precomputed cumulative tables for fast categorical draws from a model.
class Sampler {
 public:
  explicit Sampler(const DerivedModel& model);

  std::size_t initial_state(Rng& rng) const;
  std::size_t action(Rng& rng, std::size_t s) const;
  std::size_t next_state(Rng& rng, std::size_t s, std::size_t a) const;
  double ratio(std::size_t s, std::size_t a) const { return ratio_[s * num_actions_ + a]; }
  double reward(std::size_t s, std::size_t a, std::size_t next) const {
    return model_->spec.reward[a](s, next);
  }
  const DerivedModel& model() const { return *model_; }

 private:
  static std::size_t draw(Rng& rng, const double* cdf, std::size_t count);

  const DerivedModel* model_;
  std::size_t num_states_;
  std::size_t num_actions_;
  std::vector<double> initial_cdf_;
  std::vector<double> behavior_cdf_;    // [s][a]
  std::vector<double> transition_cdf_;  // [s][a][s']
  std::vector<double> ratio_;           // pi(a|s) / beta(a|s)
};

Rollout sample_iid_rollout(const Sampler& sampler, int n, Rng& rng, std::optional<double> clip);
Rollout sample_iid_rollout(const DerivedModel& model, int n, Rng& rng, std::optional<double> clip);

/// Algorithm with restarts s_0 ~ d^beta:
/// theta <- theta + alpha_i rho (G - phi(s_0)^T theta) phi(s_0).
IterationTrace td_iid_run(const DerivedModel& model, const TdRunConfig& config);

/// Same update along one behaviour trajectory with a sliding window of n
/// transitions: the update at step i uses s_i, rewards r_{i+1..i+n} and
/// bootstraps at s_{i+n}. Requires an irreducible behaviour chain.
IterationTrace td_markov_run(const DerivedModel& model, const TdRunConfig& config);

IterationTrace td_run(const DerivedModel& model, const TdRunConfig& config);

/// Runs one TD run per seed concurrently; results are ordered like seeds.
std::vector<IterationTrace> td_sweep(const DerivedModel& model, const TdRunConfig& base,
                                     std::span<const std::uint64_t> seeds);

/// Mean TD increment at fixed theta: Phi^T D (T^n(Phi theta) - Phi theta).
Vector ode_drift(const DerivedModel& model, int n, std::span<const double> theta);

struct MomentEstimate {
  Matrix empirical;
  Matrix analytic;
  Matrix standard_error;
  double deviation = 0.0;  // ||empirical - analytic||_inf (entrywise max)
  double max_z = 0.0;      // max |empirical - analytic| / SE over entries with SE > 0

  /// Every entry within k standard errors; zero-variance entries must match
  /// to rounding.
  bool within(double k) const;
};

struct MomentReport {
  MomentEstimate feature_second_moment;  // E[phi(s0) phi(s0)^T] vs Phi^T D Phi
  MomentEstimate weighted_cross_moment;  // E[rho phi(s0) phi(s_n)^T] vs Phi^T D (P^pi)^n Phi
  std::size_t num_samples = 0;
};

/// Monte-Carlo check of the two moment identities behind the TD mean field
/// (unclipped ratios).
MomentReport moment_check(const DerivedModel& model, int n, std::size_t num_samples, Rng& rng);

}  // namespace ntd
