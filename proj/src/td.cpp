#include "ntd/td.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <sstream>

#include "ntd/analysis.hpp"

namespace ntd {

double Rng::normal() {
  // Box-Muller; u1 in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng rng_new(std::uint64_t seed) { return Rng(seed); }

std::size_t rng_categorical(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw PreconditionError("rng_categorical: weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw PreconditionError("rng_categorical: all weights are zero");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    acc += weights[i];
    if (u < acc) return i;
  }
  return last_positive;
}

std::string StepSchedule::id() const {
  std::ostringstream os;
  os << "harmonic(a=" << a << ",b=" << b << ")";
  return os.str();
}

double step_size(const StepSchedule& schedule, std::size_t k) {
  return schedule.a / (static_cast<double>(k) + schedule.b + 1.0);
}

std::string to_string(TdAlgorithm a) { return a == TdAlgorithm::iid ? "iid" : "markov"; }

void TdRunConfig::validate() const {
  if (n < 1) throw PreconditionError("TdRunConfig: n must be >= 1");
  if (clip && !(*clip > 0.0)) throw PreconditionError("TdRunConfig: clip must be positive");
  if (max_iters < 1) throw PreconditionError("TdRunConfig: max_iters must be >= 1");
  if (record_every < 1) throw PreconditionError("TdRunConfig: record_every must be >= 1");
  if (!(schedule.a > 0.0) || !(schedule.b >= 0.0)) {
    throw PreconditionError("TdRunConfig: schedule needs a > 0 and b >= 0");
  }
}

// ---------------------------------------------------------------- Sampler

namespace {

void append_cdf(std::vector<double>& out, std::span<const double> weights) {
  double acc = 0.0;
  for (double w : weights) {
    acc += w;
    out.push_back(acc);
  }
}

}  // namespace

Sampler::Sampler(const DerivedModel& model)
    : model_(&model), num_states_(model.num_states()), num_actions_(model.spec.num_actions) {
  const MdpSpec& spec = model.spec;
  append_cdf(initial_cdf_, model.d_beta);
  for (std::size_t s = 0; s < num_states_; ++s) {
    append_cdf(behavior_cdf_, spec.behavior_policy.row(s));
    for (std::size_t a = 0; a < num_actions_; ++a) {
      append_cdf(transition_cdf_, spec.transition[a].row(s));
      const double b = spec.behavior_policy(s, a);
      ratio_.push_back(b > 0.0 ? spec.target_policy(s, a) / b : 0.0);
    }
  }
}

std::size_t Sampler::draw(Rng& rng, const double* cdf, std::size_t count) {
  const double u = rng.uniform() * cdf[count - 1];
  const double* hit = std::upper_bound(cdf, cdf + count, u);
  std::size_t i = static_cast<std::size_t>(hit - cdf);
  if (i >= count) i = count - 1;
  // skip zero-probability slots that share a cumulative value
  while (i > 0 && cdf[i] == cdf[i - 1]) --i;
  return i;
}

std::size_t Sampler::initial_state(Rng& rng) const {
  return draw(rng, initial_cdf_.data(), num_states_);
}

std::size_t Sampler::action(Rng& rng, std::size_t s) const {
  return draw(rng, behavior_cdf_.data() + s * num_actions_, num_actions_);
}

std::size_t Sampler::next_state(Rng& rng, std::size_t s, std::size_t a) const {
  return draw(rng, transition_cdf_.data() + (s * num_actions_ + a) * num_states_, num_states_);
}

Rollout sample_iid_rollout(const Sampler& sampler, int n, Rng& rng, std::optional<double> clip) {
  const double gamma = sampler.model().gamma();
  Rollout r;
  r.states.reserve(static_cast<std::size_t>(n) + 1);
  r.actions.reserve(static_cast<std::size_t>(n));
  r.rewards.reserve(static_cast<std::size_t>(n));
  std::size_t s = sampler.initial_state(rng);
  r.states.push_back(s);
  double rho = 1.0;
  double discount = 1.0;
  for (int k = 0; k < n; ++k) {
    const std::size_t a = sampler.action(rng, s);
    const std::size_t next = sampler.next_state(rng, s, a);
    const double reward = sampler.reward(s, a, next);
    rho *= sampler.ratio(s, a);
    r.n_step_return_base += discount * reward;
    discount *= gamma;
    r.actions.push_back(a);
    r.rewards.push_back(reward);
    r.states.push_back(next);
    s = next;
  }
  r.is_ratio_unclipped = rho;
  r.is_ratio = clip ? std::min(rho, *clip) : rho;
  return r;
}

Rollout sample_iid_rollout(const DerivedModel& model, int n, Rng& rng, std::optional<double> clip) {
  const Sampler sampler(model);
  return sample_iid_rollout(sampler, n, rng, clip);
}

// ---------------------------------------------------------------- TD runs

namespace {

class TdRecorder {
 public:
  TdRecorder(const DerivedModel& model, const TdRunConfig& config, Algorithm algorithm) {
    trace_.algorithm = algorithm;
    trace_.n = config.n;
    trace_.schedule = config.schedule.id();
    trace_.tolerance = config.tol;
    try {
      fixed_ = fixed_point_theta_n(model, config.n);
    } catch (const SingularMatrixError&) {
      // no fixed point; errors stay unrecorded
    }
  }

  void record(std::size_t k, const Vector& theta, double alpha, double rho) {
    trace_.steps.push_back(k);
    trace_.params.push_back(theta);
    trace_.alphas.push_back(alpha);
    trace_.rhos.push_back(rho);
    if (fixed_) trace_.errors_to_fixed_point.push_back(linalg::norm_inf(linalg::subtract(theta, *fixed_)));
  }

  IterationTrace finish(bool diverged) {
    trace_.diverged = diverged;
    if (fixed_) {
      trace_.final_error = trace_.errors_to_fixed_point.back();
    } else {
      trace_.final_error = std::numeric_limits<double>::quiet_NaN();
    }
    if (diverged) trace_.final_error = std::numeric_limits<double>::infinity();
    trace_.converged = !diverged && trace_.final_error <= trace_.tolerance;
    return std::move(trace_);
  }

 private:
  IterationTrace trace_;
  std::optional<Vector> fixed_;
};

Vector initial_theta(const DerivedModel& model, const TdRunConfig& config) {
  if (!config.theta0) return Vector(model.num_features(), 0.0);
  if (config.theta0->size() != model.num_features()) {
    throw PreconditionError("theta0 length must equal the feature dimension");
  }
  return *config.theta0;
}

// theta += alpha * rho * (G - phi(s0)^T theta) phi(s0), G = base + gamma^n phi(sn)^T theta.
// Returns false when the divergence guard trips.
bool td_update(Vector& theta, std::span<const double> phi0, std::span<const double> phin,
               double base, double gamma_n, double alpha, double rho) {
  const double target = base + gamma_n * linalg::dot(phin, theta);
  const double delta = target - linalg::dot(phi0, theta);
  const double coef = alpha * rho * delta;
  double mx = 0.0;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    theta[j] += coef * phi0[j];
    mx = std::max(mx, std::abs(theta[j]));
  }
  return mx <= kDivergenceGuard;
}

}  // namespace

IterationTrace td_iid_run(const DerivedModel& model, const TdRunConfig& config) {
  config.validate();
  const Sampler sampler(model);
  Rng rng(config.seed);
  TdRecorder rec(model, config, Algorithm::td_iid);
  Vector theta = initial_theta(model, config);
  const double gamma_n = std::pow(model.gamma(), config.n);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rec.record(0, theta, nan, nan);

  for (std::size_t i = 0; i < config.max_iters; ++i) {
    const Rollout r = sample_iid_rollout(sampler, config.n, rng, config.clip);
    const double alpha = step_size(config.schedule, i);
    const bool ok = td_update(theta, model.feature(r.states.front()), model.feature(r.states.back()),
                              r.n_step_return_base, gamma_n, alpha, r.is_ratio);
    const std::size_t k = i + 1;
    if (!ok) {
      rec.record(k, theta, alpha, r.is_ratio);
      return rec.finish(true);
    }
    if (k % config.record_every == 0 || k == config.max_iters) rec.record(k, theta, alpha, r.is_ratio);
  }
  return rec.finish(false);
}

IterationTrace td_markov_run(const DerivedModel& model, const TdRunConfig& config) {
  config.validate();
  require_irreducible(model.p_beta);
  const Sampler sampler(model);
  Rng rng(config.seed);
  TdRecorder rec(model, config, Algorithm::td_markov);
  Vector theta = initial_theta(model, config);
  const int n = config.n;
  const double gamma = model.gamma();
  const double gamma_n = std::pow(gamma, n);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rec.record(0, theta, nan, nan);

  // Ring buffers over the window s_i, a_i, r_{i+1}, ..., s_{i+n}.
  const auto w = static_cast<std::size_t>(n);
  std::vector<std::size_t> states(w + 1);
  std::vector<std::size_t> actions(w);
  std::vector<double> rewards(w);

  std::size_t s = sampler.initial_state(rng);
  states[0] = s;
  auto extend = [&](std::size_t slot) {
    // transition out of states[slot % (w+1)]
    const std::size_t cur = states[slot % (w + 1)];
    const std::size_t a = sampler.action(rng, cur);
    const std::size_t next = sampler.next_state(rng, cur, a);
    actions[slot % w] = a;
    rewards[slot % w] = sampler.reward(cur, a, next);
    states[(slot + 1) % (w + 1)] = next;
  };
  // warm-up: s_0, a_0, ..., s_{n-1}
  for (std::size_t j = 0; j + 1 < w; ++j) extend(j);

  for (std::size_t i = 0; i < config.max_iters; ++i) {
    extend(i + w - 1);  // a_{n-1+i}, s_{n+i}
    double rho = 1.0;
    double base = 0.0;
    double discount = 1.0;
    for (std::size_t k = 0; k < w; ++k) {
      const std::size_t st = states[(i + k) % (w + 1)];
      const std::size_t ac = actions[(i + k) % w];
      rho *= sampler.ratio(st, ac);
      base += discount * rewards[(i + k) % w];
      discount *= gamma;
    }
    if (config.clip) rho = std::min(rho, *config.clip);
    const std::size_t s_start = states[i % (w + 1)];
    const std::size_t s_end = states[(i + w) % (w + 1)];
    const double alpha = step_size(config.schedule, i);
    const bool ok = td_update(theta, model.feature(s_start), model.feature(s_end), base, gamma_n, alpha, rho);
    const std::size_t k = i + 1;
    if (!ok) {
      rec.record(k, theta, alpha, rho);
      return rec.finish(true);
    }
    if (k % config.record_every == 0 || k == config.max_iters) rec.record(k, theta, alpha, rho);
  }
  return rec.finish(false);
}

IterationTrace td_run(const DerivedModel& model, const TdRunConfig& config) {
  return config.algorithm == TdAlgorithm::iid ? td_iid_run(model, config) : td_markov_run(model, config);
}

std::vector<IterationTrace> td_sweep(const DerivedModel& model, const TdRunConfig& base,
                                     std::span<const std::uint64_t> seeds) {
  std::vector<std::future<IterationTrace>> jobs;
  jobs.reserve(seeds.size());
  for (std::uint64_t seed : seeds) {
    TdRunConfig cfg = base;
    cfg.seed = seed;
    jobs.push_back(std::async(std::launch::async, [&model, cfg] { return td_run(model, cfg); }));
  }
  std::vector<IterationTrace> out;
  out.reserve(jobs.size());
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

Vector ode_drift(const DerivedModel& model, int n, std::span<const double> theta) {
  const Vector value = model.phi() * theta;
  return model.phi_t_d * linalg::subtract(bellman_n(model, n, value), value);
}

// ---------------------------------------------------------------- moments

bool MomentEstimate::within(double k) const {
  for (std::size_t r = 0; r < empirical.rows(); ++r) {
    for (std::size_t c = 0; c < empirical.cols(); ++c) {
      const double dev = std::abs(empirical(r, c) - analytic(r, c));
      const double se = standard_error(r, c);
      if (se > 0.0) {
        if (dev > k * se) return false;
      } else if (dev > 1e-12 * std::max(1.0, std::abs(analytic(r, c)))) {
        return false;
      }
    }
  }
  return true;
}

namespace {

MomentEstimate finish_moment(const Matrix& sum, const Matrix& sum_sq, Matrix analytic, std::size_t count) {
  MomentEstimate out;
  const auto nd = static_cast<double>(count);
  out.empirical = (1.0 / nd) * sum;
  out.standard_error = Matrix(sum.rows(), sum.cols());
  out.analytic = std::move(analytic);
  for (std::size_t r = 0; r < sum.rows(); ++r) {
    for (std::size_t c = 0; c < sum.cols(); ++c) {
      const double mean = out.empirical(r, c);
      double var = count > 1 ? (sum_sq(r, c) - nd * mean * mean) / (nd - 1.0) : 0.0;
      // cancellation noise on constant samples
      if (var < 1e-14 * std::max(1.0, mean * mean)) var = 0.0;
      out.standard_error(r, c) = std::sqrt(var / nd);
      const double dev = std::abs(mean - out.analytic(r, c));
      out.deviation = std::max(out.deviation, dev);
      if (out.standard_error(r, c) > 0.0) out.max_z = std::max(out.max_z, dev / out.standard_error(r, c));
    }
  }
  return out;
}

}  // namespace

MomentReport moment_check(const DerivedModel& model, int n, std::size_t num_samples, Rng& rng) {
  if (num_samples < 1) throw PreconditionError("moment_check: num_samples must be >= 1");
  const Sampler sampler(model);
  const std::size_t m = model.num_features();
  Matrix first_sum(m, m), first_sq(m, m), second_sum(m, m), second_sq(m, m);
  for (std::size_t i = 0; i < num_samples; ++i) {
    const Rollout r = sample_iid_rollout(sampler, n, rng, std::nullopt);
    const auto phi0 = model.feature(r.states.front());
    const auto phin = model.feature(r.states.back());
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) {
        const double x1 = phi0[a] * phi0[b];
        const double x2 = r.is_ratio_unclipped * phi0[a] * phin[b];
        first_sum(a, b) += x1;
        first_sq(a, b) += x1 * x1;
        second_sum(a, b) += x2;
        second_sq(a, b) += x2 * x2;
      }
    }
  }
  MomentReport rep;
  rep.num_samples = num_samples;
  rep.feature_second_moment = finish_moment(first_sum, first_sq, model.gram, num_samples);
  const Matrix cross = model.phi_t_d * linalg::power(model.p_pi, static_cast<unsigned>(n)) * model.phi();
  rep.weighted_cross_moment = finish_moment(second_sum, second_sq, cross, num_samples);
  return rep;
}

}  // namespace ntd
