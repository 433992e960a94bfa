#include "ntd/dp.hpp"

#include <cmath>
#include <limits>

#include "ntd/analysis.hpp"

namespace ntd {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::n_pvi: return "n_pvi";
    case Algorithm::richardson: return "richardson";
    case Algorithm::td_iid: return "td_iid";
    case Algorithm::td_markov: return "td_markov";
  }
  return "unknown";
}

namespace {

std::optional<Vector> try_fixed_point(const DerivedModel& model, int n) {
  try {
    return fixed_point_theta_n(model, n);
  } catch (const SingularMatrixError&) {
    return std::nullopt;
  }
}

template <typename Step>
IterationTrace run_iteration(Algorithm algorithm, const DerivedModel& model, int n, Step&& step,
                             std::span<const double> theta0, const DpOptions& options) {
  if (theta0.size() != model.num_features()) {
    throw PreconditionError("theta0 length must equal the feature dimension");
  }
  if (options.max_iters < 1) throw PreconditionError("max_iters must be >= 1");

  IterationTrace trace;
  trace.algorithm = algorithm;
  trace.n = n;
  trace.tolerance = options.tol;
  const std::optional<Vector> fixed = try_fixed_point(model, n);

  auto record = [&](std::size_t k, const Vector& theta) {
    trace.steps.push_back(k);
    trace.params.push_back(theta);
    if (fixed) trace.errors_to_fixed_point.push_back(linalg::norm_inf(linalg::subtract(theta, *fixed)));
  };

  Vector theta(theta0.begin(), theta0.end());
  record(0, theta);
  double diff = 0.0;
  std::size_t k = 0;
  bool stopped = false;
  // A start at the fixed point is already converged.
  if (fixed && linalg::norm_inf(linalg::subtract(theta, *fixed)) == 0.0) {
    trace.converged = true;
    trace.final_error = 0.0;
    return trace;
  }
  while (k < options.max_iters) {
    Vector next = step(theta);
    ++k;
    diff = linalg::norm_inf(linalg::subtract(next, theta));
    theta = std::move(next);
    const bool blown = !(linalg::norm_inf(theta) <= kDivergenceGuard);
    if (blown) {
      trace.diverged = true;
      if (!std::isfinite(linalg::norm_inf(theta))) theta = trace.params.back();
      record(k, theta);
      stopped = true;
      break;
    }
    if (diff <= options.tol) {
      record(k, theta);
      stopped = true;
      break;
    }
    if (options.record_all) record(k, theta);
  }
  if (!stopped && !options.record_all) record(k, theta);
  trace.final_error = trace.diverged ? std::numeric_limits<double>::infinity() : diff;
  trace.converged = !trace.diverged && diff <= options.tol;
  return trace;
}

}  // namespace

IterationTrace n_pvi(const DerivedModel& model, int n, std::span<const double> theta0,
                     const DpOptions& options) {
  const Vector reward_n = n_step_reward(model, n);
  const Matrix boot = discounted_power(model, n) * model.phi();  // gamma^n P^n Phi
  const linalg::LuDecomposition gram(model.gram);
  auto step = [&](const Vector& theta) {
    const Vector target = linalg::add(reward_n, boot * theta);  // T^n(Phi theta)
    return gram.solve(model.phi_t_d * target);
  };
  return run_iteration(Algorithm::n_pvi, model, n, step, theta0, options);
}

IterationTrace richardson(const DerivedModel& model, int n, double alpha,
                          std::span<const double> theta0, const DpOptions& options) {
  if (!(alpha > 0.0)) throw PreconditionError("richardson: alpha must be positive");
  const Vector reward_n = n_step_reward(model, n);
  const Matrix boot = discounted_power(model, n) * model.phi();
  auto step = [&](const Vector& theta) {
    const Vector value = model.phi() * theta;
    const Vector td = linalg::subtract(linalg::add(reward_n, boot * theta), value);
    return linalg::add(theta, linalg::scale(model.phi_t_d * td, alpha));
  };
  IterationTrace trace = run_iteration(Algorithm::richardson, model, n, step, theta0, options);
  trace.step_size = alpha;
  return trace;
}

RichardsonVerdict spectral_verdict_richardson(const DerivedModel& model, int n, double alpha) {
  const Matrix nmat = pbe_matrix_n(model, n);
  const Matrix m = Matrix::identity(nmat.rows()) - alpha * nmat;
  RichardsonVerdict v;
  v.spectral_radius = linalg::eig_general(m).spectral_radius;
  v.converges = v.spectral_radius < 1.0;
  return v;
}

}  // namespace ntd
