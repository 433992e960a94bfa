#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ntd/analysis.hpp"
#include "ntd/error.hpp"
#include "ntd/td.hpp"
#include "support/oracles.hpp"

using namespace ntd;

namespace {

const std::string kFixtures = NTD_FIXTURE_DIR;

DerivedModel fixture(const char* name) { return derived_model(load_mdp_spec(kFixtures + "/" + name)); }

// Element-wise equality that treats NaN placeholders as equal.
bool same(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] == b[i] || (std::isnan(a[i]) && std::isnan(b[i])))) return false;
  }
  return true;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

TEST_CASE("generator") {
  SUBCASE("point mass") {
    Rng rng(1);
    const std::vector<double> w{1, 0, 0};
    for (int i = 0; i < 1000; ++i) CHECK(rng_categorical(rng, w) == 0);
  }
  SUBCASE("fair coin frequency") {
    Rng rng = rng_new(2);
    const std::vector<double> w{0.5, 0.5};
    std::size_t ones = 0;
    for (int i = 0; i < 1'000'000; ++i) ones += rng_categorical(rng, w);
    CHECK(std::abs(static_cast<double>(ones) / 1e6 - 0.5) < 0.002);
  }
  SUBCASE("determinism") {
    Rng a(77), b(77);
    const std::vector<double> w{0.2, 0.3, 0.5};
    for (int i = 0; i < 1000; ++i) CHECK(rng_categorical(a, w) == rng_categorical(b, w));
  }
  SUBCASE("bad weights") {
    Rng rng(3);
    CHECK_THROWS_AS(rng_categorical(rng, std::vector<double>{0, 0}), PreconditionError);
    CHECK_THROWS_AS(rng_categorical(rng, std::vector<double>{0.5, -0.1}), PreconditionError);
  }
  SUBCASE("uniform stays in [0, 1)") {
    Rng rng(4);
    for (int i = 0; i < 100000; ++i) {
      const double u = rng.uniform();
      CHECK((u >= 0.0 && u < 1.0));
    }
  }
}

TEST_CASE("step sizes") {
  const StepSchedule unit{1.0, 0.0};
  CHECK(step_size(unit, 0) == 1.0);
  for (std::size_t k = 0; k < 1000; ++k) {
    CHECK(1.0 / step_size(unit, k + 1) - 1.0 / step_size(unit, k) == doctest::Approx(1.0).epsilon(1e-12));
  }
  const StepSchedule s{0.7, 3.0};
  double sq = 0.0;
  for (std::size_t k = 0; k < 1'000'000; ++k) sq += step_size(s, k) * step_size(s, k);
  CHECK(sq <= 0.7 * 0.7 * std::numbers::pi * std::numbers::pi / 6.0);
}

TEST_CASE("config validation") {
  TdRunConfig c;
  CHECK_NOTHROW(c.validate());
  c.clip = 0.0;
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c.clip = 9.0;
  c.max_iters = 0;
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c.max_iters = 10;
  c.n = 0;
  CHECK_THROWS_AS(c.validate(), PreconditionError);
}

TEST_CASE("rollouts") {
  SUBCASE("on-policy ratio is one") {
    oracle::ModelShape shape{4, 3, 2, 0.9, true};
    const DerivedModel m = derived_model(oracle::random_spec(5, shape));
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
      const Rollout r = sample_iid_rollout(m, 4, rng, std::nullopt);
      CHECK(r.is_ratio == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(r.states.size() == 5);
      CHECK(r.actions.size() == 4);
      CHECK(r.rewards.size() == 4);
    }
  }
  SUBCASE("appendix D clipped ratio") {
    const DerivedModel m = fixture("mdp_d.json");
    const Sampler sampler(m);
    Rng rng(6);
    double largest = 0.0;
    for (int i = 0; i < 100000; ++i) {
      const Rollout r = sample_iid_rollout(sampler, 4, rng, 9.0);
      CHECK(r.is_ratio > 0.0);
      CHECK(r.is_ratio <= 9.0);
      CHECK(r.is_ratio == std::min(r.is_ratio_unclipped, 9.0));
      largest = std::max(largest, r.is_ratio_unclipped);
    }
    CHECK(largest > 9.0);  // clipping is active for n = 4
  }
  SUBCASE("transitions have positive probability and the return matches its rewards") {
    const DerivedModel m = derived_model(oracle::random_spec(7, {4, 2, 2, 0.8, false}));
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
      const Rollout r = sample_iid_rollout(m, 3, rng, std::nullopt);
      double g = 0.0, disc = 1.0, rho = 1.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t s = r.states[k], a = r.actions[k], t = r.states[k + 1];
        CHECK(m.spec.behavior_policy(s, a) > 0.0);
        CHECK(m.spec.transition[a](s, t) > 0.0);
        CHECK(r.rewards[k] == m.spec.reward[a](s, t));
        g += disc * r.rewards[k];
        disc *= 0.8;
        rho *= m.spec.target_policy(s, a) / m.spec.behavior_policy(s, a);
      }
      CHECK(r.n_step_return_base == doctest::Approx(g).epsilon(1e-14));
      CHECK(r.is_ratio == doctest::Approx(rho).epsilon(1e-14));
    }
  }
}

TEST_CASE("importance sampling is unbiased for one-step action functions") {
  const DerivedModel m = derived_model(oracle::random_spec(8, {3, 3, 2, 0.9, false}));
  const std::vector<double> x{1.0, -2.0, 5.0};
  for (std::size_t s = 0; s < 3; ++s) {
    Rng rng(100 + s);
    const auto beta = m.spec.behavior_policy.row(s);
    double sum = 0.0, sq = 0.0;
    const int count = 100000;
    for (int i = 0; i < count; ++i) {
      const std::size_t a = rng_categorical(rng, beta);
      const double v = m.spec.target_policy(s, a) / m.spec.behavior_policy(s, a) * x[a];
      sum += v;
      sq += v * v;
    }
    const double mean = sum / count;
    const double se = std::sqrt((sq / count - mean * mean) / count);
    double expect = 0.0;
    for (std::size_t a = 0; a < 3; ++a) expect += m.spec.target_policy(s, a) * x[a];
    CHECK(std::abs(mean - expect) <= 3.0 * se);
  }
}

TEST_CASE("moment check") {
  SUBCASE("appendix D, n = 2") {
    const DerivedModel m = fixture("mdp_d.json");
    Rng rng(9);
    const MomentReport rep = moment_check(m, 2, 1'000'000, rng);
    CHECK(rep.feature_second_moment.within(3.0));
    CHECK(rep.weighted_cross_moment.within(3.0));
    CHECK(rep.num_samples == 1'000'000);
  }
  SUBCASE("on-policy cross moment uses unit ratios") {
    oracle::ModelShape shape{3, 2, 2, 0.9, true};
    const DerivedModel m = derived_model(oracle::random_spec(10, shape));
    Rng rng(10);
    const MomentReport rep = moment_check(m, 3, 200000, rng);
    CHECK(rep.weighted_cross_moment.within(4.0));
    const Matrix expect = m.phi_t_d * linalg::power(m.p_pi, 3) * m.phi();
    CHECK(linalg::norm_inf(rep.weighted_cross_moment.analytic - expect) < 1e-14);
  }
  SUBCASE("deterministic chain has zero variance") {
    MdpSpec spec = oracle::random_spec(11, {3, 1, 2, 0.9, true});
    const Matrix cycle{{0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
    spec.transition = {cycle};
    spec.reward = {Matrix(3, 3, 0.0)};
    // constant features make every sampled product identical
    spec.features = Matrix(3, 1, 2.0);
    const DerivedModel m = derived_model(spec);
    Rng rng(11);
    const MomentReport rep = moment_check(m, 4, 17, rng);
    CHECK(rep.feature_second_moment.within(0.0));
    CHECK(rep.weighted_cross_moment.within(0.0));
    CHECK(rep.feature_second_moment.deviation < 1e-12);
  }
  SUBCASE("precondition") {
    Rng rng(12);
    CHECK_THROWS_AS(moment_check(fixture("mdp_d.json"), 1, 0, rng), PreconditionError);
  }
}

TEST_CASE("ode drift matches the mean TD increment") {
  const DerivedModel m = derived_model(oracle::random_spec(12, {3, 2, 2, 0.9, false}));
  const Sampler sampler(m);
  std::mt19937_64 g(13);
  std::normal_distribution<double> normal(0.0, 2.0);
  const int n = 2;
  const double gn = std::pow(m.gamma(), n);
  for (int t = 0; t < 10; ++t) {
    const Vector theta{normal(g), normal(g)};
    const Vector drift = ode_drift(m, n, theta);
    Rng rng(200 + t);
    const int count = 100000;
    Vector sum(2, 0.0), sq(2, 0.0);
    for (int i = 0; i < count; ++i) {
      const Rollout r = sample_iid_rollout(sampler, n, rng, std::nullopt);
      const auto phi0 = m.feature(r.states.front());
      const auto phin = m.feature(r.states.back());
      const double delta = r.n_step_return_base + gn * linalg::dot(phin, theta) - linalg::dot(phi0, theta);
      for (std::size_t j = 0; j < 2; ++j) {
        const double inc = r.is_ratio * delta * phi0[j];
        sum[j] += inc;
        sq[j] += inc * inc;
      }
    }
    for (std::size_t j = 0; j < 2; ++j) {
      const double mean = sum[j] / count;
      const double se = std::sqrt((sq[j] / count - mean * mean) / count);
      CHECK(std::abs(mean - drift[j]) <= 3.5 * se);
    }
  }
}

TEST_CASE("td runs") {
  const DerivedModel d = fixture("mdp_d.json");
  SUBCASE("seed determinism") {
    TdRunConfig c;
    c.n = 3;
    c.clip = 9.0;
    c.seed = 42;
    c.max_iters = 20000;
    for (TdAlgorithm alg : {TdAlgorithm::iid, TdAlgorithm::markov}) {
      c.algorithm = alg;
      const IterationTrace a = td_run(d, c);
      const IterationTrace b = td_run(d, c);
      CHECK(a.params == b.params);
      CHECK(a.steps == b.steps);
      CHECK(same(a.rhos, b.rhos));
      CHECK(same(a.alphas, b.alphas));
    }
  }
  SUBCASE("zero reward stays at zero") {
    MdpSpec spec = load_mdp_spec(kFixtures + "/mdp_d.json");
    for (auto& r : spec.reward) r = Matrix(2, 2, 0.0);
    const DerivedModel z = derived_model(spec);
    TdRunConfig c;
    c.n = 2;
    c.max_iters = 5000;
    for (TdAlgorithm alg : {TdAlgorithm::iid, TdAlgorithm::markov}) {
      c.algorithm = alg;
      const IterationTrace t = td_run(z, c);
      for (const Vector& p : t.params) CHECK(p[0] == 0.0);
    }
  }
  SUBCASE("thinning keeps the final iterate") {
    TdRunConfig c;
    c.n = 3;
    c.max_iters = 1050;
    c.record_every = 100;
    const IterationTrace t = td_iid_run(d, c);
    CHECK(t.steps.front() == 0);
    CHECK(t.steps[1] == 100);
    CHECK(t.steps.back() == 1050);
    CHECK(t.steps.size() == 12);
    CHECK(t.alphas.size() == t.steps.size());
    CHECK(std::isnan(t.alphas.front()));
    CHECK(t.alphas.back() == step_size(c.schedule, 1049));
  }
  SUBCASE("infinite clip equals no clip") {
    TdRunConfig c;
    c.n = 3;
    c.seed = 5;
    c.max_iters = 5000;
    const IterationTrace a = td_iid_run(d, c);
    c.clip = std::numeric_limits<double>::infinity();
    const IterationTrace b = td_iid_run(d, c);
    CHECK(a.params == b.params);
  }
  SUBCASE("reducible behaviour chain is rejected for the Markov stream") {
    TdRunConfig c;
    c.algorithm = TdAlgorithm::markov;
    CHECK_THROWS_AS(td_markov_run(fixture("example1.json"), c), ValidationError);
  }
  SUBCASE("parallel sweep matches sequential runs") {
    TdRunConfig c;
    c.n = 3;
    c.max_iters = 3000;
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
    const auto runs = td_sweep(d, c, seeds);
    REQUIRE(runs.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      c.seed = seeds[i];
      CHECK(runs[i].params == td_iid_run(d, c).params);
    }
  }
}

TEST_CASE("markov window start states follow d^beta") {
  // Record every step on a run with a zero step schedule effect: the trace
  // does not expose states, so rebuild the stream with the same sampler.
  const DerivedModel m = derived_model(oracle::random_spec(14, {4, 2, 2, 0.9, false}));
  const Sampler sampler(m);
  Rng rng(14);
  std::vector<double> count(4, 0.0);
  std::size_t s = sampler.initial_state(rng);
  const std::size_t steps = 1'000'000;
  for (std::size_t i = 0; i < steps; ++i) {
    count[s] += 1.0;
    const std::size_t a = sampler.action(rng, s);
    s = sampler.next_state(rng, s, a);
  }
  double tv = 0.0;
  for (std::size_t i = 0; i < 4; ++i) tv += 0.5 * std::abs(count[i] / steps - m.d_beta[i]);
  CHECK(tv < 0.01);
}

TEST_CASE("on-policy Markov TD converges") {
  oracle::ModelShape shape{3, 2, 2, 0.9, true};
  const DerivedModel m = derived_model(oracle::random_spec(15, shape));
  const TdMatrix s = td_matrix_s(m, 2);
  REQUIRE(s.hurwitz);
  const double rate = -s.spectrum.max_real_part;
  TdRunConfig c;
  c.algorithm = TdAlgorithm::markov;
  c.n = 2;
  c.schedule = {2.0 / rate, 2.0 / rate / alpha_star_bound(s.s)};
  c.max_iters = 1'000'000;
  c.record_every = 10000;
  c.tol = 0.05;
  std::vector<double> finals;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    c.seed = seed;
    finals.push_back(td_markov_run(m, c).final_error);
  }
  const double scale = std::max(1.0, linalg::norm_inf(fixed_point_theta_n(m, 2)));
  CHECK(median(finals) < 0.05 * scale);
}

TEST_CASE("appendix D direction on short i.i.d. runs") {
  const DerivedModel d = fixture("mdp_d.json");
  TdRunConfig c;
  c.clip = 9.0;
  c.max_iters = 200000;
  c.record_every = 1000;
  const double rate = -td_matrix_s(d, 4).spectrum.max_real_part;
  c.schedule = {2.0 / rate, 2.0 / rate / alpha_star_bound(td_matrix_s(d, 4).s)};
  c.theta0 = Vector{0.0};
  c.n = 4;
  const IterationTrace conv = td_iid_run(d, c);
  CHECK(conv.errors_to_fixed_point.back() < conv.errors_to_fixed_point.front());
}
