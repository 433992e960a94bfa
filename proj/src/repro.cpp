#include "ntd/repro.hpp"

#include <cmath>
#include <future>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "ntd/analysis.hpp"
#include "ntd/io.hpp"

namespace ntd::repro {

const std::vector<Tolerance>& tolerance_table() {
  static const std::vector<Tolerance> table = {
      {"appendix_d.bound_n1", 11, 11},
      {"appendix_d.bound_n2", 11, 11},
      {"appendix_d.bound_nth", 54, 54},
      {"appendix_d.min_n_schur", 3, 3},
      {"appendix_d.min_n_contraction_inf", 5, 5},
      {"appendix_d.min_n_hurwitz", 3, 3},
      {"appendix_d.search_n_max", 60, 60},
      {"appendix_e.s_n1", -0.19, -0.15},
      {"appendix_e.s_n2", 0.005, 0.035},
      {"appendix_f.ratio_q1", 46, 50},
      {"appendix_f.ratio_q2", 35, 39},
      {"example1.abs_det_n", 1e-10, INFINITY},
      {"example1.rho_gamma_pi_p", 1.0, INFINITY},
      {"error_bounds.slack", 0, 1e-9},
      {"richardson.fixed_point_error", 0, 1e-7},
      {"moments.standard_errors", 0, 3},
      {"td_stochastic.diverge_factor", 10, INFINITY},
      {"td_stochastic.shrink_factor", 0, 0.1},
  };
  return table;
}

const Tolerance& tolerance(std::string_view id) {
  for (const auto& t : tolerance_table()) {
    if (t.id == id) return t;
  }
  throw std::out_of_range("unknown tolerance id: " + std::string(id));
}

std::string to_string(Target t) {
  switch (t) {
    case Target::appendix_d: return "appendix_d";
    case Target::appendix_e: return "appendix_e";
    case Target::appendix_f: return "appendix_f";
    case Target::example1: return "example1";
    case Target::all: return "all";
  }
  return "unknown";
}

std::optional<Target> target_from_string(std::string_view s) {
  for (Target t : {Target::appendix_d, Target::appendix_e, Target::appendix_f, Target::example1, Target::all}) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

namespace {

DerivedModel load(const std::filesystem::path& dir, const char* name) {
  return derived_model(load_mdp_spec(dir / name));
}

std::string interval_text(const Tolerance& t) {
  if (t.lo == t.hi) return io::format_double(t.lo);
  std::ostringstream os;
  if (std::isinf(t.hi)) {
    os << "> " << io::format_double(t.lo);
  } else {
    os << "[" << io::format_double(t.lo) << ", " << io::format_double(t.hi) << "]";
  }
  return os.str();
}

std::string fixed4(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << x;
  return os.str();
}

CheckResult exact_int(std::string_view id, std::optional<int> observed) {
  const Tolerance& t = tolerance(id);
  CheckResult r{std::string(id), interval_text(t), observed ? std::to_string(*observed) : "none", false};
  r.pass = observed && *observed == static_cast<int>(t.lo);
  return r;
}

CheckResult in_range(std::string_view id, double observed) {
  const Tolerance& t = tolerance(id);
  CheckResult r{std::string(id), interval_text(t), fixed4(observed), false};
  r.pass = std::isinf(t.hi) ? observed > t.lo : (observed >= t.lo && observed <= t.hi);
  return r;
}

CheckResult boolean(std::string id, bool expected, bool observed) {
  return {std::move(id), expected ? "true" : "false", observed ? "true" : "false", expected == observed};
}

}  // namespace

std::vector<CheckResult> appendix_d(const std::filesystem::path& fixture_dir) {
  const DerivedModel m = load(fixture_dir, "mdp_d.json");
  const int n_max = static_cast<int>(tolerance("appendix_d.search_n_max").lo);
  const BoundSet b = bound_set(m, n_max);
  return {exact_int("appendix_d.bound_n1", b.n1_upper),
          exact_int("appendix_d.bound_n2", b.n2_upper),
          exact_int("appendix_d.bound_nth", b.nth_upper),
          exact_int("appendix_d.min_n_schur", b.min_n_schur),
          exact_int("appendix_d.min_n_contraction_inf", b.min_n_contraction_inf),
          exact_int("appendix_d.min_n_hurwitz", b.min_n_hurwitz)};
}

std::vector<CheckResult> appendix_e(const std::filesystem::path& fixture_dir) {
  const DerivedModel m = load(fixture_dir, "mdp_e.json");
  const TdMatrix s1 = td_matrix_s(m, 1);
  const TdMatrix s2 = td_matrix_s(m, 2);
  return {in_range("appendix_e.s_n1", s1.s(0, 0)),
          in_range("appendix_e.s_n2", s2.s(0, 0)),
          boolean("appendix_e.hurwitz_n1", true, s1.hurwitz),
          boolean("appendix_e.hurwitz_n2", false, s2.hurwitz)};
}

std::vector<CheckResult> appendix_f(const std::filesystem::path& fixture_dir) {
  const DerivedModel m = load(fixture_dir, "mdp_f.json");
  const NthBound b = bound_nth(m);
  CheckResult winner{"appendix_f.winning_branch", "q2", b.winner == NthBranch::spectral_ratio ? "q2" : "q1", false};
  winner.pass = b.winner == NthBranch::spectral_ratio;
  return {in_range("appendix_f.ratio_q1", b.ratio_q1), in_range("appendix_f.ratio_q2", b.ratio_q2), winner};
}

std::vector<CheckResult> example1(const std::filesystem::path& fixture_dir) {
  const DerivedModel m = load(fixture_dir, "example1.json");
  const double det = linalg::determinant(pbe_matrix_n(m, 1));
  const double rho = linalg::eig_general(m.pi_proj * discounted_power(m, 1)).spectral_radius;
  return {in_range("example1.abs_det_n", std::abs(det)), in_range("example1.rho_gamma_pi_p", rho)};
}

std::vector<CheckResult> run(Target target, const std::filesystem::path& fixture_dir) {
  switch (target) {
    case Target::appendix_d: return appendix_d(fixture_dir);
    case Target::appendix_e: return appendix_e(fixture_dir);
    case Target::appendix_f: return appendix_f(fixture_dir);
    case Target::example1: return example1(fixture_dir);
    case Target::all: break;
  }
  std::vector<std::future<std::vector<CheckResult>>> jobs;
  for (Target t : {Target::appendix_d, Target::appendix_e, Target::appendix_f, Target::example1}) {
    jobs.push_back(std::async(std::launch::async, [t, &fixture_dir] { return run(t, fixture_dir); }));
  }
  std::vector<CheckResult> out;
  for (auto& j : jobs) {
    auto part = j.get();
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::string format_table(const std::vector<CheckResult>& results) {
  std::size_t w = 5;
  for (const auto& r : results) w = std::max(w, r.id.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << "check" << "  " << std::setw(16) << "expected"
     << "  " << std::setw(12) << "observed" << "  result\n";
  for (const auto& r : results) {
    os << std::left << std::setw(static_cast<int>(w)) << r.id << "  " << std::setw(16) << r.expected << "  "
       << std::setw(12) << r.observed << "  " << (r.pass ? "PASS" : "FAIL") << '\n';
  }
  return os.str();
}

}  // namespace ntd::repro
