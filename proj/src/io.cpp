#include "ntd/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ntd::io {

json to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    rows.push_back(json(std::vector<double>(row.begin(), row.end())));
  }
  return rows;
}

json to_json(const linalg::Spectrum& s) {
  json ev = json::array();
  for (const auto& z : s.eigenvalues) ev.push_back({z.real(), z.imag()});
  return {{"eigenvalues", ev}, {"spectral_radius", s.spectral_radius}, {"max_real_part", s.max_real_part}};
}

json to_json(const NthBound& b) {
  return {{"value", b.value},
          {"q1", b.q1},
          {"q2", b.q2},
          {"ratio_q1", b.ratio_q1},
          {"ratio_q2", b.ratio_q2},
          {"winner", b.winner == NthBranch::feature_norm ? "q1" : "q2"}};
}

namespace {

json optional_int(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const StabilityReport& r) {
  return {{"n", r.n},
          {"matrix_a", to_json(r.matrix_a)},
          {"matrix_n", to_json(r.matrix_n)},
          {"matrix_s", to_json(r.matrix_s)},
          {"a_spectrum", to_json(r.a_spectrum)},
          {"s_spectrum", to_json(r.s_spectrum)},
          {"a_is_schur", r.a_is_schur},
          {"a_marginal", r.a_marginal},
          {"n_is_nonsingular", r.n_is_nonsingular},
          {"n_determinant", r.n_determinant},
          {"s_is_hurwitz", r.s_is_hurwitz},
          {"s_marginal", r.s_marginal},
          {"s_symmetric_part_negdef", r.s_symmetric_part_negdef},
          {"inf_norm_contraction", r.inf_norm_contraction},
          {"gamma_n_pi_norm", r.gamma_n_pi_norm},
          {"alpha_star_lower", r.alpha_star_lower ? json(*r.alpha_star_lower) : json(nullptr)}};
}

json to_json(const BoundSet& b) {
  return {{"n1_upper", b.n1_upper},
          {"n2_upper", b.n2_upper},
          {"nth_upper", b.nth_upper},
          {"nth_detail", to_json(b.nth_detail)},
          {"min_n_schur", optional_int(b.min_n_schur)},
          {"min_n_contraction_inf", optional_int(b.min_n_contraction_inf)},
          {"min_n_hurwitz", optional_int(b.min_n_hurwitz)},
          {"search_cap", b.search_cap}};
}

json to_json(const SearchResult& r) {
  return {{"min_n", optional_int(r.min_n)}, {"bitmap", r.bitmap}, {"n_max", r.n_max}};
}

json to_json(const TdRunConfig& c) {
  json j = {{"algorithm", to_string(c.algorithm)},
            {"n", c.n},
            {"schedule", {{"kind", "harmonic"}, {"a", c.schedule.a}, {"b", c.schedule.b}}},
            {"clip", c.clip ? json(*c.clip) : json(nullptr)},
            {"seed", c.seed},
            {"max_iters", c.max_iters},
            {"record_every", c.record_every},
            {"tol", c.tol}};
  j["theta0"] = c.theta0 ? json(*c.theta0) : json(nullptr);
  return j;
}

json trace_summary(const IterationTrace& t) {
  json j = {{"algorithm", to_string(t.algorithm)},
            {"n", t.n},
            {"iterations", t.steps.empty() ? 0 : t.steps.back()},
            {"converged", t.converged},
            {"diverged", t.diverged},
            {"tolerance", t.tolerance},
            {"final_params", t.final_params()}};
  j["final_error"] = std::isfinite(t.final_error) ? json(t.final_error) : json(format_double(t.final_error));
  const auto err = t.final_error_to_fixed_point();
  j["final_error_to_fixed_point"] = err && std::isfinite(*err) ? json(*err) : json(nullptr);
  j["step_size"] = t.step_size ? json(*t.step_size) : json(nullptr);
  if (!t.schedule.empty()) j["schedule"] = t.schedule;
  return j;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string trace_csv(const IterationTrace& t) {
  const bool td = t.algorithm == Algorithm::td_iid || t.algorithm == Algorithm::td_markov;
  const std::size_t m = t.params.empty() ? 0 : t.params.front().size();
  std::ostringstream os;
  os << "k";
  for (std::size_t j = 0; j < m; ++j) os << ",theta_" << j;
  os << ",err_inf";
  if (td) os << ",alpha_k,rho_clipped";
  os << '\n';
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    os << t.steps[i];
    for (double v : t.params[i]) os << ',' << format_double(v);
    os << ',';
    if (i < t.errors_to_fixed_point.size()) os << format_double(t.errors_to_fixed_point[i]);
    if (td) {
      os << ',';
      if (i < t.alphas.size() && !std::isnan(t.alphas[i])) os << format_double(t.alphas[i]);
      os << ',';
      if (i < t.rhos.size() && !std::isnan(t.rhos[i])) os << format_double(t.rhos[i]);
    }
    os << '\n';
  }
  return os.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string file_hash(const std::filesystem::path& path) { return hex64(fnv1a64(read_text(path))); }

json RunManifest::to_json() const {
  json checks_json = json::array();
  for (const auto& c : checks) checks_json.push_back({{"id", c.id}, {"pass", c.pass}});
  return {{"command_line", command_line},
          {"fixture", {{"path", fixture_path}, {"hash", fixture_hash}}},
          {"seeds", seeds},
          {"config", config},
          {"outputs", outputs},
          {"wall_seconds", wall_seconds},
          {"checks", checks_json}};
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace ntd::io
