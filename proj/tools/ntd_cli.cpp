// ntd: command-line front end for the n-step TD analysis library.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ntd/analysis.hpp"
#include "ntd/dp.hpp"
#include "ntd/io.hpp"
#include "ntd/repro.hpp"
#include "ntd/td.hpp"

#ifndef NTD_FIXTURE_DIR
#define NTD_FIXTURE_DIR "fixtures"
#endif

namespace fs = std::filesystem;
using ntd::io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitExpectation = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string fixture;
  std::string out;
  std::string format = "json";
  std::vector<std::string> argv;
};

// A bare fixture name falls back to the shipped fixture directory.
fs::path resolve_fixture(const std::string& name) {
  const fs::path p(name);
  if (fs::exists(p)) return p;
  const fs::path shipped = fs::path(NTD_FIXTURE_DIR) / p;
  if (fs::exists(shipped)) return shipped;
  if (!p.has_extension() && fs::exists(shipped.string() + ".json")) return shipped.string() + ".json";
  throw ntd::ParseError("fixture not found: " + name);
}

void add_fixture(CLI::App* cmd, Common& c) {
  cmd->add_option("fixture", c.fixture, "MDP file, or the name of a shipped fixture")->required();
  cmd->add_option("--out", c.out, "Output directory (stdout when omitted)");
  cmd->add_option("--format", c.format, "Stdout format")->check(CLI::IsMember({"json", "csv"}));
}

class Outputs {
 public:
  Outputs(const Common& c, const fs::path& fixture) : common_(c), start_(std::chrono::steady_clock::now()) {
    manifest_.command_line = c.argv;
    manifest_.fixture_path = fixture.string();
    manifest_.fixture_hash = ntd::io::file_hash(fixture);
  }

  bool to_disk() const { return !common_.out.empty(); }
  ntd::io::RunManifest& manifest() { return manifest_; }

  void write(const std::string& name, const std::string& text) {
    const fs::path p = fs::path(common_.out) / name;
    ntd::io::write_text(p, text);
    manifest_.outputs.push_back(p.string());
  }

  void finish() {
    if (!to_disk()) return;
    manifest_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    ntd::io::write_text(fs::path(common_.out) / "manifest.json", manifest_.to_json().dump(2) + "\n");
  }

 private:
  const Common& common_;
  std::chrono::steady_clock::time_point start_;
  ntd::io::RunManifest manifest_;
};

// ------------------------------------------------------------------ analyze

struct AnalyzeArgs {
  int n_max = 60;
};

int cmd_analyze(const Common& c, const AnalyzeArgs& a) {
  const fs::path fixture = resolve_fixture(c.fixture);
  const ntd::DerivedModel model = ntd::derived_model(ntd::load_mdp_spec(fixture));
  Outputs out(c, fixture);

  const ntd::BoundSet bounds = ntd::bound_set(model, a.n_max);
  json reports = json::array();
  std::ostringstream csv;
  csv << "n,a_spectral_radius,a_is_schur,n_determinant,s_max_real_part,s_is_hurwitz,"
         "s_symmetric_part_negdef,gamma_n_pi_norm\n";
  for (int n = 1; n <= a.n_max; ++n) {
    const ntd::StabilityReport r = ntd::stability_report(model, n);
    reports.push_back(ntd::io::to_json(r));
    csv << n << ',' << ntd::io::format_double(r.a_spectrum.spectral_radius) << ',' << r.a_is_schur << ','
        << ntd::io::format_double(r.n_determinant) << ',' << ntd::io::format_double(r.s_spectrum.max_real_part)
        << ',' << r.s_is_hurwitz << ',' << r.s_symmetric_part_negdef << ','
        << ntd::io::format_double(r.gamma_n_pi_norm) << '\n';
  }
  json doc = {{"fixture", fixture.string()},
              {"fixture_hash", out.manifest().fixture_hash},
              {"n_max", a.n_max},
              {"bound_set", ntd::io::to_json(bounds)},
              {"stability_reports", reports}};
  out.manifest().config = {{"n_max", a.n_max}};

  if (out.to_disk()) {
    out.write("analysis.json", doc.dump(2) + "\n");
    out.write("stability.csv", csv.str());
    out.finish();
  } else if (c.format == "csv") {
    std::cout << csv.str();
  } else {
    std::cout << doc.dump(2) << '\n';
  }
  return kExitOk;
}

// ------------------------------------------------------------------ pvi / richardson

struct DpArgs {
  int n = 1;
  std::size_t iters = ntd::kDefaultMaxIters;
  double tol = ntd::kDefaultTol;
  std::string alpha = "auto";
  std::vector<double> theta0;
  bool expect_converge = false;
};

std::vector<double> initial_theta(const ntd::DerivedModel& model, const std::vector<double>& given) {
  if (given.empty()) return ntd::Vector(model.num_features(), 0.0);
  if (given.size() != model.num_features()) {
    throw ntd::ValidationError("--theta0 needs " + std::to_string(model.num_features()) + " values");
  }
  return given;
}

int emit_dp(const Common& c, Outputs& out, const ntd::IterationTrace& trace, const std::string& run_id,
            bool expect_converge) {
  const json summary = ntd::io::trace_summary(trace);
  if (out.to_disk()) {
    out.write(run_id + ".csv", ntd::io::trace_csv(trace));
    out.write(run_id + ".json", summary.dump(2) + "\n");
    out.manifest().checks.push_back({"converged", trace.converged});
    out.finish();
  } else if (c.format == "csv") {
    std::cout << ntd::io::trace_csv(trace);
  } else {
    std::cout << summary.dump(2) << '\n';
  }
  if (expect_converge && !trace.converged) {
    std::cerr << "expected convergence, run " << (trace.diverged ? "diverged" : "did not converge") << '\n';
    return kExitExpectation;
  }
  return kExitOk;
}

int cmd_pvi(const Common& c, const DpArgs& a) {
  const fs::path fixture = resolve_fixture(c.fixture);
  const ntd::DerivedModel model = ntd::derived_model(ntd::load_mdp_spec(fixture));
  Outputs out(c, fixture);
  ntd::DpOptions opt;
  opt.max_iters = a.iters;
  opt.tol = a.tol;
  const ntd::IterationTrace trace = ntd::n_pvi(model, a.n, initial_theta(model, a.theta0), opt);
  out.manifest().config = {{"n", a.n}, {"iters", a.iters}, {"tol", a.tol}};
  return emit_dp(c, out, trace, "pvi_n" + std::to_string(a.n), a.expect_converge);
}

double resolve_alpha(const ntd::DerivedModel& model, int n, const std::string& text) {
  if (text == "auto") {
    const ntd::TdMatrix s = ntd::td_matrix_s(model, n);
    if (!s.hurwitz) throw ntd::ValidationError("--alpha auto needs a Hurwitz S at this n");
    return 0.5 * ntd::alpha_star_bound(s.s);
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(v > 0.0)) throw ntd::ValidationError("--alpha must be a positive number or 'auto'");
  return v;
}

int cmd_richardson(const Common& c, const DpArgs& a) {
  const fs::path fixture = resolve_fixture(c.fixture);
  const ntd::DerivedModel model = ntd::derived_model(ntd::load_mdp_spec(fixture));
  Outputs out(c, fixture);
  const double alpha = resolve_alpha(model, a.n, a.alpha);
  ntd::DpOptions opt;
  opt.max_iters = a.iters;
  opt.tol = a.tol;
  const ntd::IterationTrace trace = ntd::richardson(model, a.n, alpha, initial_theta(model, a.theta0), opt);
  out.manifest().config = {{"n", a.n}, {"alpha", alpha}, {"iters", a.iters}, {"tol", a.tol}};
  return emit_dp(c, out, trace, "richardson_n" + std::to_string(a.n), a.expect_converge);
}

// ------------------------------------------------------------------ td

struct TdArgs {
  std::string alg = "iid";
  int n = 1;
  std::uint64_t seed = 0;
  std::size_t num_seeds = 1;
  double a = 1.0;
  double b = 0.0;
  std::optional<double> clip;
  std::size_t iters = 100000;
  std::size_t record_every = 100;
  double tol = 1e-2;
  std::vector<double> theta0;
  bool expect_converge = false;
};

int cmd_td(const Common& c, const TdArgs& a) {
  const fs::path fixture = resolve_fixture(c.fixture);
  const ntd::DerivedModel model = ntd::derived_model(ntd::load_mdp_spec(fixture));
  Outputs out(c, fixture);

  ntd::TdRunConfig cfg;
  cfg.algorithm = a.alg == "markov" ? ntd::TdAlgorithm::markov : ntd::TdAlgorithm::iid;
  cfg.n = a.n;
  cfg.schedule = {a.a, a.b};
  cfg.clip = a.clip;
  cfg.max_iters = a.iters;
  cfg.record_every = a.record_every;
  cfg.tol = a.tol;
  if (!a.theta0.empty()) cfg.theta0 = initial_theta(model, a.theta0);
  try {
    cfg.validate();
  } catch (const ntd::PreconditionError& e) {
    throw ntd::ValidationError(e.what());
  }

  std::vector<std::uint64_t> seeds(a.num_seeds);
  std::iota(seeds.begin(), seeds.end(), a.seed);
  const std::vector<ntd::IterationTrace> traces = ntd::td_sweep(model, cfg, seeds);

  out.manifest().seeds = seeds;
  out.manifest().config = ntd::io::to_json(cfg);
  out.manifest().config.erase("seed");

  json summaries = json::array();
  bool all_converged = true;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    json s = ntd::io::trace_summary(traces[i]);
    s["seed"] = seeds[i];
    summaries.push_back(s);
    all_converged = all_converged && traces[i].converged;
  }

  if (out.to_disk()) {
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const std::string id = "td_" + a.alg + "_n" + std::to_string(a.n) + "_seed" + std::to_string(seeds[i]);
      out.write(id + ".csv", ntd::io::trace_csv(traces[i]));
      json meta = {{"config", ntd::io::to_json(cfg)},
                   {"fixture", {{"path", fixture.string()}, {"hash", out.manifest().fixture_hash}}},
                   {"summary", summaries[i]}};
      meta["config"]["seed"] = seeds[i];
      out.write(id + ".json", meta.dump(2) + "\n");
      out.manifest().checks.push_back({id + ".converged", traces[i].converged});
    }
    out.finish();
  } else if (c.format == "csv") {
    std::cout << ntd::io::trace_csv(traces.front());
  } else {
    std::cout << (summaries.size() == 1 ? summaries.front() : summaries).dump(2) << '\n';
  }
  if (a.expect_converge && !all_converged) {
    std::cerr << "expected convergence, at least one run did not converge\n";
    return kExitExpectation;
  }
  return kExitOk;
}

// ------------------------------------------------------------------ repro

struct ReproArgs {
  std::string target = "all";
  std::string out;
  std::string fixture_dir = NTD_FIXTURE_DIR;
};

int cmd_repro(const ReproArgs& a, const std::vector<std::string>& argv) {
  const auto start = std::chrono::steady_clock::now();
  const auto target = ntd::repro::target_from_string(a.target);
  if (!target) throw ntd::ValidationError("unknown repro target: " + a.target);
  const auto results = ntd::repro::run(*target, a.fixture_dir);
  std::cout << ntd::repro::format_table(results);
  bool ok = true;
  for (const auto& r : results) ok = ok && r.pass;
  std::cout << (ok ? "all checks passed" : "some checks failed") << " (tolerance table v"
            << ntd::repro::kToleranceTableVersion << ")\n";

  if (!a.out.empty()) {
    ntd::io::RunManifest m;
    m.command_line = argv;
    m.fixture_path = a.fixture_dir;
    json hashes = json::object();
    for (const char* name : {"mdp_d.json", "mdp_e.json", "mdp_f.json", "example1.json"}) {
      hashes[name] = ntd::io::file_hash(fs::path(a.fixture_dir) / name);
    }
    m.config = {{"target", a.target}, {"fixture_hashes", hashes}};
    json table = json::array();
    for (const auto& r : results) {
      m.checks.push_back({r.id, r.pass});
      table.push_back({{"id", r.id}, {"expected", r.expected}, {"observed", r.observed}, {"pass", r.pass}});
    }
    const fs::path report = fs::path(a.out) / ("repro_" + a.target + ".json");
    ntd::io::write_text(report, table.dump(2) + "\n");
    m.outputs.push_back(report.string());
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ntd::io::write_text(fs::path(a.out) / "manifest.json", m.to_json().dump(2) + "\n");
  }
  return ok ? kExitOk : kExitExpectation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"n-step off-policy TD analysis"};
  app.require_subcommand(1);

  Common common;
  common.argv.assign(argv, argv + argc);

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Bounds and stability report for each n <= n-max");
  add_fixture(analyze, common);
  analyze->add_option("--n-max", analyze_args.n_max, "Largest horizon")->check(CLI::Range(1, 100000));

  DpArgs pvi_args;
  auto* pvi = app.add_subcommand("pvi", "n-step projected value iteration");
  DpArgs rich_args;
  auto* rich = app.add_subcommand("richardson", "Richardson iteration on the n-step PBE");
  for (auto [cmd, args] : {std::pair{pvi, &pvi_args}, std::pair{rich, &rich_args}}) {
    add_fixture(cmd, common);
    cmd->add_option("--n", args->n, "Horizon")->check(CLI::Range(1, 100000));
    cmd->add_option("--iters", args->iters, "Iteration cap")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 40));
    cmd->add_option("--tol", args->tol, "Stop when the successive difference is at most this")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--theta0", args->theta0, "Initial parameters (default zero)");
    cmd->add_flag("--expect-converge", args->expect_converge, "Exit 1 unless the run converges");
  }
  rich->add_option("--alpha", rich_args.alpha, "Step size, or 'auto' for half the Lyapunov bound");

  TdArgs td_args;
  auto* td = app.add_subcommand("td", "Sample-based n-step off-policy TD");
  add_fixture(td, common);
  td->add_option("--alg", td_args.alg, "Sampling model")->check(CLI::IsMember({"iid", "markov"}));
  td->add_option("--n", td_args.n, "Horizon")->check(CLI::Range(1, 100000));
  td->add_option("--seed", td_args.seed, "Seed of the first run");
  td->add_option("--seeds", td_args.num_seeds, "Number of runs, seeds seed..seed+k-1")
      ->check(CLI::Range(std::size_t{1}, std::size_t{4096}));
  td->add_option("--a", td_args.a, "Step-size numerator, alpha_k = a/(k+b+1)")->check(CLI::PositiveNumber);
  td->add_option("--b", td_args.b, "Step-size offset")->check(CLI::NonNegativeNumber);
  td->add_option("--clip", td_args.clip, "Cap on the importance ratio")->check(CLI::PositiveNumber);
  td->add_option("--iters", td_args.iters, "Number of updates")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 40));
  td->add_option("--record-every", td_args.record_every, "Trace thinning")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 40));
  td->add_option("--tol", td_args.tol, "Tolerance on the final error to theta*^n")->check(CLI::PositiveNumber);
  td->add_option("--theta0", td_args.theta0, "Initial parameters (default zero)");
  td->add_flag("--expect-converge", td_args.expect_converge, "Exit 1 unless every run converges");

  ReproArgs repro_args;
  auto* repro = app.add_subcommand("repro", "Reproduction checks on the shipped fixtures");
  repro->add_option("target", repro_args.target, "appendix_d, appendix_e, appendix_f, example1 or all")
      ->check(CLI::IsMember({"appendix_d", "appendix_e", "appendix_f", "example1", "all"}));
  repro->add_option("--out", repro_args.out, "Directory for the report and manifest");
  repro->add_option("--fixture-dir", repro_args.fixture_dir, "Fixture directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(common, analyze_args);
    if (pvi->parsed()) return cmd_pvi(common, pvi_args);
    if (rich->parsed()) return cmd_richardson(common, rich_args);
    if (td->parsed()) return cmd_td(common, td_args);
    if (repro->parsed()) return cmd_repro(repro_args, common.argv);
  } catch (const ntd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
