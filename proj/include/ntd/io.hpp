#pragma once

// JSON and CSV serialisation of reports and traces, fixture hashing and the
// run manifest written next to CLI outputs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ntd/analysis.hpp"
#include "ntd/dp.hpp"
#include "ntd/td.hpp"

namespace ntd::io {

using nlohmann::json;

json to_json(const Matrix& m);
json to_json(const linalg::Spectrum& s);
json to_json(const NthBound& b);
json to_json(const StabilityReport& r);
json to_json(const BoundSet& b);
json to_json(const SearchResult& r);
json to_json(const TdRunConfig& c);

/// Summary of a trace without the per-step parameters.
json trace_summary(const IterationTrace& t);

/// Shortest round-trip decimal form; "nan", "inf" and "-inf" for
/// non-finite values.
std::string format_double(double x);

/// Header `k,theta_0..theta_{m-1},err_inf`, plus `alpha_k,rho_clipped` for
/// TD traces. err_inf is empty when theta*^n is undefined; alpha_k and
/// rho_clipped are empty on the initial row.
std::string trace_csv(const IterationTrace& t);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
/// fnv1a64 of the file contents, as hex.
std::string file_hash(const std::filesystem::path& path);

struct CheckRecord {
  std::string id;
  bool pass = false;
};

struct RunManifest {
  std::vector<std::string> command_line;
  std::string fixture_path;
  std::string fixture_hash;
  std::vector<std::uint64_t> seeds;
  json config = json::object();
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;
  std::vector<CheckRecord> checks;

  json to_json() const;
};

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ntd::io
