#pragma once

// Reproduction checks for the shipped fixtures, driven by one versioned
// tolerance table (mirrored in docs/tolerances.md).

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ntd::repro {

inline constexpr int kToleranceTableVersion = 1;

/// Closed interval [lo, hi]; integer checks use lo == hi.
struct Tolerance {
  std::string_view id;
  double lo;
  double hi;
};

const std::vector<Tolerance>& tolerance_table();
/// Throws std::out_of_range for an unknown id.
const Tolerance& tolerance(std::string_view id);

struct CheckResult {
  std::string id;
  std::string expected;
  std::string observed;
  bool pass = false;
};

enum class Target { appendix_d, appendix_e, appendix_f, example1, all };
std::string to_string(Target t);
std::optional<Target> target_from_string(std::string_view s);

std::vector<CheckResult> appendix_d(const std::filesystem::path& fixture_dir);
std::vector<CheckResult> appendix_e(const std::filesystem::path& fixture_dir);
std::vector<CheckResult> appendix_f(const std::filesystem::path& fixture_dir);
std::vector<CheckResult> example1(const std::filesystem::path& fixture_dir);

/// `all` runs the four groups concurrently and concatenates them in order.
std::vector<CheckResult> run(Target target, const std::filesystem::path& fixture_dir);

/// Fixed-width table of expected vs observed values.
std::string format_table(const std::vector<CheckResult>& results);

}  // namespace ntd::repro
