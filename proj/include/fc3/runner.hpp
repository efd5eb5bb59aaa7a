#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fc3/executor.hpp"

namespace fc3 {

/// One CSV row per trial.
struct ResultRow {
  std::string scenario;
  std::string system;
  std::string interference;
  int trial = 0;
  std::string outcome;  // success | infeasible | timeout
  double sim_time_s = 0.0;
  long ticks = 0;
  int chain_switches = 0;
  std::vector<std::string> controllers_entered;

  static ResultRow from(const TrialResult& r);
  bool operator==(const ResultRow&) const = default;
};

inline constexpr std::array<const char*, 9> csv_columns = {
    "scenario", "system", "interference", "trial", "outcome", "sim_time_s", "ticks", "chain_switches",
    "controllers_entered"};

std::string csv_header();
/// Fields quoted only when they contain a comma, quote or newline; entered controllers joined by ';'.
std::string csv_line(const ResultRow& row);
void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
/// Throws std::runtime_error on a header mismatch or malformed row.
std::vector<ResultRow> read_csv(std::istream& in);

/// Per (scenario, system, interference) summary.
struct CellSummary {
  std::string scenario;
  std::string system;
  std::string interference;
  int trials = 0;
  int successes = 0;
  int infeasible = 0;
  int timeouts = 0;
  std::optional<double> mean_success_time;  // over successful trials
};

/// Cells in order of first appearance.
std::vector<CellSummary> aggregate(const std::vector<ResultRow>& rows);
/// Text table: one row per scenario and system, one column per interference; "-" when no trial succeeded.
std::string format_aggregate(const std::vector<CellSummary>& cells);

struct BatchSpec {
  std::vector<const Scenario*> scenarios;
  std::vector<System> systems;
  std::vector<std::string> interferences;  // empty: every interference of each scenario
  int trials = 5;
  std::uint64_t seed = 0;
};

using BatchProgress = std::function<void(const ResultRow&)>;

/// Runs every scenario x system x interference x trial; rows in that nesting order.
std::vector<ResultRow> run_batch(const BatchSpec& spec, const BatchProgress& progress = {});

}  // namespace fc3
