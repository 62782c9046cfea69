#pragma once

// JSON / CSV serialization of query results, certificates and oracle data.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "occmom/engine.h"
#include "occmom/oracle.h"
#include "occmom/problem.h"

namespace occmom {

/// Settings of one CLI run, embedded in every JSON result for provenance.
struct RunConfig {
  std::string subcommand;
  std::string problem_path;
  std::string out_dir;
  std::optional<int> order;
  double tol_feas = 1e-7;
  double tol_gap = 1e-7;
  int max_iterations = 200;
  int jobs = 1;
  std::uint64_t seed = 1;
  std::string backend;
  std::string version;
  /// Oracle runs only.
  std::optional<std::size_t> samples;
  std::optional<double> slack;
};

/// Columns: id, kind, time, exponents/cell, lower, upper, order, status_min,
/// status_max, wall_ms. With @p timings false the wall_ms column is left
/// empty so repeated runs produce identical files.
std::string results_csv(const EstimationProblem& problem,
                        const std::vector<QueryResult>& results,
                        bool timings = true);

std::string results_json(const EstimationProblem& problem,
                         const std::vector<QueryResult>& results,
                         const RunConfig& config);

/// Per-cell mass table: cell, bounds of every partitioned state, lower,
/// upper (one row per mass query result).
std::string mass_table_csv(const EstimationProblem& problem,
                           const std::vector<QueryResult>& results);

std::string verdict_json(const ConsistencyVerdict& verdict,
                         const RunConfig& config);

/// Moment data in the problem-file "moments" schema, with the estimates'
/// means and standard errors alongside.
std::string moment_data_json(const EstimationProblem& problem,
                             const std::vector<MomentEstimate>& estimates,
                             const std::vector<MomentBound>& bounds,
                             const RunConfig& config);

std::string cell_masses_csv(const EstimationProblem& problem,
                            const std::vector<Estimate>& masses);

std::string version_string();

}  // namespace occmom
