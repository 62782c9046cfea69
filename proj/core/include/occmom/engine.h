#pragma once

// Query execution: moment intervals, cell-mass intervals and consistency
// checks on top of the relaxation and the conic backend.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "occmom/conic.h"
#include "occmom/problem.h"
#include "occmom/relaxation.h"

namespace occmom {

struct EngineSettings {
  SolverSettings solver;
  /// Worker threads for run_queries.
  int jobs = 1;
  /// Overrides every query's relaxation order when set.
  std::optional<int> order;
  /// Lowest order tried by the consistency ascent.
  int min_consistency_order = 1;
  /// Minimum certificate margin required to report invalidation.
  double certificate_margin = 1e-6;
  /// Null means the default interior-point backend.
  std::shared_ptr<const SdpBackend> backend;
};

struct BoundResult {
  Query query;
  int order = 0;
  double lower = -kInf;
  double upper = kInf;
  SolveReport min_report;
  SolveReport max_report;
  double wall_ms = 0.0;
  /// Set when the relaxation was proven infeasible with a sufficient margin
  /// while bounding; the data are then inconsistent with the model.
  bool invalidated = false;
  double width() const { return upper - lower; }
};

enum class Verdict { not_invalidated, invalidated, undecided };

std::string to_string(Verdict v);

struct ConsistencyVerdict {
  Verdict outcome = Verdict::undecided;
  /// Order at which the outcome was established (highest order tried when
  /// not invalidated).
  int order = 0;
  /// Certificate margin when invalidated.
  double margin = 0.0;
  std::optional<InfeasibilityCertificate> certificate;
  /// One report per order tried, ascending.
  std::vector<SolveReport> reports;
  std::string message;
};

/// Minimizes and maximizes the moment of x^exponents at time index k.
BoundResult bound_moment(const EstimationProblem& problem, std::size_t k,
                         const std::vector<int>& exponents, int order,
                         const EngineSettings& settings = {});

/// Minimizes and maximizes the mass of a partition cell.
BoundResult bound_mass(const EstimationProblem& problem, std::size_t cell,
                       int order, const EngineSettings& settings = {});

/// Bounds a moment or mass query on an existing relaxation skeleton.
BoundResult bound_query(const Relaxation& relaxation, const Query& query,
                        const EngineSettings& settings = {});

/// Feasibility checks for r = settings.min_consistency_order .. max_order;
/// stops at the first order with a certified infeasibility.
ConsistencyVerdict check_consistency(const EstimationProblem& problem,
                                     int max_order,
                                     const EngineSettings& settings = {});

struct QueryResult {
  Query query;
  std::optional<BoundResult> bound;
  std::optional<ConsistencyVerdict> verdict;
  /// Non-empty when the query failed; other queries are unaffected.
  std::string error;
};

/// Executes every query of the problem; results follow query order.
std::vector<QueryResult> run_queries(const EstimationProblem& problem,
                                     const EngineSettings& settings = {});
std::vector<QueryResult> run_queries(const EstimationProblem& problem,
                                     const std::vector<Query>& queries,
                                     const EngineSettings& settings = {});

/// Order used for a query under the given settings.
int effective_order(const EstimationProblem& problem, const Query& query,
                    const EngineSettings& settings);

}  // namespace occmom
