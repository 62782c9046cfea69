#pragma once

// Declarative data model of one estimation / invalidation task.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "occmom/distribution.h"
#include "occmom/poly.h"

namespace occmom {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// x' = f(t, x) on the unit horizon [0, 1]. Parameters are states with
/// zero dynamics.
struct DynamicalSystem {
  std::vector<std::string> state_names;
  std::vector<Polynomial> field;

  std::size_t n_x() const { return state_names.size(); }
  /// max_i deg(f_i), with the zero field counted as degree 0.
  int degree() const;
};

/// Semialgebraic set {x : g_i(t, x) >= 0}.
struct SupportSet {
  std::string label;
  std::vector<Polynomial> inequalities;
};

struct Interval {
  double lower = -kInf;
  double upper = kInf;
};

/// Interval data l <= nu_k(x^exponents) <= u on a raw moment at time t_k.
struct MomentBound {
  std::size_t time_index = 0;
  std::vector<int> exponents;
  double lower = -kInf;
  double upper = kInf;

  int degree() const;
  bool is_pin() const { return lower == upper; }
};

/// Axis-aligned box over the partitioned states.
struct CellBox {
  std::vector<double> lower;
  std::vector<double> upper;
  bool contains(const std::vector<double>& point) const;
};

/// Spatial split of the measure at `time_index` into cells.
struct Partition {
  std::size_t time_index = 0;
  /// Indices of the states the cells are boxes over.
  std::vector<std::size_t> states;
  /// Cells per partitioned state when the partition is a regular grid.
  std::vector<int> grid;
  std::vector<CellBox> cells;

  /// Index of the cell containing @p point (coordinates over `states`).
  /// Points on shared faces go to the cell with the larger index.
  std::optional<std::size_t> locate(const std::vector<double>& point) const;
};

enum class QueryKind { moment, mass, consistency };

struct Query {
  QueryKind kind = QueryKind::moment;
  std::string id;
  std::size_t time_index = 0;  // moment
  std::vector<int> exponents;  // moment
  std::size_t cell = 0;        // mass
  std::optional<int> order;
};

/// Fabrication settings for the data-generation oracle.
struct OracleSettings {
  std::size_t samples = 10000;
  std::uint64_t seed = 1;
  double step = 1e-3;
  int degree = 10;
  double slack = 0.01;
  std::vector<std::size_t> time_indices;
  std::vector<std::size_t> states;
};

struct EstimationProblem {
  DynamicalSystem system;
  /// Bounding box per state; missing entries mean unbounded.
  std::vector<std::optional<Interval>> box;
  /// Additional inequalities of the global set X beyond the box.
  std::vector<Polynomial> global_inequalities;
  std::vector<double> times;
  /// Support data X_k, one entry per time index (possibly empty).
  std::vector<SupportSet> support;
  std::vector<MomentBound> moments;
  std::optional<Partition> partition;
  std::optional<InitialDistribution> oracle;
  std::optional<OracleSettings> oracle_settings;
  std::vector<Query> queries;
  /// Default relaxation order for queries without one.
  int order = 2;

  std::size_t n_x() const { return system.n_x(); }
  std::size_t n_times() const { return times.size(); }

  /// Global set X: box inequalities (x_i - a >= 0, b - x_i >= 0) followed by
  /// the additional global inequalities.
  SupportSet global_support() const;
};

enum class Severity { error, warning };

struct Diagnostic {
  Severity severity = Severity::error;
  std::string path;
  std::string message;
};

/// Checks every data-model invariant. Empty result iff all hold.
std::vector<Diagnostic> validate(const EstimationProblem& problem);

bool has_errors(const std::vector<Diagnostic>& diagnostics);

class ProblemError : public std::runtime_error {
 public:
  ProblemError(std::string path, const std::string& message)
      : std::runtime_error(path.empty() ? message : path + ": " + message),
        path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Regular grid over the given states' box ranges; cells ordered with the
/// first state varying slowest.
Partition make_grid_partition(const EstimationProblem& problem,
                              std::size_t time_index,
                              std::vector<std::size_t> states,
                              std::vector<int> grid);

EstimationProblem parse_problem(const std::string& json_text);
/// Reads, parses and validates a problem file; throws ProblemError with a
/// field path on the first error.
EstimationProblem load_problem(const std::filesystem::path& path);
std::string serialize_problem(const EstimationProblem& problem);
void save_problem(const EstimationProblem& problem,
                  const std::filesystem::path& path);

std::string to_string(QueryKind kind);

}  // namespace occmom
