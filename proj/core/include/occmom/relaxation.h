#pragma once

// Order-r moment relaxation of the time-split occupation-measure formulation:
// Liouville rows per grid interval, normalization, moment data, and moment /
// localizing matrices for every measure, assembled into one ConicProgram.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "occmom/conic.h"
#include "occmom/poly.h"
#include "occmom/problem.h"

namespace occmom {

enum class MeasureKind { endpoint, occupation, cell };

/// Truncated moment sequence of one unknown measure, stored as a contiguous
/// column range of the stacked program vector.
///
/// Coordinates declared as pinned Dirac laws at the initial time are
/// eliminated: a moment of x_i^m x^g is c^m times the moment of x^g, so the
/// measure only carries columns for monomials in the remaining coordinates.
struct MeasureVar {
  MeasureKind kind = MeasureKind::endpoint;
  /// Endpoint: k. Occupation: k for the interval [t_k, t_{k+1}]. Cell: the
  /// partition's time index.
  std::size_t time_index = 0;
  std::size_t cell = 0;
  std::size_t offset = 0;
  std::size_t n_x = 0;
  /// Window [t_lo, t_hi]; t_lo == t_hi for endpoint and cell measures.
  double t_lo = 0.0;
  double t_hi = 0.0;
  /// States carried by the columns, in increasing order.
  std::vector<std::size_t> free_states;
  /// Per state: the Dirac value when the state is eliminated.
  std::vector<std::optional<double>> pinned;
  /// Monomials over (t, free states) or (free states) of degree <= 2r.
  MonomialOrdering ordering;
  /// Per state range used for the column boxes (may be infinite).
  std::vector<Interval> box;
  /// Support polynomials g >= 0 over the reduced variables.
  std::vector<Polynomial> localizers;
  std::vector<std::string> localizer_labels;

  std::size_t size() const { return ordering.size(); }
  std::string name() const;
  /// Maps a monomial over (t, x) (all states) to its reduced counterpart and
  /// the constant factor contributed by eliminated coordinates.
  std::pair<Monomial, double> reduce(const Monomial& m) const;
  /// Reduces a polynomial over (t, x): substitutes eliminated coordinates and
  /// re-indexes over the free states.
  Polynomial reduce(const Polynomial& p) const;
  /// Linear form of the moment of @p m (a monomial over all states).
  LinearForm moment(const Monomial& m) const;
  /// Column of a reduced monomial.
  std::size_t column(const Monomial& reduced) const;
  std::string label(const Monomial& reduced,
                    const std::vector<std::string>& state_names) const;
};

/// All test functions v = t^a x^b with deg v <= 2r + 1 - max(1, deg f).
std::vector<Monomial> test_monomials(int order, const DynamicalSystem& system);

/// Block indexed by reduced monomials of degree <= r; entry (i, j) is the
/// moment of m_i m_j.
PsdBlock moment_matrix(const MeasureVar& measure, int order);

/// Block indexed by reduced monomials of degree <= r - ceil(deg g / 2);
/// entry (i, j) is the moment of g m_i m_j. @p g is over the reduced
/// variables of the measure.
PsdBlock localizing_matrix(const MeasureVar& measure, const Polynomial& g,
                           int order);

struct RelaxationOptions {
  /// Replace the partition-time measure by one measure per partition cell.
  bool split_cells = false;
  /// Attach support localizers (the time window is always attached).
  bool localizers = true;
};

/// Objective on the relaxation: moment of x^exponents at a time index, mass
/// of a partition cell, or nothing (feasibility).
struct Objective {
  enum class Kind { none, moment, mass };
  Kind kind = Kind::none;
  std::size_t time_index = 0;
  std::vector<int> exponents;
  std::size_t cell = 0;
  Sense sense = Sense::minimize;

  static Objective moment(std::size_t k, std::vector<int> exponents,
                          Sense sense);
  static Objective mass(std::size_t cell, Sense sense);
};

/// Shared assembly skeleton: everything except the objective. Immutable once
/// constructed; objectives are swapped by copying the skeleton program.
class Relaxation {
 public:
  Relaxation(const EstimationProblem& problem, int order,
             RelaxationOptions options = {});

  int order() const { return order_; }
  const RelaxationOptions& options() const { return options_; }
  const std::vector<MeasureVar>& measures() const { return measures_; }
  std::size_t n_vars() const { return skeleton_.n_vars; }
  const ConicProgram& skeleton() const { return skeleton_; }
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }
  const std::vector<Monomial>& tests() const { return tests_; }

  /// Moment of a state monomial at time index k (sums cells when split).
  LinearForm moment(std::size_t time_index, const std::vector<int>& exponents) const;
  LinearForm moment(std::size_t time_index, const Monomial& m) const;
  /// Mass column of a partition cell (requires split_cells).
  LinearForm cell_mass(std::size_t cell) const;

  const MeasureVar& endpoint(std::size_t k) const;
  const MeasureVar& occupation(std::size_t k) const;

  /// Liouville rows of interval k, one per test monomial.
  std::vector<LinearConstraint> liouville_rows(std::size_t k) const;
  /// Unit mass of endpoint measures; with cells, their sum is one and each
  /// cell mass lies in [0, 1].
  std::vector<LinearConstraint> normalization_rows() const;
  /// Interval moment data of degree <= 2r (others are reported and skipped).
  std::vector<LinearConstraint> moment_data_rows() const;

  std::size_t liouville_row_count() const { return n_liouville_rows_; }
  std::size_t normalization_row_count() const { return n_normalization_rows_; }

  ConicProgram program(const Objective& objective) const;

 private:
  void build_measures();
  void build_program();
  MeasureVar make_measure(MeasureKind kind, std::size_t k, std::size_t cell) const;

  EstimationProblem problem_;
  int order_;
  RelaxationOptions options_;
  std::vector<Monomial> tests_;
  std::vector<MeasureVar> measures_;
  std::vector<std::size_t> endpoint_index_;    // per time index, or npos
  std::vector<std::size_t> occupation_index_;  // per interval
  std::vector<std::size_t> cell_index_;        // per cell
  std::size_t n_liouville_rows_ = 0;
  std::size_t n_normalization_rows_ = 0;
  ConicProgram skeleton_;
  std::vector<Diagnostic> diagnostics_;
};

/// One-shot convenience: assemble a relaxation and attach the objective.
ConicProgram assemble(const EstimationProblem& problem,
                      const Objective& objective, int order);

}  // namespace occmom
