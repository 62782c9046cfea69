#pragma once

// Solver-agnostic conic program: linear rows, variable boxes and affine PSD
// blocks over one stacked variable vector.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace occmom {

/// Sparse linear form sum_i coef_i * var_i.
struct LinearForm {
  std::vector<std::pair<std::size_t, double>> terms;

  void add(std::size_t var, double coef);
  /// Merge duplicate variables, drop zero coefficients, sort by variable.
  void canonicalize();
  double eval(const std::vector<double>& x) const;
  bool empty() const { return terms.empty(); }
};

/// Affine form constant + sum_i coef_i * var_i.
struct AffineForm {
  double constant = 0.0;
  LinearForm linear;

  double eval(const std::vector<double>& x) const {
    return constant + linear.eval(x);
  }
};

enum class Relation { equal, lower_bound, upper_bound };

/// `form (=, >=, <=) rhs`; lower_bound means form >= rhs.
struct LinearConstraint {
  LinearForm form;
  double rhs = 0.0;
  Relation relation = Relation::equal;
  std::string label;
};

/// Symmetric matrix whose lower-triangular entries are affine in the program
/// variables; the block is constrained to be positive semidefinite.
struct PsdBlock {
  struct Entry {
    std::size_t row = 0;
    std::size_t col = 0;  // col <= row
    AffineForm value;
  };

  std::size_t size = 0;
  std::vector<Entry> entries;
  std::string provenance;

  Eigen::MatrixXd evaluate(const std::vector<double>& x) const;
};

enum class Sense { minimize, maximize };

struct ConicProgram {
  std::size_t n_vars = 0;
  std::vector<double> objective;
  Sense sense = Sense::minimize;
  std::vector<LinearConstraint> rows;
  std::vector<double> lower;  // per variable, may be -inf
  std::vector<double> upper;  // per variable, may be +inf
  std::vector<PsdBlock> psd_blocks;
  /// Optional per-variable names used by debug dumps.
  std::vector<std::string> var_labels;

  explicit ConicProgram(std::size_t n = 0);

  /// Throws std::invalid_argument when an index is out of range, a PSD entry
  /// lies above the diagonal or a row has no coefficients.
  void check() const;
  std::size_t count_rows(Relation r) const;
};

enum class SolveStatus { optimal, infeasible, unbounded, inaccurate, error };

std::string to_string(SolveStatus s);

struct SolverSettings {
  double feasibility_tol = 1e-7;
  double gap_tol = 1e-7;
  /// Solves stopping with gap and residuals below this are `inaccurate`.
  double inaccurate_tol = 1e-5;
  int max_iterations = 200;
  bool verbose = false;
};

/// Farkas certificate of primal infeasibility in the program's own terms:
/// multipliers for rows, variable bounds and PSD blocks, normalized so that
/// the bound and cone multipliers sum (by trace) to one.
struct InfeasibilityCertificate {
  std::vector<double> row_multipliers;
  std::vector<double> lower_multipliers;
  std::vector<double> upper_multipliers;
  std::vector<Eigen::MatrixXd> block_multipliers;
  /// Violation margin after charging the stationarity residual against the
  /// variable boxes; positive means the program is certainly infeasible.
  double margin = 0.0;
};

struct SolveReport {
  SolveStatus status = SolveStatus::error;
  std::optional<double> objective;
  std::optional<double> dual_objective;
  std::vector<double> primal;
  int iterations = 0;
  double wall_ms = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  SolverSettings settings;
  std::string message;
  std::optional<InfeasibilityCertificate> certificate;
};

/// Backend contract: one function from program to report. Implementations
/// must never throw for numerical trouble; they report status=error instead.
class SdpBackend {
 public:
  virtual ~SdpBackend() = default;
  virtual SolveReport solve(const ConicProgram& program,
                            const SolverSettings& settings) const = 0;
  virtual std::string_view name() const = 0;
};

/// Homogeneous self-dual primal-dual interior-point method with
/// Nesterov-Todd scaling and Mehrotra correction.
class InteriorPointBackend final : public SdpBackend {
 public:
  SolveReport solve(const ConicProgram& program,
                    const SolverSettings& settings) const override;
  std::string_view name() const override { return "occmom-ipm"; }
};

std::shared_ptr<const SdpBackend> default_backend();

SolveReport solve(const ConicProgram& program,
                  const SolverSettings& settings = {});

/// Re-evaluates a Farkas certificate against the program: returns the margin
/// -(sum of multiplier-weighted constants) minus the stationarity residual
/// bounded over the variable box.
double certificate_margin(const ConicProgram& program,
                          const InfeasibilityCertificate& cert);

/// Writes the program in SDPA sparse format (.dat-s). Variables become the
/// SDPA decision vector; rows, equalities (as opposing pairs) and finite
/// variable bounds form one diagonal block listed first.
void export_sdpa(const ConicProgram& program, std::ostream& out);
void export_sdpa(const ConicProgram& program,
                 const std::filesystem::path& path);

/// Human-readable listing of every row and PSD block.
void dump_program(const ConicProgram& program, std::ostream& out);

}  // namespace occmom
