#include "occmom/conic.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace occmom {

void LinearForm::add(std::size_t var, double coef) {
  if (coef != 0.0) terms.emplace_back(var, coef);
}

void LinearForm::canonicalize() {
  std::sort(terms.begin(), terms.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<std::size_t, double>> merged;
  merged.reserve(terms.size());
  for (const auto& [v, c] : terms) {
    if (!merged.empty() && merged.back().first == v) {
      merged.back().second += c;
    } else {
      merged.emplace_back(v, c);
    }
  }
  std::erase_if(merged, [](const auto& t) { return t.second == 0.0; });
  terms = std::move(merged);
}

double LinearForm::eval(const std::vector<double>& x) const {
  double s = 0.0;
  for (const auto& [v, c] : terms) s += c * x[v];
  return s;
}

Eigen::MatrixXd PsdBlock::evaluate(const std::vector<double>& x) const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(size, size);
  for (const Entry& e : entries) {
    const double v = e.value.eval(x);
    m(e.row, e.col) += v;
    if (e.row != e.col) m(e.col, e.row) += v;
  }
  return m;
}

ConicProgram::ConicProgram(std::size_t n)
    : n_vars(n),
      objective(n, 0.0),
      lower(n, -std::numeric_limits<double>::infinity()),
      upper(n, std::numeric_limits<double>::infinity()) {}

void ConicProgram::check() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (objective.size() != n_vars || lower.size() != n_vars ||
      upper.size() != n_vars) {
    fail("objective and bound vectors must have n_vars entries");
  }
  for (std::size_t i = 0; i < n_vars; ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i])) fail("NaN variable bound");
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].form.empty()) {
      fail("row " + std::to_string(r) + " has no coefficients");
    }
    for (const auto& [v, c] : rows[r].form.terms) {
      if (v >= n_vars) fail("row " + std::to_string(r) + " references variable out of range");
      if (!std::isfinite(c)) fail("row " + std::to_string(r) + " has a non-finite coefficient");
    }
    if (!std::isfinite(rows[r].rhs)) fail("row " + std::to_string(r) + " has a non-finite rhs");
  }
  for (std::size_t b = 0; b < psd_blocks.size(); ++b) {
    const PsdBlock& blk = psd_blocks[b];
    for (const auto& e : blk.entries) {
      if (e.col > e.row) fail("PSD block " + std::to_string(b) + " entry above the diagonal");
      if (e.row >= blk.size) fail("PSD block " + std::to_string(b) + " entry out of range");
      for (const auto& [v, c] : e.value.linear.terms) {
        if (v >= n_vars) fail("PSD block " + std::to_string(b) + " references variable out of range");
      }
    }
  }
}

std::size_t ConicProgram::count_rows(Relation r) const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(),
                    [r](const LinearConstraint& c) { return c.relation == r; }));
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal:
      return "optimal";
    case SolveStatus::infeasible:
      return "infeasible";
    case SolveStatus::unbounded:
      return "unbounded";
    case SolveStatus::inaccurate:
      return "inaccurate";
    case SolveStatus::error:
      return "error";
  }
  return "error";
}

std::shared_ptr<const SdpBackend> default_backend() {
  static const auto backend = std::make_shared<const InteriorPointBackend>();
  return backend;
}

SolveReport solve(const ConicProgram& program, const SolverSettings& settings) {
  return default_backend()->solve(program, settings);
}

double certificate_margin(const ConicProgram& program,
                          const InfeasibilityCertificate& cert) {
  const std::size_t n = program.n_vars;
  // Phi(x) = rho^T x + phi0 >= 0 for every feasible x.
  std::vector<double> rho(n, 0.0);
  double phi0 = 0.0;
  for (std::size_t r = 0; r < program.rows.size() && r < cert.row_multipliers.size(); ++r) {
    const double w = cert.row_multipliers[r];
    if (w == 0.0) continue;
    const LinearConstraint& row = program.rows[r];
    const double sign = row.relation == Relation::upper_bound ? -1.0 : 1.0;
    if (row.relation != Relation::equal && w < 0.0) {
      return -std::numeric_limits<double>::infinity();
    }
    for (const auto& [v, c] : row.form.terms) rho[v] += sign * w * c;
    phi0 -= sign * w * row.rhs;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i < cert.lower_multipliers.size() && cert.lower_multipliers[i] != 0.0) {
      const double u = cert.lower_multipliers[i];
      if (u < 0.0 || !std::isfinite(program.lower[i])) {
        return -std::numeric_limits<double>::infinity();
      }
      rho[i] += u;
      phi0 -= u * program.lower[i];
    }
    if (i < cert.upper_multipliers.size() && cert.upper_multipliers[i] != 0.0) {
      const double v = cert.upper_multipliers[i];
      if (v < 0.0 || !std::isfinite(program.upper[i])) {
        return -std::numeric_limits<double>::infinity();
      }
      rho[i] -= v;
      phi0 += v * program.upper[i];
    }
  }
  for (std::size_t b = 0; b < program.psd_blocks.size() && b < cert.block_multipliers.size(); ++b) {
    const Eigen::MatrixXd& z = cert.block_multipliers[b];
    if (z.size() == 0) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(z, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, z.norm())) {
      return -std::numeric_limits<double>::infinity();
    }
    for (const auto& e : program.psd_blocks[b].entries) {
      const double weight = e.row == e.col ? z(e.row, e.col) : 2.0 * z(e.row, e.col);
      phi0 += weight * e.value.constant;
      for (const auto& [v, c] : e.value.linear.terms) rho[v] += weight * c;
    }
  }
  double charge = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (rho[i] == 0.0) continue;
    const double reach = std::max(std::abs(program.lower[i]), std::abs(program.upper[i]));
    if (!std::isfinite(reach)) return -std::numeric_limits<double>::infinity();
    charge += std::abs(rho[i]) * reach;
  }
  return -phi0 - charge;
}

void dump_program(const ConicProgram& program, std::ostream& out) {
  auto label = [&](std::size_t v) {
    return v < program.var_labels.size() && !program.var_labels[v].empty()
               ? program.var_labels[v]
               : "y" + std::to_string(v);
  };
  auto form = [&](const LinearForm& f) {
    std::string s;
    for (const auto& [v, c] : f.terms) {
      if (!s.empty()) s += c < 0 ? " - " : " + ";
      else if (c < 0) s += "-";
      const double mag = std::abs(c);
      if (mag != 1.0) s += std::to_string(mag) + "*";
      s += label(v);
    }
    return s.empty() ? std::string("0") : s;
  };
  out << "# variables: " << program.n_vars << "\n";
  out << (program.sense == Sense::minimize ? "minimize" : "maximize") << " ";
  LinearForm obj;
  for (std::size_t i = 0; i < program.n_vars; ++i) obj.add(i, program.objective[i]);
  out << form(obj) << "\n\n# rows: " << program.rows.size() << "\n";
  for (std::size_t r = 0; r < program.rows.size(); ++r) {
    const auto& row = program.rows[r];
    const char* rel = row.relation == Relation::equal         ? " = "
                      : row.relation == Relation::lower_bound ? " >= "
                                                              : " <= ";
    out << "[" << r << "] " << (row.label.empty() ? "" : row.label + ": ")
        << form(row.form) << rel << row.rhs << "\n";
  }
  out << "\n# bounds\n";
  for (std::size_t i = 0; i < program.n_vars; ++i) {
    out << label(i) << " in [" << program.lower[i] << ", " << program.upper[i]
        << "]\n";
  }
  out << "\n# psd blocks: " << program.psd_blocks.size() << "\n";
  for (std::size_t b = 0; b < program.psd_blocks.size(); ++b) {
    const auto& blk = program.psd_blocks[b];
    out << "block " << b << " size " << blk.size << " (" << blk.provenance
        << ")\n";
    for (const auto& e : blk.entries) {
      out << "  (" << e.row << "," << e.col << ") = ";
      if (e.value.constant != 0.0 || e.value.linear.empty()) {
        out << e.value.constant << (e.value.linear.empty() ? "" : " + ");
      }
      if (!e.value.linear.empty()) out << form(e.value.linear);
      out << "\n";
    }
  }
}

}  // namespace occmom
