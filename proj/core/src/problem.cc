#include "occmom/problem.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace occmom {

int DynamicalSystem::degree() const {
  int d = 0;
  for (const auto& f : field) d = std::max(d, f.degree());
  return d;
}

int MomentBound::degree() const {
  return std::accumulate(exponents.begin(), exponents.end(), 0);
}

bool CellBox::contains(const std::vector<double>& point) const {
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (point[i] < lower[i] || point[i] > upper[i]) return false;
  }
  return true;
}

std::optional<std::size_t> Partition::locate(
    const std::vector<double>& point) const {
  for (std::size_t j = cells.size(); j-- > 0;) {
    if (cells[j].contains(point)) return j;
  }
  return std::nullopt;
}

SupportSet EstimationProblem::global_support() const {
  SupportSet x;
  x.label = "X";
  const std::size_t n = n_x();
  for (std::size_t i = 0; i < n && i < box.size(); ++i) {
    if (!box[i]) continue;
    const Polynomial xi = Polynomial::state(n, i);
    if (std::isfinite(box[i]->lower)) {
      x.inequalities.push_back(xi - Polynomial(n, box[i]->lower));
    }
    if (std::isfinite(box[i]->upper)) {
      x.inequalities.push_back(Polynomial(n, box[i]->upper) - xi);
    }
  }
  x.inequalities.insert(x.inequalities.end(), global_inequalities.begin(),
                        global_inequalities.end());
  return x;
}

bool has_errors(const std::vector<Diagnostic>& diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) {
                       return d.severity == Severity::error;
                     });
}

std::string to_string(QueryKind kind) {
  switch (kind) {
    case QueryKind::moment:
      return "moment";
    case QueryKind::mass:
      return "mass";
    case QueryKind::consistency:
      return "consistency";
  }
  return "unknown";
}

Partition make_grid_partition(const EstimationProblem& problem,
                              std::size_t time_index,
                              std::vector<std::size_t> states,
                              std::vector<int> grid) {
  if (states.size() != grid.size()) {
    throw ProblemError("partition", "grid needs one cell count per state");
  }
  Partition p;
  p.time_index = time_index;
  p.states = std::move(states);
  p.grid = std::move(grid);
  std::size_t total = 1;
  std::vector<double> lo(p.states.size()), width(p.states.size());
  for (std::size_t d = 0; d < p.states.size(); ++d) {
    const std::size_t s = p.states[d];
    if (s >= problem.n_x()) {
      throw ProblemError("partition.states", "state index out of range");
    }
    if (p.grid[d] < 1) {
      throw ProblemError("partition.grid", "cell count must be positive");
    }
    if (s >= problem.box.size() || !problem.box[s] ||
        !std::isfinite(problem.box[s]->lower) ||
        !std::isfinite(problem.box[s]->upper)) {
      throw ProblemError("partition",
                         "partitioned state '" +
                             problem.system.state_names[s] +
                             "' needs a finite box");
    }
    lo[d] = problem.box[s]->lower;
    width[d] = (problem.box[s]->upper - lo[d]) / p.grid[d];
    total *= static_cast<std::size_t>(p.grid[d]);
  }
  p.cells.reserve(total);
  std::vector<int> idx(p.states.size(), 0);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rem = c;
    for (std::size_t d = p.states.size(); d-- > 0;) {
      idx[d] = static_cast<int>(rem % static_cast<std::size_t>(p.grid[d]));
      rem /= static_cast<std::size_t>(p.grid[d]);
    }
    CellBox cell;
    for (std::size_t d = 0; d < p.states.size(); ++d) {
      const std::size_t s = p.states[d];
      cell.lower.push_back(lo[d] + idx[d] * width[d]);
      cell.upper.push_back(idx[d] + 1 == p.grid[d] ? problem.box[s]->upper
                                                   : lo[d] + (idx[d] + 1) * width[d]);
    }
    p.cells.push_back(std::move(cell));
  }
  return p;
}

namespace {

void check_polynomial(const Polynomial& p, std::size_t n_x,
                      const std::string& path, std::vector<Diagnostic>& out) {
  if (p.n_x() != n_x) {
    out.push_back({Severity::error, path,
                   "polynomial has " + std::to_string(p.n_x()) +
                       " states, expected " + std::to_string(n_x)});
  }
}

void validate_partition(const EstimationProblem& problem,
                        std::vector<Diagnostic>& out) {
  const Partition& part = *problem.partition;
  if (part.time_index >= problem.n_times()) {
    out.push_back({Severity::error, "partition.time_index",
                   "time index out of range"});
  }
  if (part.time_index != 0) {
    out.push_back({Severity::error, "partition.time_index",
                   "partitions are supported at time index 0 only"});
  }
  if (part.cells.empty()) {
    out.push_back({Severity::error, "partition", "no cells"});
    return;
  }
  const std::size_t dim = part.states.size();
  for (std::size_t s : part.states) {
    if (s >= problem.n_x()) {
      out.push_back({Severity::error, "partition.states",
                     "state index out of range"});
      return;
    }
  }
  for (std::size_t j = 0; j < part.cells.size(); ++j) {
    const CellBox& c = part.cells[j];
    if (c.lower.size() != dim || c.upper.size() != dim) {
      out.push_back({Severity::error,
                     "partition.cells[" + std::to_string(j) + "]",
                     "cell dimension mismatch"});
      return;
    }
    for (std::size_t d = 0; d < dim; ++d) {
      if (!(c.lower[d] < c.upper[d])) {
        out.push_back({Severity::error,
                       "partition.cells[" + std::to_string(j) + "]",
                       "cell has empty extent"});
      }
    }
  }
  // Pairwise overlap of interiors.
  for (std::size_t a = 0; a < part.cells.size(); ++a) {
    for (std::size_t b = a + 1; b < part.cells.size(); ++b) {
      bool overlap = true;
      for (std::size_t d = 0; d < dim && overlap; ++d) {
        const double lo = std::max(part.cells[a].lower[d], part.cells[b].lower[d]);
        const double hi = std::min(part.cells[a].upper[d], part.cells[b].upper[d]);
        overlap = hi - lo > 1e-12 * std::max(1.0, std::abs(hi) + std::abs(lo));
      }
      if (overlap) {
        out.push_back({Severity::error, "partition.cells",
                       "cells " + std::to_string(a) + " and " +
                           std::to_string(b) + " overlap"});
        return;
      }
    }
  }
  // Coverage: non-overlapping cells inside the bounding box whose volumes sum
  // to the box volume cover it.
  double box_volume = 1.0;
  bool box_known = true;
  std::vector<double> lo(dim), hi(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    const std::size_t s = part.states[d];
    if (s >= problem.box.size() || !problem.box[s] ||
        !std::isfinite(problem.box[s]->lower) ||
        !std::isfinite(problem.box[s]->upper)) {
      box_known = false;
      break;
    }
    lo[d] = problem.box[s]->lower;
    hi[d] = problem.box[s]->upper;
    box_volume *= hi[d] - lo[d];
  }
  if (!box_known) {
    out.push_back({Severity::error, "partition",
                   "partitioned states need a finite box"});
    return;
  }
  double volume = 0.0;
  for (std::size_t j = 0; j < part.cells.size(); ++j) {
    double v = 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double tol = 1e-12 * std::max(1.0, hi[d] - lo[d]);
      if (part.cells[j].lower[d] < lo[d] - tol ||
          part.cells[j].upper[d] > hi[d] + tol) {
        out.push_back({Severity::error,
                       "partition.cells[" + std::to_string(j) + "]",
                       "cell leaves the bounding box"});
      }
      v *= part.cells[j].upper[d] - part.cells[j].lower[d];
    }
    volume += v;
  }
  if (std::abs(volume - box_volume) > 1e-9 * std::max(1.0, box_volume)) {
    out.push_back({Severity::error, "partition",
                   "cells do not cover the bounding box"});
  }
}

}  // namespace

std::vector<Diagnostic> validate(const EstimationProblem& problem) {
  std::vector<Diagnostic> out;
  const std::size_t n = problem.n_x();
  if (n == 0) out.push_back({Severity::error, "states", "no states declared"});
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& name = problem.system.state_names[i];
    if (name == "t") {
      out.push_back({Severity::error, "states[" + std::to_string(i) + "]",
                     "'t' is reserved for time"});
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (problem.system.state_names[j] == name) {
        out.push_back({Severity::error, "states[" + std::to_string(i) + "]",
                       "duplicate state name '" + name + "'"});
      }
    }
  }
  if (problem.system.field.size() != n) {
    out.push_back({Severity::error, "field",
                   "expected " + std::to_string(n) + " components, got " +
                       std::to_string(problem.system.field.size())});
  }
  for (std::size_t i = 0; i < problem.system.field.size(); ++i) {
    check_polynomial(problem.system.field[i], n,
                     "field[" + std::to_string(i) + "]", out);
  }

  // Bounding box.
  for (std::size_t i = 0; i < n; ++i) {
    const std::string path = "box." + problem.system.state_names[i];
    if (i >= problem.box.size() || !problem.box[i] ||
        !std::isfinite(problem.box[i]->lower) ||
        !std::isfinite(problem.box[i]->upper)) {
      out.push_back({Severity::warning, path,
                     "unbounded support: no finite bounding box for state '" +
                         problem.system.state_names[i] + "'"});
      continue;
    }
    if (problem.box[i]->lower > problem.box[i]->upper) {
      out.push_back({Severity::error, path, "box lower > upper"});
    }
  }
  for (std::size_t i = 0; i < problem.global_inequalities.size(); ++i) {
    check_polynomial(problem.global_inequalities[i], n,
                     "global_support[" + std::to_string(i) + "]", out);
  }

  // Time grid.
  if (problem.times.empty()) {
    out.push_back({Severity::error, "times", "empty time grid"});
  }
  for (std::size_t k = 0; k < problem.times.size(); ++k) {
    const double t = problem.times[k];
    if (!(t >= 0.0 && t <= 1.0)) {
      out.push_back({Severity::error, "times[" + std::to_string(k) + "]",
                     "time outside [0, 1]"});
    }
    if (k > 0 && !(t > problem.times[k - 1])) {
      out.push_back({Severity::error, "times[" + std::to_string(k) + "]",
                     "grid not increasing"});
    }
  }

  if (problem.support.size() > problem.n_times()) {
    out.push_back({Severity::error, "support",
                   "support data beyond the time grid"});
  }
  for (std::size_t k = 0; k < problem.support.size(); ++k) {
    for (std::size_t i = 0; i < problem.support[k].inequalities.size(); ++i) {
      check_polynomial(problem.support[k].inequalities[i], n,
                       "support[" + std::to_string(k) + "].inequalities[" +
                           std::to_string(i) + "]",
                       out);
    }
  }

  for (std::size_t i = 0; i < problem.moments.size(); ++i) {
    const MomentBound& mb = problem.moments[i];
    const std::string path = "moments[" + std::to_string(i) + "]";
    if (mb.time_index >= problem.n_times()) {
      out.push_back({Severity::error, path, "time index out of range"});
    }
    if (mb.exponents.size() != n) {
      out.push_back({Severity::error, path,
                     "exponent vector must have one entry per state"});
    }
    if (std::any_of(mb.exponents.begin(), mb.exponents.end(),
                    [](int e) { return e < 0; })) {
      out.push_back({Severity::error, path, "negative exponent"});
    }
    if (std::isnan(mb.lower) || std::isnan(mb.upper)) {
      out.push_back({Severity::error, path, "bound is NaN"});
    } else if (mb.lower > mb.upper) {
      out.push_back({Severity::error, path, "moment lower > upper"});
    }
  }

  if (problem.partition) validate_partition(problem, out);

  if (problem.order < 1) {
    out.push_back({Severity::error, "order", "relaxation order must be >= 1"});
  }
  for (std::size_t q = 0; q < problem.queries.size(); ++q) {
    const Query& query = problem.queries[q];
    const std::string path = "queries[" + std::to_string(q) + "]";
    const int r = query.order.value_or(problem.order);
    if (r < 1) {
      out.push_back({Severity::error, path, "relaxation order must be >= 1"});
    }
    switch (query.kind) {
      case QueryKind::moment: {
        if (query.time_index >= problem.n_times()) {
          out.push_back({Severity::error, path, "time index out of range"});
        }
        if (query.exponents.size() != n) {
          out.push_back({Severity::error, path,
                         "exponent vector must have one entry per state"});
        } else {
          const int deg = std::accumulate(query.exponents.begin(),
                                          query.exponents.end(), 0);
          if (std::any_of(query.exponents.begin(), query.exponents.end(),
                          [](int e) { return e < 0; })) {
            out.push_back({Severity::error, path, "negative exponent"});
          } else if (deg > 2 * r) {
            out.push_back({Severity::error, path,
                           "moment degree " + std::to_string(deg) +
                               " exceeds 2r = " + std::to_string(2 * r)});
          }
        }
        break;
      }
      case QueryKind::mass:
        if (!problem.partition) {
          out.push_back({Severity::error, path,
                         "mass query without a partition"});
        } else if (query.cell >= problem.partition->cells.size()) {
          out.push_back({Severity::error, path, "cell index out of range"});
        }
        break;
      case QueryKind::consistency:
        break;
    }
  }

  if (problem.oracle) {
    const auto& coords = problem.oracle->coordinates;
    if (coords.size() != n) {
      out.push_back({Severity::error, "oracle",
                     "oracle needs a law for every state"});
    }
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const std::string path =
          "oracle." + (i < n ? problem.system.state_names[i] : std::to_string(i));
      const CoordinateLaw& law = coords[i].law;
      if (const auto* u = std::get_if<Uniform>(&law); u && !(u->lower < u->upper)) {
        out.push_back({Severity::error, path, "uniform needs a < b"});
      }
      if (const auto* b = std::get_if<Beta>(&law)) {
        if (!(b->alpha > 0 && b->beta > 0)) {
          out.push_back({Severity::error, path, "beta needs alpha, beta > 0"});
        }
        if (!(b->lower < b->upper)) {
          out.push_back({Severity::error, path, "beta range needs a < b"});
        }
      }
      if (const auto* d = std::get_if<Discrete>(&law)) {
        double sum = 0.0;
        bool negative = false;
        for (double w : d->weights) {
          sum += w;
          negative |= w < 0;
        }
        if (d->points.size() != d->weights.size() || d->points.empty()) {
          out.push_back({Severity::error, path,
                         "discrete law needs matching points and weights"});
        } else if (negative || std::abs(sum - 1.0) > 1e-9) {
          out.push_back({Severity::error, path,
                         "discrete weights must be non-negative and sum to 1"});
        }
      }
      if (coords[i].pin && !std::holds_alternative<Dirac>(law)) {
        out.push_back({Severity::error, path, "only dirac laws can be pinned"});
      }
    }
  }
  if (problem.oracle_settings) {
    for (std::size_t k : problem.oracle_settings->time_indices) {
      if (k >= problem.n_times()) {
        out.push_back({Severity::error, "oracle_settings.time_indices",
                       "time index out of range"});
      }
    }
    for (std::size_t s : problem.oracle_settings->states) {
      if (s >= n) {
        out.push_back({Severity::error, "oracle_settings.states",
                       "state index out of range"});
      }
    }
  }
  return out;
}

}  // namespace occmom
