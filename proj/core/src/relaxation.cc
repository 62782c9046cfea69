#include "occmom/relaxation.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace occmom {
namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
constexpr const char* kWindowLabel = "time window";

// Exact range of x^e over [a, b].
Interval power_range(Interval iv, int e) {
  if (e == 0) return {1.0, 1.0};
  const double pa = std::pow(iv.lower, e), pb = std::pow(iv.upper, e);
  if (e % 2 == 0 && iv.lower < 0.0 && iv.upper > 0.0) {
    return {0.0, std::max(pa, pb)};
  }
  return {std::min(pa, pb), std::max(pa, pb)};
}

Interval product(Interval a, Interval b) {
  auto mul = [](double x, double y) {
    // 0 * inf contributes 0: the factor with a zero end is exactly zero there.
    if (x == 0.0 || y == 0.0) return 0.0;
    return x * y;
  };
  const double p[4] = {mul(a.lower, b.lower), mul(a.lower, b.upper),
                       mul(a.upper, b.lower), mul(a.upper, b.upper)};
  return {*std::min_element(p, p + 4), *std::max_element(p, p + 4)};
}

}  // namespace

// ---------------------------------------------------------------------------
// MeasureVar

std::string MeasureVar::name() const {
  switch (kind) {
    case MeasureKind::endpoint:
      return "mu_" + std::to_string(time_index);
    case MeasureKind::occupation:
      return "mu_" + std::to_string(time_index) + "_" + std::to_string(time_index + 1);
    case MeasureKind::cell:
      return "mu_" + std::to_string(time_index) + "_cell" + std::to_string(cell);
  }
  return "mu";
}

std::pair<Monomial, double> MeasureVar::reduce(const Monomial& m) const {
  if (m.n_x() != n_x) throw std::invalid_argument("monomial dimension mismatch in " + name());
  if (!ordering.includes_time() && m.t_exp() != 0) {
    throw std::invalid_argument("time monomial on a time-free measure " + name());
  }
  double factor = 1.0;
  std::vector<int> exps;
  exps.reserve(free_states.size());
  for (std::size_t i = 0; i < n_x; ++i) {
    const int e = m.x_exp(i);
    if (pinned[i]) {
      if (e > 0) factor *= std::pow(*pinned[i], e);
    }
  }
  for (std::size_t i : free_states) exps.push_back(m.x_exp(i));
  return {Monomial(m.t_exp(), std::move(exps)), factor};
}

Polynomial MeasureVar::reduce(const Polynomial& p) const {
  Polynomial out(free_states.size());
  for (const auto& [m, c] : p.terms()) {
    auto [red, f] = reduce(m);
    out.add_term(red, c * f);
  }
  return out;
}

std::size_t MeasureVar::column(const Monomial& reduced) const {
  return offset + ordering.index(reduced);
}

LinearForm MeasureVar::moment(const Monomial& m) const {
  auto [red, f] = reduce(m);
  LinearForm form;
  form.add(column(red), f);
  return form;
}

std::string MeasureVar::label(const Monomial& reduced,
                              const std::vector<std::string>& state_names) const {
  std::vector<std::string> names;
  for (std::size_t i : free_states) names.push_back(state_names[i]);
  return name() + "[" + reduced.to_string(names) + "]";
}

// ---------------------------------------------------------------------------

std::vector<Monomial> test_monomials(int order, const DynamicalSystem& system) {
  if (order < 1) throw std::invalid_argument("relaxation order must be >= 1");
  const int budget = 2 * order + 1 - std::max(1, system.degree());
  if (budget < 0) return {};
  return monomial_basis(system.n_x(), budget, true);
}

PsdBlock moment_matrix(const MeasureVar& measure, int order) {
  const std::size_t nv = measure.free_states.size() + (measure.ordering.includes_time() ? 1 : 0);
  const std::size_t n = monomial_count(nv, order);
  PsdBlock blk;
  blk.size = n;
  blk.provenance = "moment matrix of " + measure.name();
  const auto& basis = measure.ordering.basis();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      PsdBlock::Entry e;
      e.row = i;
      e.col = j;
      e.value.linear.add(measure.column(basis[i] * basis[j]), 1.0);
      blk.entries.push_back(std::move(e));
    }
  }
  return blk;
}

PsdBlock localizing_matrix(const MeasureVar& measure, const Polynomial& g, int order) {
  const int dg = std::max(0, g.degree());
  const int sub = order - (dg + 1) / 2;
  if (sub < 0) throw std::invalid_argument("localizer degree exceeds 2r");
  const std::size_t nv = measure.free_states.size() + (measure.ordering.includes_time() ? 1 : 0);
  const std::size_t n = monomial_count(nv, sub);
  PsdBlock blk;
  blk.size = n;
  blk.provenance = "localizing matrix of " + measure.name();
  const auto& basis = measure.ordering.basis();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      PsdBlock::Entry e;
      e.row = i;
      e.col = j;
      const Monomial bij = basis[i] * basis[j];
      for (const auto& [m, c] : g.terms()) e.value.linear.add(measure.column(m * bij), c);
      e.value.linear.canonicalize();
      blk.entries.push_back(std::move(e));
    }
  }
  return blk;
}

Objective Objective::moment(std::size_t k, std::vector<int> exponents, Sense sense) {
  Objective o;
  o.kind = Kind::moment;
  o.time_index = k;
  o.exponents = std::move(exponents);
  o.sense = sense;
  return o;
}

Objective Objective::mass(std::size_t cell, Sense sense) {
  Objective o;
  o.kind = Kind::mass;
  o.cell = cell;
  o.sense = sense;
  return o;
}

// ---------------------------------------------------------------------------
// Relaxation

Relaxation::Relaxation(const EstimationProblem& problem, int order, RelaxationOptions options)
    : problem_(problem), order_(order), options_(options) {
  if (order < 1) throw std::invalid_argument("relaxation order must be >= 1");
  if (options_.split_cells && !problem_.partition) {
    throw std::invalid_argument("cell splitting requires a partition");
  }
  tests_ = test_monomials(order, problem_.system);
  if (2 * order + 1 - std::max(1, problem_.system.degree()) < 1) {
    diagnostics_.push_back({Severity::warning, "order",
                            "order " + std::to_string(order) +
                                " admits only constant test functions for this field degree"});
  }
  build_measures();
  build_program();
}

MeasureVar Relaxation::make_measure(MeasureKind kind, std::size_t k, std::size_t cell) const {
  const std::size_t n = problem_.n_x();
  MeasureVar mv;
  mv.kind = kind;
  mv.time_index = k;
  mv.cell = cell;
  mv.n_x = n;
  mv.t_lo = problem_.times[k];
  mv.t_hi = kind == MeasureKind::occupation ? problem_.times[k + 1] : problem_.times[k];
  mv.pinned.assign(n, std::nullopt);
  const bool initial = kind != MeasureKind::occupation && k == 0 && problem_.times[0] == 0.0;
  if (initial && problem_.oracle) {
    const auto& coords = problem_.oracle->coordinates;
    for (std::size_t i = 0; i < n && i < coords.size(); ++i) {
      if (!coords[i].pin) continue;
      if (const auto* d = std::get_if<Dirac>(&coords[i].law)) mv.pinned[i] = d->value;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!mv.pinned[i]) mv.free_states.push_back(i);
  }
  mv.ordering = MonomialOrdering(mv.free_states.size(), 2 * order_, kind == MeasureKind::occupation);

  mv.box.assign(n, Interval{});
  for (std::size_t i = 0; i < n && i < problem_.box.size(); ++i) {
    if (problem_.box[i]) mv.box[i] = *problem_.box[i];
  }
  std::vector<Polynomial> raw;
  std::vector<std::string> labels;
  const SupportSet global = problem_.global_support();
  for (std::size_t i = 0; i < global.inequalities.size(); ++i) {
    raw.push_back(global.inequalities[i]);
    labels.push_back("X[" + std::to_string(i) + "]");
  }
  if (kind != MeasureKind::occupation && k < problem_.support.size()) {
    const auto& sup = problem_.support[k].inequalities;
    for (std::size_t i = 0; i < sup.size(); ++i) {
      raw.push_back(sup[i]);
      labels.push_back("X_" + std::to_string(k) + "[" + std::to_string(i) + "]");
    }
  }
  if (kind == MeasureKind::cell) {
    const Partition& part = *problem_.partition;
    const CellBox& cb = part.cells[cell];
    for (std::size_t s = 0; s < part.states.size(); ++s) {
      const std::size_t i = part.states[s];
      mv.box[i].lower = std::max(mv.box[i].lower, cb.lower[s]);
      mv.box[i].upper = std::min(mv.box[i].upper, cb.upper[s]);
      const Polynomial xi = Polynomial::state(n, i);
      raw.push_back(xi - Polynomial(n, cb.lower[s]));
      labels.push_back("cell[" + std::to_string(s) + "].lower");
      raw.push_back(Polynomial(n, cb.upper[s]) - xi);
      labels.push_back("cell[" + std::to_string(s) + "].upper");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (mv.pinned[i]) mv.box[i] = {*mv.pinned[i], *mv.pinned[i]};
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Polynomial g = kind == MeasureKind::occupation ? raw[i] : raw[i].at_time(mv.t_lo);
    g = mv.reduce(g);
    // Constraints that reduce to a nonnegative constant carry no information.
    if (g.is_constant() && g.constant_term() >= 0.0) continue;
    mv.localizers.push_back(std::move(g));
    mv.localizer_labels.push_back(labels[i]);
  }
  if (kind == MeasureKind::occupation) {
    const std::size_t nf = mv.free_states.size();
    const Polynomial t = Polynomial::time(nf);
    mv.localizers.push_back((t - Polynomial(nf, mv.t_lo)) * (Polynomial(nf, mv.t_hi) - t));
    mv.localizer_labels.push_back(kWindowLabel);
  }
  return mv;
}

void Relaxation::build_measures() {
  const std::size_t nt = problem_.n_times();
  endpoint_index_.assign(nt, kNone);
  const std::size_t split_k = options_.split_cells ? problem_.partition->time_index : kNone;
  std::size_t offset = 0;
  auto add = [&](MeasureVar mv) {
    mv.offset = offset;
    offset += mv.size();
    measures_.push_back(std::move(mv));
    return measures_.size() - 1;
  };
  for (std::size_t k = 0; k < nt; ++k) {
    if (k == split_k) {
      for (std::size_t j = 0; j < problem_.partition->cells.size(); ++j) {
        cell_index_.push_back(add(make_measure(MeasureKind::cell, k, j)));
      }
    } else {
      endpoint_index_[k] = add(make_measure(MeasureKind::endpoint, k, 0));
    }
    if (k + 1 < nt) occupation_index_.push_back(add(make_measure(MeasureKind::occupation, k, 0)));
  }
  for (const MeasureVar& mv : measures_) {
    for (std::size_t i = 0; i < mv.localizers.size(); ++i) {
      if (mv.localizers[i].degree() > 2 * order_) {
        diagnostics_.push_back({Severity::warning, mv.name(),
                                "localizer " + mv.localizer_labels[i] + " has degree above 2r; skipped"});
      }
    }
  }
}

const MeasureVar& Relaxation::endpoint(std::size_t k) const {
  if (k >= endpoint_index_.size() || endpoint_index_[k] == kNone) {
    throw std::out_of_range("no endpoint measure at time index " + std::to_string(k));
  }
  return measures_[endpoint_index_[k]];
}

const MeasureVar& Relaxation::occupation(std::size_t k) const {
  return measures_.at(occupation_index_.at(k));
}

LinearForm Relaxation::moment(std::size_t time_index, const Monomial& m) const {
  if (time_index >= problem_.n_times()) throw std::out_of_range("time index out of range");
  if (m.degree() > 2 * order_) {
    throw std::invalid_argument("moment degree " + std::to_string(m.degree()) + " exceeds 2r = " +
                                std::to_string(2 * order_));
  }
  if (endpoint_index_[time_index] != kNone) return measures_[endpoint_index_[time_index]].moment(m);
  LinearForm sum;
  for (std::size_t idx : cell_index_) {
    for (const auto& t : measures_[idx].moment(m).terms) sum.add(t.first, t.second);
  }
  return sum;
}

LinearForm Relaxation::moment(std::size_t time_index, const std::vector<int>& exponents) const {
  if (exponents.size() != problem_.n_x()) throw std::invalid_argument("exponent vector has wrong length");
  return moment(time_index, Monomial(0, exponents));
}

LinearForm Relaxation::cell_mass(std::size_t cell) const {
  if (cell >= cell_index_.size()) throw std::out_of_range("cell index out of range");
  const MeasureVar& mv = measures_[cell_index_[cell]];
  LinearForm f;
  f.add(mv.offset, 1.0);
  return f;
}

std::vector<LinearConstraint> Relaxation::liouville_rows(std::size_t k) const {
  const MeasureVar& occ = occupation(k);
  const double t0 = problem_.times[k], t1 = problem_.times[k + 1];
  std::vector<LinearConstraint> rows;
  rows.reserve(tests_.size());
  for (const Monomial& v : tests_) {
    LinearConstraint row;
    const Polynomial lv = lie_derivative(Polynomial(v), problem_.system.field);
    for (const auto& [m, c] : lv.terms()) {
      for (const auto& t : occ.moment(m).terms) row.form.add(t.first, c * t.second);
    }
    const int a = v.t_exp();
    const Monomial beta = v.without_time();
    for (const auto& t : moment(k + 1, beta).terms) row.form.add(t.first, -std::pow(t1, a) * t.second);
    for (const auto& t : moment(k, beta).terms) row.form.add(t.first, std::pow(t0, a) * t.second);
    row.form.canonicalize();
    row.rhs = 0.0;
    row.relation = Relation::equal;
    row.label = "liouville[" + std::to_string(k) + "] v=" + v.to_string(problem_.system.state_names);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<LinearConstraint> Relaxation::normalization_rows() const {
  std::vector<LinearConstraint> rows;
  for (std::size_t k = 0; k < endpoint_index_.size(); ++k) {
    if (endpoint_index_[k] == kNone) continue;
    const MeasureVar& mv = measures_[endpoint_index_[k]];
    LinearConstraint row;
    row.form.add(mv.offset, 1.0);
    row.rhs = 1.0;
    row.label = "mass[" + mv.name() + "]";
    rows.push_back(std::move(row));
  }
  if (!cell_index_.empty()) {
    LinearConstraint sum;
    for (std::size_t idx : cell_index_) sum.form.add(measures_[idx].offset, 1.0);
    sum.rhs = 1.0;
    sum.label = "mass[cells]";
    rows.push_back(std::move(sum));
    for (std::size_t idx : cell_index_) {
      const MeasureVar& mv = measures_[idx];
      LinearConstraint lo, hi;
      lo.form.add(mv.offset, 1.0);
      lo.rhs = 0.0;
      lo.relation = Relation::lower_bound;
      lo.label = "mass[" + mv.name() + "] >= 0";
      hi.form.add(mv.offset, 1.0);
      hi.rhs = 1.0;
      hi.relation = Relation::upper_bound;
      hi.label = "mass[" + mv.name() + "] <= 1";
      rows.push_back(std::move(lo));
      rows.push_back(std::move(hi));
    }
  }
  return rows;
}

std::vector<LinearConstraint> Relaxation::moment_data_rows() const {
  std::vector<LinearConstraint> rows;
  for (std::size_t i = 0; i < problem_.moments.size(); ++i) {
    const MomentBound& mb = problem_.moments[i];
    if (mb.degree() > 2 * order_) continue;
    LinearForm form = moment(mb.time_index, mb.exponents);
    form.canonicalize();
    const std::string label = "data[" + std::to_string(i) + "]";
    if (form.empty()) {
      // The moment is identically zero under the eliminated coordinates.
      if (mb.lower <= 0.0 && mb.upper >= 0.0) continue;
      // Contradictory data: demand zero mass, which conflicts with
      // normalization.
      LinearConstraint row;
      row.form = moment(mb.time_index, std::vector<int>(problem_.n_x(), 0));
      row.rhs = 0.0;
      row.label = label + " (contradicts eliminated coordinates)";
      rows.push_back(std::move(row));
      continue;
    }
    if (mb.is_pin()) {
      rows.push_back({form, mb.lower, Relation::equal, label});
      continue;
    }
    if (std::isfinite(mb.lower)) rows.push_back({form, mb.lower, Relation::lower_bound, label + ".lower"});
    if (std::isfinite(mb.upper)) rows.push_back({form, mb.upper, Relation::upper_bound, label + ".upper"});
  }
  return rows;
}

void Relaxation::build_program() {
  for (std::size_t i = 0; i < problem_.moments.size(); ++i) {
    if (problem_.moments[i].degree() > 2 * order_) {
      diagnostics_.push_back({Severity::warning, "moments[" + std::to_string(i) + "]",
                              "moment degree above 2r = " + std::to_string(2 * order_) + "; dropped"});
    }
  }
  std::size_t n = 0;
  for (const auto& mv : measures_) n += mv.size();
  skeleton_ = ConicProgram(n);
  skeleton_.var_labels.resize(n);
  const auto& names = problem_.system.state_names;

  for (const MeasureVar& mv : measures_) {
    const double dt = mv.t_hi - mv.t_lo;
    for (std::size_t i = 0; i < mv.size(); ++i) {
      const Monomial& m = mv.ordering[i];
      const std::size_t col = mv.offset + i;
      skeleton_.var_labels[col] = mv.label(m, names);
      Interval range{1.0, 1.0};
      if (m.t_exp() > 0) range = power_range({mv.t_lo, mv.t_hi}, m.t_exp());
      for (std::size_t s = 0; s < mv.free_states.size(); ++s) {
        const int e = m.x_exp(s);
        if (e > 0) range = product(range, power_range(mv.box[mv.free_states[s]], e));
      }
      switch (mv.kind) {
        case MeasureKind::endpoint:
          break;
        case MeasureKind::occupation:
          range = product(range, {dt, dt});
          break;
        case MeasureKind::cell:
          range = {std::min(0.0, range.lower), std::max(0.0, range.upper)};
          break;
      }
      // Degenerate ranges are widened so the box keeps an interior.
      const double pad = 1e-6 * std::max({1.0, std::abs(range.lower), std::abs(range.upper)});
      if (range.upper - range.lower < pad) {
        range.lower -= pad;
        range.upper += pad;
      }
      skeleton_.lower[col] = range.lower;
      skeleton_.upper[col] = range.upper;
    }
  }

  for (std::size_t k = 0; k + 1 < problem_.n_times(); ++k) {
    auto rows = liouville_rows(k);
    n_liouville_rows_ += rows.size();
    for (auto& r : rows) {
      if (!r.form.empty()) skeleton_.rows.push_back(std::move(r));
    }
  }
  auto norm = normalization_rows();
  n_normalization_rows_ = norm.size();
  for (auto& r : norm) skeleton_.rows.push_back(std::move(r));
  for (auto& r : moment_data_rows()) skeleton_.rows.push_back(std::move(r));

  for (const MeasureVar& mv : measures_) {
    skeleton_.psd_blocks.push_back(moment_matrix(mv, order_));
    for (std::size_t i = 0; i < mv.localizers.size(); ++i) {
      const bool window = mv.localizer_labels[i] == kWindowLabel;
      if (!options_.localizers && !window) continue;
      if (mv.localizers[i].degree() > 2 * order_) continue;
      PsdBlock blk = localizing_matrix(mv, mv.localizers[i], order_);
      blk.provenance += " by " + mv.localizer_labels[i];
      skeleton_.psd_blocks.push_back(std::move(blk));
    }
  }
}

ConicProgram Relaxation::program(const Objective& objective) const {
  ConicProgram p = skeleton_;
  p.sense = objective.sense;
  LinearForm form;
  switch (objective.kind) {
    case Objective::Kind::none:
      break;
    case Objective::Kind::moment:
      form = moment(objective.time_index, objective.exponents);
      break;
    case Objective::Kind::mass:
      form = cell_mass(objective.cell);
      break;
  }
  for (const auto& [v, c] : form.terms) p.objective[v] += c;
  return p;
}

ConicProgram assemble(const EstimationProblem& problem, const Objective& objective, int order) {
  RelaxationOptions opts;
  opts.split_cells = objective.kind == Objective::Kind::mass;
  return Relaxation(problem, order, opts).program(objective);
}

}  // namespace occmom
