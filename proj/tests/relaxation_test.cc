#include "occmom/relaxation.h"

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "occmom/engine.h"
#include "occmom/problem.h"

namespace occmom {
namespace {

std::string data(const std::string& name) { return std::string(OCCMOM_TEST_DATA) + "/" + name; }

double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff();
}

// Gauss-Legendre nodes and weights on [a, b].
std::vector<std::pair<double, double>> gauss_legendre(int n, double a, double b) {
  std::vector<std::pair<double, double>> out;
  for (int i = 1; i <= n; ++i) {
    double x = std::cos(std::numbers::pi * (i - 0.25) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1 - x * x) * dp * dp);
    out.emplace_back(0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w);
  }
  return out;
}

// Exact moments of the x1' = -x1 x2 example: x1(t) = 0.5 exp(-x2 t),
// x2 ~ U[0, 1]. Every column of every measure is filled by quadrature.
std::vector<double> exact_example1_moments(const Relaxation& rel, const std::vector<double>& times) {
  std::vector<double> x(rel.n_vars(), 0.0);
  const auto xq = gauss_legendre(30, 0.0, 1.0);
  auto endpoint = [&](double t, int a, int b) {
    double s = 0.0;
    for (auto [x2, w] : xq) s += w * std::pow(0.5 * std::exp(-x2 * t), a) * std::pow(x2, b);
    return s;
  };
  for (const MeasureVar& mv : rel.measures()) {
    for (std::size_t i = 0; i < mv.size(); ++i) {
      const Monomial& m = mv.ordering[i];
      // Map the reduced exponents back to (x1, x2); pinned x1 contributes
      // nothing to reduced columns.
      int a = 0, b = 0;
      for (std::size_t s = 0; s < mv.free_states.size(); ++s) {
        (mv.free_states[s] == 0 ? a : b) = m.x_exp(s);
      }
      double v = 0.0;
      if (mv.kind == MeasureKind::occupation) {
        for (auto [t, w] : gauss_legendre(30, mv.t_lo, mv.t_hi)) v += w * std::pow(t, m.t_exp()) * endpoint(t, a, b);
      } else if (mv.pinned[0]) {
        // Pinned x1 = 0.5 at t = 0: reduced column is E[x2^b].
        v = endpoint(0.0, 0, b);
      } else {
        v = endpoint(times[mv.time_index], a, b);
      }
      x[mv.offset + i] = v;
    }
  }
  return x;
}

EstimationProblem one_state_static(double lo, double hi) {
  EstimationProblem p;
  p.system.state_names = {"x"};
  p.system.field = {Polynomial(1)};
  p.box = {Interval{lo, hi}};
  p.times = {0.0};
  p.support.resize(1);
  return p;
}

TEST(TestMonomialsTest, DegreeBudget) {
  const EstimationProblem ex1 = load_problem(data("example1.json"));
  const auto v = test_monomials(2, ex1.system);
  EXPECT_EQ(v.size(), 20u);
  for (const auto& m : v) EXPECT_LE(m.degree(), 3);
  EXPECT_EQ(v.front(), Monomial(2));

  const EstimationProblem st = load_problem(data("static.json"));
  const auto w = test_monomials(2, st.system);
  EXPECT_EQ(w.size(), monomial_count(3, 4));
  EXPECT_THROW(test_monomials(0, st.system), std::invalid_argument);
}

TEST(TestMonomialsTest, HighDegreeFieldWarns) {
  EstimationProblem p = load_problem(data("example2.json"));
  // deg f = 3 leaves only v = 1 at r = 1.
  const Relaxation rel(p, 1, {});
  EXPECT_EQ(rel.tests().size(), 1u);
  ASSERT_FALSE(rel.diagnostics().empty());
  EXPECT_EQ(rel.diagnostics()[0].path, "order");
}

TEST(MomentMatrixTest, OneVariable) {
  const EstimationProblem p = one_state_static(0.0, 1.0);
  const Relaxation rel(p, 1, {});
  const MeasureVar& mu = rel.endpoint(0);
  const PsdBlock m = moment_matrix(mu, 1);
  ASSERT_EQ(m.size, 2u);
  std::vector<double> x(rel.n_vars());
  x[mu.offset] = 1.0;
  x[mu.offset + 1] = 0.5;
  x[mu.offset + 2] = 1.0 / 3.0;
  Eigen::MatrixXd expected(2, 2);
  expected << 1.0, 0.5, 0.5, 1.0 / 3.0;
  EXPECT_TRUE(m.evaluate(x).isApprox(expected));
  EXPECT_GT(min_eigenvalue(m.evaluate(x)), 0.0);

  // Dirac at 0.5: rank one.
  x[mu.offset + 1] = 0.5;
  x[mu.offset + 2] = 0.25;
  const Eigen::MatrixXd d = m.evaluate(x);
  EXPECT_NEAR(min_eigenvalue(d), 0.0, 1e-14);
  EXPECT_NEAR(d.determinant(), 0.0, 1e-14);
}

TEST(LocalizingMatrixTest, Examples) {
  const EstimationProblem p = one_state_static(0.0, 1.0);
  const Relaxation rel(p, 1, {});
  const MeasureVar& mu = rel.endpoint(0);
  std::vector<double> x(rel.n_vars());
  x[mu.offset] = 1.0;
  x[mu.offset + 1] = 0.5;
  x[mu.offset + 2] = 1.0 / 3.0;
  const std::vector<std::string> names{"x"};
  const PsdBlock l = localizing_matrix(mu, parse_polynomial("x*(1 - x)", names), 1);
  ASSERT_EQ(l.size, 1u);
  EXPECT_NEAR(l.evaluate(x)(0, 0), 1.0 / 6.0, 1e-15);

  const PsdBlock one = localizing_matrix(mu, Polynomial(1, 1.0), 1);
  EXPECT_TRUE(one.evaluate(x).isApprox(moment_matrix(mu, 1).evaluate(x)));

  // x - 0.9 >= 0 on a measure with moments of U[0, 0.5].
  x[mu.offset + 1] = 0.25;
  x[mu.offset + 2] = 1.0 / 12.0;
  EXPECT_LT(localizing_matrix(mu, parse_polynomial("x - 0.9", names), 1).evaluate(x)(0, 0), 0.0);
  EXPECT_THROW(localizing_matrix(mu, parse_polynomial("x^3", names), 1), std::invalid_argument);
}

TEST(RelaxationTest, ExampleOneShape) {
  const EstimationProblem p = load_problem(data("example1.json"));
  const Relaxation rel(p, 3, {});
  std::size_t endpoints = 0, occupations = 0;
  for (const auto& mv : rel.measures()) {
    (mv.kind == MeasureKind::endpoint ? endpoints : occupations) += 1;
  }
  EXPECT_EQ(endpoints, 11u);
  EXPECT_EQ(occupations, 10u);
  EXPECT_EQ(rel.liouville_row_count(), rel.tests().size() * 10);
  EXPECT_EQ(rel.normalization_row_count(), 11u);
  std::size_t liouville = 0;
  for (const auto& r : rel.skeleton().rows) liouville += r.label.rfind("liouville", 0) == 0;
  // v = 1 and v = t rows keep their terms; no row vanishes here.
  EXPECT_EQ(liouville, rel.liouville_row_count());
  EXPECT_NO_THROW(rel.skeleton().check());
}

TEST(RelaxationTest, DiracCoordinateEliminated) {
  const EstimationProblem p = load_problem(data("example1.json"));
  const Relaxation rel(p, 2, {});
  const MeasureVar& mu0 = rel.endpoint(0);
  EXPECT_EQ(mu0.free_states, (std::vector<std::size_t>{1}));
  ASSERT_TRUE(mu0.pinned[0].has_value());
  EXPECT_EQ(mu0.size(), monomial_count(1, 4));
  const auto [reduced, factor] = mu0.reduce(Monomial(0, {2, 1}));
  EXPECT_EQ(reduced, Monomial(0, {1}));
  EXPECT_DOUBLE_EQ(factor, 0.25);
  // Later measures carry both states.
  EXPECT_EQ(rel.endpoint(1).free_states.size(), 2u);
  // The x1 moment at t = 0 is the constant column scaled by 0.5.
  const LinearForm f = rel.moment(0, std::vector<int>{1, 0});
  ASSERT_EQ(f.terms.size(), 1u);
  EXPECT_EQ(f.terms[0].first, mu0.offset);
  EXPECT_DOUBLE_EQ(f.terms[0].second, 0.5);
}

TEST(RelaxationTest, LiouvilleRowExamples) {
  const EstimationProblem p = load_problem(data("example1.json"));
  const Relaxation rel(p, 2, {});
  const auto rows = rel.liouville_rows(3);
  const MeasureVar& a = rel.endpoint(3);
  const MeasureVar& b = rel.endpoint(4);
  const MeasureVar& occ = rel.occupation(3);
  auto coef = [](const LinearForm& f, std::size_t v) {
    for (auto [i, c] : f.terms)
      if (i == v) return c;
    return 0.0;
  };
  // v = 1.
  EXPECT_EQ(rows[0].form.terms.size(), 2u);
  EXPECT_DOUBLE_EQ(coef(rows[0].form, a.offset), 1.0);
  EXPECT_DOUBLE_EQ(coef(rows[0].form, b.offset), -1.0);
  // v = t: occupation mass = t_{k+1} - t_k given unit endpoint masses.
  const LinearConstraint& vt = rows[1];
  EXPECT_DOUBLE_EQ(coef(vt.form, occ.offset), 1.0);
  EXPECT_DOUBLE_EQ(coef(vt.form, b.offset), -0.4);
  EXPECT_DOUBLE_EQ(coef(vt.form, a.offset), 0.3);
  // v = x1: -<x1 x2, nu_occ> - <x1, nu_{k+1}> + <x1, nu_k> = 0.
  const LinearConstraint& vx = rows[2];
  EXPECT_DOUBLE_EQ(coef(vx.form, occ.offset + occ.ordering.index(Monomial(0, {1, 1}))), -1.0);
  EXPECT_DOUBLE_EQ(coef(vx.form, b.offset + b.ordering.index(Monomial(0, {1, 0}))), -1.0);
  EXPECT_DOUBLE_EQ(coef(vx.form, a.offset + a.ordering.index(Monomial(0, {1, 0}))), 1.0);
  EXPECT_EQ(vx.form.terms.size(), 3u);
}

// Every assembled constraint holds at the exact moment sequence.
TEST(RelaxationTest, ExactMomentsSatisfyEverything) {
  const EstimationProblem p = load_problem(data("example1.json"));
  for (int r : {2, 3}) {
    const Relaxation rel(p, r, {});
    const std::vector<double> x = exact_example1_moments(rel, p.times);
    const ConicProgram& prog = rel.skeleton();
    for (const auto& row : prog.rows) {
      const double v = row.form.eval(x) - row.rhs;
      if (row.relation == Relation::equal) EXPECT_NEAR(v, 0.0, 1e-12) << row.label;
      if (row.relation == Relation::lower_bound) EXPECT_GE(v, -1e-12) << row.label;
      if (row.relation == Relation::upper_bound) EXPECT_LE(v, 1e-12) << row.label;
    }
    for (std::size_t i = 0; i < prog.n_vars; ++i) {
      EXPECT_GE(x[i], prog.lower[i]) << prog.var_labels[i];
      EXPECT_LE(x[i], prog.upper[i]) << prog.var_labels[i];
    }
    for (const auto& blk : prog.psd_blocks) {
      EXPECT_GE(min_eigenvalue(blk.evaluate(x)), -1e-10) << blk.provenance;
    }
  }
}

TEST(RelaxationTest, SingleTimeNoOccupation) {
  EstimationProblem p = load_problem(data("static.json"));
  p.times = {0.0};
  p.support.resize(1);
  p.queries.clear();
  const Relaxation rel(p, 2, {});
  ASSERT_EQ(rel.measures().size(), 1u);
  EXPECT_EQ(rel.measures()[0].kind, MeasureKind::endpoint);
  EXPECT_EQ(rel.liouville_row_count(), 0u);
}

TEST(RelaxationTest, CellSplitNormalization) {
  const EstimationProblem p = load_problem(data("example2.json"));
  RelaxationOptions opt;
  opt.split_cells = true;
  const Relaxation rel(p, 2, opt);
  // One endpoint at t = 0.5, one sum row and two bounds per cell.
  EXPECT_EQ(rel.normalization_row_count(), 1u + 1u + 450u);
  const Relaxation plain(p, 2, {});
  EXPECT_EQ(plain.normalization_row_count(), 2u);

  const ConicProgram prog = rel.program(Objective::mass(17, Sense::maximize));
  const LinearForm mass = rel.cell_mass(17);
  ASSERT_EQ(mass.terms.size(), 1u);
  for (std::size_t i = 0; i < prog.n_vars; ++i) {
    EXPECT_EQ(prog.objective[i], i == mass.terms[0].first ? 1.0 : 0.0);
  }
  EXPECT_EQ(prog.sense, Sense::maximize);
  EXPECT_THROW(plain.cell_mass(0), std::out_of_range);
}

TEST(RelaxationTest, Deterministic) {
  const EstimationProblem p = load_problem(data("example1.json"));
  const ConicProgram a = assemble(p, Objective::moment(10, {2, 0}, Sense::minimize), 2);
  const ConicProgram b = assemble(p, Objective::moment(10, {2, 0}, Sense::minimize), 2);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].label, b.rows[i].label);
    EXPECT_EQ(a.rows[i].form.terms, b.rows[i].form.terms);
    EXPECT_EQ(a.rows[i].rhs, b.rows[i].rhs);
  }
  ASSERT_EQ(a.psd_blocks.size(), b.psd_blocks.size());
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.lower, b.lower);
  EXPECT_EQ(a.upper, b.upper);
}

TEST(RelaxationTest, HighDegreeDataDropped) {
  const EstimationProblem p = load_problem(data("example1.json"));
  // Pins of x2^5 and x2^6 exceed 2r = 4.
  const Relaxation rel(p, 2, {});
  int dropped = 0;
  for (const auto& d : rel.diagnostics()) dropped += d.path.rfind("moments[", 0) == 0;
  EXPECT_EQ(dropped, 2);
  EXPECT_EQ(rel.moment_data_rows().size(), 4u);
}

TEST(RelaxationTest, UnknownObjectiveCoordinate) {
  const EstimationProblem p = load_problem(data("example1.json"));
  const Relaxation rel(p, 2, {});
  EXPECT_THROW(rel.program(Objective::moment(11, {1, 0}, Sense::minimize)), std::out_of_range);
  EXPECT_THROW(rel.program(Objective::moment(1, {5, 0}, Sense::minimize)), std::invalid_argument);
  EXPECT_THROW(rel.program(Objective::moment(1, {1}, Sense::minimize)), std::invalid_argument);
}

// Dropping support localizers only relaxes the program.
TEST(RelaxationTest, DroppingLocalizersWidens) {
  const EstimationProblem p = load_problem(data("example1.json"));
  const Relaxation with(p, 2, {});
  RelaxationOptions opt;
  opt.localizers = false;
  const Relaxation without(p, 2, opt);
  EXPECT_LT(without.skeleton().psd_blocks.size(), with.skeleton().psd_blocks.size());
  Query q;
  q.kind = QueryKind::moment;
  q.time_index = 10;
  q.exponents = {1, 0};
  const BoundResult a = bound_query(with, q);
  const BoundResult b = bound_query(without, q);
  EXPECT_LE(b.lower, a.lower + 1e-6);
  EXPECT_GE(b.upper, a.upper - 1e-6);
}

}  // namespace
}  // namespace occmom
