#include "occmom/engine.h"

#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "occmom/oracle.h"
#include "occmom/problem.h"

namespace occmom {
namespace {

std::string data(const std::string& name) { return std::string(OCCMOM_TEST_DATA) + "/" + name; }

// Static pinned problem with a partition of x1 into the given cells.
EstimationProblem static_with_cells(std::vector<int> grid) {
  EstimationProblem p = load_problem(data("static.json"));
  p.times = {0.0, 1.0};
  p.support.resize(2);
  p.queries.clear();
  p.partition = make_grid_partition(p, 0, {0}, std::move(grid));
  return p;
}

// Fails every solve; checks error propagation without a real solver.
class BrokenBackend final : public SdpBackend {
 public:
  SolveReport solve(const ConicProgram&, const SolverSettings& s) const override {
    SolveReport r;
    r.status = SolveStatus::error;
    r.settings = s;
    r.message = "broken on purpose";
    return r;
  }
  std::string_view name() const override { return "broken"; }
};

TEST(BoundMomentTest, ExampleOneEnclosesAnalyticValues) {
  const EstimationProblem p = load_problem(data("example1.json"));
  const auto [m1, m2] = analytic_example1(1.0);
  const BoundResult a = bound_moment(p, 10, {1, 0}, 2);
  EXPECT_LE(a.lower, m1 + 1e-6);
  EXPECT_GE(a.upper, m1 - 1e-6);
  EXPECT_LT(a.width(), 0.1);
  EXPECT_EQ(a.order, 2);
  const BoundResult b = bound_moment(p, 10, {2, 0}, 2);
  EXPECT_LE(b.lower, m2 + 1e-6);
  EXPECT_GE(b.upper, m2 - 1e-6);
}

TEST(BoundMomentTest, PinnedInitialMoment) {
  const EstimationProblem p = load_problem(data("example1.json"));
  const BoundResult r = bound_moment(p, 0, {1, 0}, 2);
  EXPECT_GE(r.lower, 0.5 - 1e-6);
  EXPECT_LE(r.upper, 0.5 + 1e-6);
}

TEST(BoundMomentTest, RejectsBadQueries) {
  const EstimationProblem p = load_problem(data("example1.json"));
  EXPECT_THROW(bound_moment(p, 11, {1, 0}, 2), std::out_of_range);
  EXPECT_THROW(bound_moment(p, 1, {1, 0, 0}, 2), std::invalid_argument);
  EXPECT_THROW(bound_moment(p, 1, {5, 0}, 2), std::invalid_argument);
  EXPECT_THROW(bound_mass(p, 0, 2), std::invalid_argument);
}

TEST(BoundMomentTest, SolverFailureGivesInfiniteSides) {
  const EstimationProblem p = load_problem(data("example1.json"));
  EngineSettings s;
  s.backend = std::make_shared<BrokenBackend>();
  const BoundResult r = bound_moment(p, 3, {1, 0}, 1, s);
  EXPECT_EQ(r.lower, -kInf);
  EXPECT_EQ(r.upper, kInf);
  EXPECT_EQ(r.min_report.status, SolveStatus::error);
  EXPECT_FALSE(r.invalidated);
}

TEST(BoundMassTest, SingleCellHasUnitMass) {
  const EstimationProblem p = static_with_cells({1});
  const BoundResult r = bound_mass(p, 0, 2);
  EXPECT_NEAR(r.lower, 1.0, 1e-6);
  EXPECT_NEAR(r.upper, 1.0, 1e-6);
}

TEST(BoundMassTest, DisjointCellHasZeroMass) {
  // x1 is pinned at 0.3; the cell [0.5, 1] cannot carry mass.
  const EstimationProblem p = static_with_cells({2});
  const BoundResult empty = bound_mass(p, 1, 2);
  EXPECT_NEAR(empty.lower, 0.0, 1e-6);
  EXPECT_NEAR(empty.upper, 0.0, 1e-6);
  const BoundResult full = bound_mass(p, 0, 2);
  EXPECT_NEAR(full.lower, 1.0, 1e-6);
  EXPECT_NEAR(full.upper, 1.0, 1e-6);
}

TEST(BoundMassTest, CoherentOnCoarseGrid) {
  // Example 2 on a 2x2 grid at r = 2: sum of lower <= 1 <= sum of upper.
  EstimationProblem p = load_problem(data("example2.json"));
  p.partition = make_grid_partition(p, 0, p.partition->states, {2, 2});
  p.queries.clear();
  double lo = 0.0, hi = 0.0;
  for (std::size_t j = 0; j < 4; ++j) {
    const BoundResult r = bound_mass(p, j, 2);
    EXPECT_GE(r.lower, -1e-6);
    EXPECT_LE(r.upper, 1.0 + 1e-6);
    EXPECT_LE(r.lower, r.upper + 1e-6);
    lo += r.lower;
    hi += r.upper;
  }
  EXPECT_LE(lo, 1.0 + 1e-6);
  EXPECT_GE(hi, 1.0 - 1e-6);
}

TEST(ConsistencyTest, ContradictoryMeasurementInvalidated) {
  const EstimationProblem p = load_problem(data("example1_invalid.json"));
  const ConsistencyVerdict v = check_consistency(p, 3);
  EXPECT_EQ(v.outcome, Verdict::invalidated) << v.message;
  EXPECT_LE(v.order, 3);
  EXPECT_GE(v.margin, 1e-6);
  ASSERT_TRUE(v.certificate.has_value());
  EXPECT_EQ(v.reports.size(), static_cast<std::size_t>(v.order));
  // The stored certificate re-verifies against the rebuilt program.
  const Relaxation rel(p, v.order);
  EXPECT_NEAR(certificate_margin(rel.program(Objective{}), *v.certificate), v.margin, 1e-9);
}

TEST(ConsistencyTest, TrueDataNotInvalidated) {
  const EstimationProblem p = load_problem(data("example1.json"));
  const ConsistencyVerdict v = check_consistency(p, 2);
  EXPECT_EQ(v.outcome, Verdict::not_invalidated) << v.message;
  EXPECT_EQ(v.order, 2);
}

TEST(ConsistencyTest, EmptyProblemNotInvalidated) {
  EstimationProblem p;
  p.system.state_names = {"x"};
  p.system.field = {Polynomial(1)};
  p.box = {Interval{-1.0, 1.0}};
  p.times = {0.0, 1.0};
  p.support.resize(2);
  const ConsistencyVerdict v = check_consistency(p, 2);
  EXPECT_EQ(v.outcome, Verdict::not_invalidated) << v.message;
}

TEST(ConsistencyTest, FailingSolverIsUndecided) {
  const EstimationProblem p = load_problem(data("example1.json"));
  EngineSettings s;
  s.backend = std::make_shared<BrokenBackend>();
  const ConsistencyVerdict v = check_consistency(p, 2, s);
  EXPECT_EQ(v.outcome, Verdict::undecided);
  EXPECT_EQ(v.reports.size(), 2u);
}

TEST(RunQueriesTest, OrderAndIsolation) {
  EstimationProblem p = load_problem(data("static.json"));
  p.queries.resize(6);
  Query bad;
  bad.id = "bad";
  bad.exponents = {1};
  p.queries.insert(p.queries.begin() + 2, bad);
  EngineSettings serial;
  const auto a = run_queries(p, serial);
  EngineSettings parallel;
  parallel.jobs = 3;
  const auto b = run_queries(p, parallel);
  ASSERT_EQ(a.size(), 7u);
  ASSERT_EQ(b.size(), 7u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].query.id, p.queries[i].id);
    EXPECT_EQ(b[i].query.id, p.queries[i].id);
    if (i == 2) {
      EXPECT_FALSE(a[i].error.empty());
      EXPECT_FALSE(a[i].bound.has_value());
      EXPECT_FALSE(b[i].error.empty());
      continue;
    }
    ASSERT_TRUE(a[i].bound.has_value()) << a[i].error;
    ASSERT_TRUE(b[i].bound.has_value()) << b[i].error;
    EXPECT_EQ(a[i].bound->lower, b[i].bound->lower);
    EXPECT_EQ(a[i].bound->upper, b[i].bound->upper);
  }
}

TEST(RunQueriesTest, MixedKinds) {
  EstimationProblem p = static_with_cells({2});
  Query m;
  m.id = "x1";
  m.time_index = 1;
  m.exponents = {1, 0};
  Query c;
  c.kind = QueryKind::mass;
  c.id = "cell0";
  c.cell = 0;
  Query v;
  v.kind = QueryKind::consistency;
  v.id = "check";
  p.queries = {m, c, v};
  EngineSettings s;
  s.order = 2;
  const auto r = run_queries(p, s);
  ASSERT_EQ(r.size(), 3u);
  ASSERT_TRUE(r[0].bound.has_value());
  EXPECT_NEAR(r[0].bound->lower, 0.3, 1e-6);
  EXPECT_NEAR(r[0].bound->upper, 0.3, 1e-6);
  ASSERT_TRUE(r[1].bound.has_value());
  EXPECT_NEAR(r[1].bound->lower, 1.0, 1e-6);
  ASSERT_TRUE(r[2].verdict.has_value());
  EXPECT_EQ(r[2].verdict->outcome, Verdict::not_invalidated);
}

TEST(RunQueriesTest, EffectiveOrder) {
  EstimationProblem p = load_problem(data("example1.json"));
  Query q;
  EngineSettings s;
  EXPECT_EQ(effective_order(p, q, s), 3);
  q.order = 2;
  EXPECT_EQ(effective_order(p, q, s), 2);
  s.order = 4;
  EXPECT_EQ(effective_order(p, q, s), 4);
}

}  // namespace
}  // namespace occmom
