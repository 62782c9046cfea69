#include "occmom/conic.h"

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "sdpa_reader.h"

namespace occmom {
namespace {

// min / max nu2 subject to [[1, 0.5], [0.5, nu2]] >= 0, nu2 <= 2.
ConicProgram toy(Sense sense) {
  ConicProgram p(1);
  p.objective[0] = 1.0;
  p.sense = sense;
  p.upper[0] = 2.0;
  PsdBlock b;
  b.size = 2;
  b.entries.push_back({0, 0, AffineForm{1.0, {}}});
  b.entries.push_back({1, 0, AffineForm{0.5, {}}});
  LinearForm v;
  v.add(0, 1.0);
  b.entries.push_back({1, 1, AffineForm{0.0, v}});
  p.psd_blocks.push_back(b);
  return p;
}

LinearForm form(std::initializer_list<std::pair<std::size_t, double>> terms) {
  LinearForm f;
  for (auto [v, c] : terms) f.add(v, c);
  return f;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff();
}

// Reported primal within 10x tolerance of every constraint.
void expect_primal_feasible(const ConicProgram& p, const SolveReport& r) {
  ASSERT_EQ(r.primal.size(), p.n_vars);
  const double tol = 10 * r.settings.feasibility_tol;
  for (const auto& row : p.rows) {
    const double v = row.form.eval(r.primal) - row.rhs;
    const double scale = std::max(1.0, std::abs(row.rhs));
    if (row.relation == Relation::equal) EXPECT_LE(std::abs(v), tol * scale) << row.label;
    if (row.relation == Relation::lower_bound) EXPECT_GE(v, -tol * scale) << row.label;
    if (row.relation == Relation::upper_bound) EXPECT_LE(v, tol * scale) << row.label;
  }
  for (std::size_t i = 0; i < p.n_vars; ++i) {
    EXPECT_GE(r.primal[i], p.lower[i] - tol);
    EXPECT_LE(r.primal[i], p.upper[i] + tol);
  }
  for (const auto& b : p.psd_blocks) EXPECT_GE(min_eigenvalue(b.evaluate(r.primal)), -tol);
}

TEST(ConicTest, SchurComplementToy) {
  const ConicProgram p = toy(Sense::minimize);
  const SolveReport r = solve(p);
  ASSERT_EQ(r.status, SolveStatus::optimal) << r.message;
  EXPECT_NEAR(*r.objective, 0.25, 1e-6);
  EXPECT_NEAR(*r.dual_objective, 0.25, 1e-6);
  expect_primal_feasible(p, r);

  const SolveReport up = solve(toy(Sense::maximize));
  ASSERT_EQ(up.status, SolveStatus::optimal) << up.message;
  EXPECT_NEAR(*up.objective, 2.0, 1e-6);
}

TEST(ConicTest, LinearProgram) {
  // max x + 2y s.t. x + y <= 4, x - y >= -2, x, y >= 0  ->  (1, 3), value 7.
  ConicProgram p(2);
  p.sense = Sense::maximize;
  p.objective = {1.0, 2.0};
  p.lower = {0.0, 0.0};
  p.rows.push_back({form({{0, 1.0}, {1, 1.0}}), 4.0, Relation::upper_bound, "cap"});
  p.rows.push_back({form({{0, 1.0}, {1, -1.0}}), -2.0, Relation::lower_bound, "diff"});
  const SolveReport r = solve(p);
  ASSERT_EQ(r.status, SolveStatus::optimal) << r.message;
  EXPECT_NEAR(*r.objective, 7.0, 1e-6);
  EXPECT_NEAR(r.primal[0], 1.0, 1e-5);
  EXPECT_NEAR(r.primal[1], 3.0, 1e-5);
  expect_primal_feasible(p, r);
}

TEST(ConicTest, ContradictoryEqualitiesAreInfeasible) {
  ConicProgram p = toy(Sense::minimize);
  p.lower[0] = -2.0;
  p.rows.push_back({form({{0, 1.0}}), 1.0, Relation::equal, "one"});
  p.rows.push_back({form({{0, 1.0}}), 0.0, Relation::equal, "zero"});
  const SolveReport r = solve(p);
  EXPECT_EQ(r.status, SolveStatus::infeasible) << r.message;
  ASSERT_TRUE(r.certificate.has_value());
  EXPECT_GT(r.certificate->margin, 1e-6);
  EXPECT_NEAR(certificate_margin(p, *r.certificate), r.certificate->margin, 1e-9);
}

TEST(ConicTest, ConeInfeasibility) {
  // nu2 <= 0.2 contradicts the Schur bound nu2 >= 0.25.
  ConicProgram p = toy(Sense::minimize);
  p.lower[0] = -2.0;
  p.rows.push_back({form({{0, 1.0}}), 0.2, Relation::upper_bound, "cap"});
  const SolveReport r = solve(p);
  EXPECT_EQ(r.status, SolveStatus::infeasible) << r.message;
  ASSERT_TRUE(r.certificate.has_value());
  EXPECT_GT(r.certificate->margin, 0.0);
}

TEST(ConicTest, Unbounded) {
  ConicProgram p(2);
  p.sense = Sense::maximize;
  p.objective = {1.0, 0.0};
  p.rows.push_back({form({{0, 1.0}, {1, -1.0}}), 0.0, Relation::equal, "tie"});
  const SolveReport r = solve(p);
  EXPECT_EQ(r.status, SolveStatus::unbounded) << r.message;
}

TEST(ConicTest, NestedProgramsOrdered) {
  // Adding a constraint can only raise a minimum.
  ConicProgram loose = toy(Sense::minimize);
  ConicProgram tight = loose;
  tight.rows.push_back({form({{0, 1.0}}), 0.5, Relation::lower_bound, "extra"});
  const SolveReport a = solve(loose);
  const SolveReport b = solve(tight);
  ASSERT_EQ(a.status, SolveStatus::optimal);
  ASSERT_EQ(b.status, SolveStatus::optimal);
  EXPECT_LE(*a.objective, *b.objective + 1e-6);
  EXPECT_NEAR(*b.objective, 0.5, 1e-6);
}

TEST(ConicTest, RandomSdpAgainstEigenvalue) {
  // min <C, X> s.t. tr X = 1, X >= 0 equals lambda_min(C).
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 4;
    Eigen::MatrixXd c(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) c(i, j) = c(j, i) = g(rng);
    ConicProgram p(n * (n + 1) / 2);
    PsdBlock b;
    b.size = n;
    LinearForm trace;
    std::size_t v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j, ++v) {
        b.entries.push_back({i, j, AffineForm{0.0, form({{v, 1.0}})}});
        p.objective[v] = i == j ? c(i, j) : 2 * c(i, j);
        if (i == j) trace.add(v, 1.0);
      }
    }
    p.psd_blocks.push_back(b);
    p.rows.push_back({trace, 1.0, Relation::equal, "trace"});
    const SolveReport r = solve(p);
    ASSERT_EQ(r.status, SolveStatus::optimal) << r.message;
    EXPECT_NEAR(*r.objective, min_eigenvalue(c), 1e-6);
    expect_primal_feasible(p, r);
  }
}

TEST(ConicTest, CheckRejectsMalformedPrograms) {
  ConicProgram p = toy(Sense::minimize);
  p.psd_blocks[0].entries.push_back({0, 1, AffineForm{}});
  EXPECT_THROW(p.check(), std::invalid_argument);
  ConicProgram q(1);
  q.rows.push_back({LinearForm{}, 1.0, Relation::equal, "empty"});
  EXPECT_THROW(q.check(), std::invalid_argument);
  ConicProgram r(1);
  r.rows.push_back({form({{3, 1.0}}), 1.0, Relation::equal, "range"});
  EXPECT_THROW(r.check(), std::invalid_argument);
}

TEST(ConicTest, BackendNeverThrowsOnMalformedInput) {
  ConicProgram p(1);
  p.rows.push_back({form({{5, 1.0}}), 1.0, Relation::equal, "range"});
  SolveReport r;
  EXPECT_NO_THROW(r = solve(p));
  EXPECT_EQ(r.status, SolveStatus::error);
  EXPECT_FALSE(r.message.empty());
}

// Coefficient of variable v (0 = constant) in entry (i, j) of each block as
// the SDPA convention sees it: F(x) = sum_v F_v x_v - F_0.
using Coefs = std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>, double>;

Coefs expected_psd_coefs(const ConicProgram& p, std::size_t first_block) {
  Coefs out;
  for (std::size_t b = 0; b < p.psd_blocks.size(); ++b) {
    for (const auto& e : p.psd_blocks[b].entries) {
      const auto key = [&](std::size_t m) { return std::make_tuple(m, first_block + b, e.col + 1, e.row + 1); };
      if (e.value.constant != 0.0) out[key(0)] += -e.value.constant;
      for (auto [v, c] : e.value.linear.terms) out[key(v + 1)] += c;
    }
  }
  std::erase_if(out, [](const auto& kv) { return kv.second == 0.0; });
  return out;
}

TEST(SdpaTest, ToyRoundTrip) {
  const ConicProgram p = toy(Sense::minimize);
  std::stringstream s;
  export_sdpa(p, s);
  const testing::SdpaProblem q = testing::read_sdpa(s);
  EXPECT_EQ(q.m, 1u);
  // Upper bound row as a 1x1 diagonal block, then the 2x2 PSD block.
  ASSERT_EQ(q.block_struct, (std::vector<long>{-1, 2}));
  EXPECT_EQ(q.c, (std::vector<double>{1.0}));
  Coefs psd;
  for (const auto& [k, v] : q.entries)
    if (std::get<1>(k) == 2) psd[k] = v;
  EXPECT_EQ(psd, expected_psd_coefs(p, 2));
  // -x + 2 >= 0.
  EXPECT_EQ(q.entries.at({1, 1, 1, 1}), -1.0);
  EXPECT_EQ(q.entries.at({0, 1, 1, 1}), -2.0);
}

TEST(SdpaTest, DiagonalOnlyWithoutPsdBlocks) {
  ConicProgram p(2);
  p.objective = {1.0, -1.0};
  p.lower = {0.0, 0.0};
  p.rows.push_back({form({{0, 1.0}, {1, 1.0}}), 1.0, Relation::equal, "sum"});
  std::stringstream s;
  export_sdpa(p, s);
  const testing::SdpaProblem q = testing::read_sdpa(s);
  // Two lower bounds and one equality as an opposing pair.
  ASSERT_EQ(q.block_struct, (std::vector<long>{-4}));
  for (const auto& [k, v] : q.entries) EXPECT_EQ(std::get<2>(k), std::get<3>(k));
}

TEST(SdpaTest, RandomProgramsReproduceExactly) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    ConicProgram p(6);
    p.sense = trial % 2 ? Sense::maximize : Sense::minimize;
    for (auto& c : p.objective) c = u(rng) / 3.0;
    for (std::size_t b = 0; b < 3; ++b) {
      PsdBlock blk;
      blk.size = 2 + b;
      for (std::size_t i = 0; i < blk.size; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
          AffineForm a{u(rng) * 1e-3, form({{(i + j + b) % 6, u(rng)}, {(i * 7 + b) % 6, u(rng) / 7}})};
          blk.entries.push_back({i, j, a});
        }
      }
      p.psd_blocks.push_back(blk);
    }
    std::stringstream s;
    export_sdpa(p, s);
    const testing::SdpaProblem q = testing::read_sdpa(s);
    ASSERT_EQ(q.m, 6u);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_EQ(q.c[i], (p.sense == Sense::maximize ? -1.0 : 1.0) * p.objective[i]);
    }
    Coefs expected = expected_psd_coefs(p, 1);
    Coefs got(q.entries.begin(), q.entries.end());
    ASSERT_EQ(got.size(), expected.size());
    for (const auto& [k, v] : expected) EXPECT_EQ(got.at(k), v);
  }
}

}  // namespace
}  // namespace occmom
