#pragma once

// Reference solutions: fixed-step RK4 trajectories, Monte-Carlo moment and
// cell-mass estimates, the closed-form moments of the x1' = -x1 x2 example,
// and fabrication of interval moment data.

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "occmom/distribution.h"
#include "occmom/poly.h"
#include "occmom/problem.h"

namespace occmom {

/// States at each requested time, integrated from t = 0 with classical RK4.
/// Each stretch between consecutive times uses the smallest equal step not
/// exceeding @p step. Throws std::runtime_error on a non-finite state.
std::vector<std::vector<double>> integrate(const DynamicalSystem& system,
                                           std::vector<double> x0,
                                           const std::vector<double>& times,
                                           double step = 1e-3);

/// Draws one point from a product law.
std::vector<double> sample_point(const InitialDistribution& dist,
                                 std::mt19937_64& rng);

/// Beta(alpha, beta) variate on [0, 1] as G_a / (G_a + G_b).
double sample_beta(double alpha, double beta, std::mt19937_64& rng);

struct SampleRun {
  std::uint64_t seed = 1;
  std::size_t samples = 10000;
  double step = 1e-3;
  int jobs = 1;
  /// Samples per seeded substream; fixed so results do not depend on jobs.
  std::size_t chunk = 1000;
};

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo estimates of endpoint moments E[x(t_k)^b] and occupation
/// moments E[int_{t_k}^{t_{k+1}} t^a x(t)^b dt].
struct ReferenceMoments {
  std::size_t samples = 0;
  /// Samples whose trajectory left the declared box at some grid time.
  std::size_t box_exits = 0;
  std::vector<Monomial> endpoint_monomials;
  std::vector<Monomial> occupation_monomials;
  /// [time index][monomial]
  std::vector<std::vector<Estimate>> endpoint;
  /// [interval index][monomial]
  std::vector<std::vector<Estimate>> occupation;
};

ReferenceMoments reference_moments(const EstimationProblem& problem,
                                   const InitialDistribution& dist,
                                   const std::vector<Monomial>& endpoint_monomials,
                                   const std::vector<Monomial>& occupation_monomials,
                                   const SampleRun& run);

struct MomentEstimate {
  std::size_t time_index = 0;
  std::vector<int> exponents;
  Estimate value;
};

/// Pure moments x_i^m, m = 1..degree, of the selected states at the selected
/// time indices (all when empty).
std::vector<MomentEstimate> sample_moments(const EstimationProblem& problem,
                                           const InitialDistribution& dist,
                                           int degree,
                                           const std::vector<std::size_t>& time_indices,
                                           const std::vector<std::size_t>& states,
                                           const SampleRun& run);

/// Empirical masses of the partition cells (standard error sqrt(p(1-p)/N)).
/// Points outside every cell are counted in no cell.
std::vector<Estimate> cell_masses(const InitialDistribution& dist,
                                  const Partition& partition,
                                  const SampleRun& run);

/// Closed-form first and second moments of x1(t) for x1' = -x1 x2,
/// x2' = 0, x1(0) = x10, x2 ~ U[0, 1]; the t = 0 limits are returned at 0.
std::pair<double, double> analytic_example1(double t, double x10 = 0.5);

/// [m (1 - slack), m (1 + slack)] with ends ordered for negative m.
std::vector<MomentBound> fabricate_moment_data(const std::vector<MomentEstimate>& moments,
                                               double slack);

/// Raw moments of Beta(alpha, beta) on [0, 1], degrees 0..degree.
std::vector<double> beta_moments(double alpha, double beta, int degree);

}  // namespace occmom
