#include "occmom/oracle.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

namespace occmom {
namespace {

// Field flattened for fast repeated evaluation.
class CompiledField {
 public:
  explicit CompiledField(const DynamicalSystem& sys) : n_(sys.n_x()) {
    for (const Polynomial& f : sys.field) {
      std::vector<Term> terms;
      for (const auto& [m, c] : f.terms()) {
        Term t;
        t.coef = c;
        t.exps = m.raw();
        terms.push_back(std::move(t));
        max_deg_ = std::max(max_deg_, m.degree());
      }
      comps_.push_back(std::move(terms));
    }
  }

  void eval(double t, const std::vector<double>& x, std::vector<double>& out) const {
    out.assign(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      for (const Term& term : comps_[i]) {
        double v = term.coef;
        for (int k = 0; k < term.exps[0]; ++k) v *= t;
        for (std::size_t j = 0; j < n_; ++j) {
          for (int k = 0; k < term.exps[j + 1]; ++k) v *= x[j];
        }
        s += v;
      }
      out[i] = s;
    }
  }

  std::size_t n() const { return n_; }

 private:
  struct Term {
    double coef;
    std::vector<int> exps;
  };
  std::size_t n_;
  int max_deg_ = 0;
  std::vector<std::vector<Term>> comps_;
};

void rk4_step(const CompiledField& f, double t, double h, std::vector<double>& x) {
  const std::size_t n = f.n();
  std::vector<double> k1, k2, k3, k4, tmp(n);
  f.eval(t, x, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
  f.eval(t + 0.5 * h, tmp, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
  f.eval(t + 0.5 * h, tmp, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
  f.eval(t + h, tmp, k4);
  for (std::size_t i = 0; i < n; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

void check_finite(const std::vector<double>& x, double t) {
  for (double v : x) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite state at t = " + std::to_string(t));
  }
}

std::size_t steps_for(double span, double step) {
  if (span <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(span / step - 1e-9));
}

// Evaluates monomials from per-variable power tables [t, x_1..x_n].
class MonomialEvaluator {
 public:
  MonomialEvaluator(const std::vector<Monomial>& monos, std::size_t n_x) : monos_(monos), n_x_(n_x) {
    for (const auto& m : monos) max_deg_ = std::max(max_deg_, m.degree());
    powers_.assign((n_x + 1) * static_cast<std::size_t>(max_deg_ + 1), 1.0);
  }

  void set_point(double t, const std::vector<double>& x) {
    const auto stride = static_cast<std::size_t>(max_deg_ + 1);
    for (std::size_t v = 0; v <= n_x_; ++v) {
      const double base = v == 0 ? t : x[v - 1];
      double p = 1.0;
      for (std::size_t e = 0; e < stride; ++e) {
        powers_[v * stride + e] = p;
        p *= base;
      }
    }
  }

  double value(std::size_t i) const {
    const auto stride = static_cast<std::size_t>(max_deg_ + 1);
    const auto& ex = monos_[i].raw();
    double v = 1.0;
    for (std::size_t k = 0; k < ex.size(); ++k) {
      if (ex[k] != 0) v *= powers_[k * stride + static_cast<std::size_t>(ex[k])];
    }
    return v;
  }

  std::size_t size() const { return monos_.size(); }

 private:
  const std::vector<Monomial>& monos_;
  std::size_t n_x_;
  int max_deg_ = 0;
  std::vector<double> powers_;
};

// Running (count, mean, M2) combined in a fixed order.
struct Stat {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void merge(const Stat& o) {
    if (o.n == 0.0) return;
    if (n == 0.0) {
      *this = o;
      return;
    }
    const double tot = n + o.n;
    const double delta = o.mean - mean;
    mean += delta * o.n / tot;
    m2 += o.m2 + delta * delta * n * o.n / tot;
    n = tot;
  }

  Estimate estimate() const {
    Estimate e;
    e.mean = mean;
    e.std_error = n > 1.0 ? std::sqrt(std::max(0.0, m2) / (n - 1.0) / n) : 0.0;
    return e;
  }
};

// Shifted sums for one chunk; the shift is the chunk's first value so that
// constant data give exactly zero spread.
struct ShiftedSum {
  double shift = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  double n = 0.0;

  void add(double v) {
    if (n == 0.0) shift = v;
    const double d = v - shift;
    s1 += d;
    s2 += d * d;
    n += 1.0;
  }

  Stat stat() const {
    Stat s;
    s.n = n;
    if (n == 0.0) return s;
    s.mean = shift + s1 / n;
    s.m2 = s2 - s1 * s1 / n;
    return s;
  }
};

std::mt19937_64 chunk_rng(std::uint64_t seed, std::size_t chunk) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chunk), static_cast<std::uint32_t>(chunk >> 32)};
  return std::mt19937_64(seq);
}

template <class Fn>
void for_chunks(std::size_t n_chunks, int jobs, Fn&& fn) {
  const auto width = static_cast<std::size_t>(std::max(1, jobs));
  if (width == 1 || n_chunks <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(width, n_chunks); ++t) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < n_chunks; c = next++) fn(c);
    });
  }
  for (auto& th : pool) th.join();
}

bool inside_box(const EstimationProblem& p, const std::vector<double>& x) {
  for (std::size_t i = 0; i < x.size() && i < p.box.size(); ++i) {
    if (!p.box[i]) continue;
    const double tol = 1e-9 * std::max(1.0, std::abs(x[i]));
    if (x[i] < p.box[i]->lower - tol || x[i] > p.box[i]->upper + tol) return false;
  }
  return true;
}

}  // namespace

std::vector<std::vector<double>> integrate(const DynamicalSystem& system, std::vector<double> x0,
                                           const std::vector<double>& times, double step) {
  if (x0.size() != system.n_x()) throw std::invalid_argument("initial point has wrong dimension");
  if (!(step > 0.0)) throw std::invalid_argument("integration step must be positive");
  const CompiledField f(system);
  std::vector<std::vector<double>> out;
  out.reserve(times.size());
  double t = 0.0;
  for (double target : times) {
    if (target < t) throw std::invalid_argument("integration times must be nondecreasing from 0");
    const std::size_t n = steps_for(target - t, step);
    const double h = n ? (target - t) / static_cast<double>(n) : 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      rk4_step(f, t + static_cast<double>(s) * h, h, x0);
      check_finite(x0, t + static_cast<double>(s + 1) * h);
    }
    t = target;
    out.push_back(x0);
  }
  return out;
}

double sample_beta(double alpha, double beta, std::mt19937_64& rng) {
  std::gamma_distribution<double> ga(alpha, 1.0), gb(beta, 1.0);
  const double a = ga(rng);
  const double b = gb(rng);
  return a / (a + b);
}

std::vector<double> sample_point(const InitialDistribution& dist, std::mt19937_64& rng) {
  std::vector<double> x;
  x.reserve(dist.coordinates.size());
  for (const auto& c : dist.coordinates) {
    if (const auto* d = std::get_if<Dirac>(&c.law)) {
      x.push_back(d->value);
    } else if (const auto* u = std::get_if<Uniform>(&c.law)) {
      x.push_back(std::uniform_real_distribution<double>(u->lower, u->upper)(rng));
    } else if (const auto* b = std::get_if<Beta>(&c.law)) {
      x.push_back(b->lower + (b->upper - b->lower) * sample_beta(b->alpha, b->beta, rng));
    } else if (const auto* dd = std::get_if<Discrete>(&c.law)) {
      std::discrete_distribution<std::size_t> pick(dd->weights.begin(), dd->weights.end());
      x.push_back(dd->points.at(pick(rng)));
    }
  }
  return x;
}

ReferenceMoments reference_moments(const EstimationProblem& problem, const InitialDistribution& dist,
                                   const std::vector<Monomial>& endpoint_monomials,
                                   const std::vector<Monomial>& occupation_monomials, const SampleRun& run) {
  const std::size_t n = problem.n_x();
  if (dist.coordinates.size() != n) throw std::invalid_argument("distribution has wrong dimension");
  if (run.samples == 0 || run.chunk == 0) throw std::invalid_argument("sample count must be positive");
  const std::size_t nt = problem.n_times();
  const std::size_t n_int = nt > 0 ? nt - 1 : 0;
  const std::size_t ne = endpoint_monomials.size(), no = occupation_monomials.size();
  const std::size_t n_chunks = (run.samples + run.chunk - 1) / run.chunk;
  const CompiledField field(problem.system);

  struct ChunkResult {
    std::vector<ShiftedSum> endpoint, occupation;
    std::size_t exits = 0;
  };
  std::vector<ChunkResult> chunks(n_chunks);

  for_chunks(n_chunks, run.jobs, [&](std::size_t c) {
    ChunkResult& res = chunks[c];
    res.endpoint.resize(nt * ne);
    res.occupation.resize(n_int * no);
    MonomialEvaluator ev_end(endpoint_monomials, n), ev_occ(occupation_monomials, n);
    std::vector<double> occ_acc(no);
    auto rng = chunk_rng(run.seed, c);
    const std::size_t first = c * run.chunk;
    const std::size_t last = std::min(run.samples, first + run.chunk);
    for (std::size_t s = first; s < last; ++s) {
      std::vector<double> x = sample_point(dist, rng);
      double t = 0.0;
      bool exited = false;
      if (nt > 0 && problem.times[0] > 0.0) {
        const std::size_t m = steps_for(problem.times[0], run.step);
        const double h = problem.times[0] / static_cast<double>(m);
        for (std::size_t j = 0; j < m; ++j) rk4_step(field, static_cast<double>(j) * h, h, x);
        t = problem.times[0];
      }
      for (std::size_t k = 0; k < nt; ++k) {
        check_finite(x, t);
        if (!inside_box(problem, x)) exited = true;
        ev_end.set_point(t, x);
        for (std::size_t i = 0; i < ne; ++i) res.endpoint[k * ne + i].add(ev_end.value(i));
        if (k + 1 == nt) break;
        // Composite Simpson over an even number of RK4 steps.
        const double span = problem.times[k + 1] - t;
        std::size_t m = std::max<std::size_t>(2, steps_for(span, run.step));
        if (m % 2) ++m;
        const double h = span / static_cast<double>(m);
        std::fill(occ_acc.begin(), occ_acc.end(), 0.0);
        for (std::size_t j = 0; j <= m; ++j) {
          const double tj = t + static_cast<double>(j) * h;
          if (no) {
            const double w = (j == 0 || j == m) ? 1.0 : (j % 2 ? 4.0 : 2.0);
            ev_occ.set_point(tj, x);
            for (std::size_t i = 0; i < no; ++i) occ_acc[i] += w * ev_occ.value(i);
          }
          if (j < m) rk4_step(field, tj, h, x);
        }
        for (std::size_t i = 0; i < no; ++i) res.occupation[k * no + i].add(occ_acc[i] * h / 3.0);
        t = problem.times[k + 1];
      }
      if (exited) ++res.exits;
    }
  });

  ReferenceMoments out;
  out.samples = run.samples;
  out.endpoint_monomials = endpoint_monomials;
  out.occupation_monomials = occupation_monomials;
  out.endpoint.assign(nt, std::vector<Estimate>(ne));
  out.occupation.assign(n_int, std::vector<Estimate>(no));
  for (std::size_t k = 0; k < nt; ++k) {
    for (std::size_t i = 0; i < ne; ++i) {
      Stat st;
      for (const auto& ch : chunks) st.merge(ch.endpoint[k * ne + i].stat());
      out.endpoint[k][i] = st.estimate();
    }
  }
  for (std::size_t k = 0; k < n_int; ++k) {
    for (std::size_t i = 0; i < no; ++i) {
      Stat st;
      for (const auto& ch : chunks) st.merge(ch.occupation[k * no + i].stat());
      out.occupation[k][i] = st.estimate();
    }
  }
  for (const auto& ch : chunks) out.box_exits += ch.exits;
  return out;
}

std::vector<MomentEstimate> sample_moments(const EstimationProblem& problem, const InitialDistribution& dist,
                                           int degree, const std::vector<std::size_t>& time_indices,
                                           const std::vector<std::size_t>& states, const SampleRun& run) {
  if (degree < 1) throw std::invalid_argument("degree cap must be >= 1");
  const std::size_t n = problem.n_x();
  std::vector<std::size_t> sel_states = states;
  if (sel_states.empty()) {
    for (std::size_t i = 0; i < n; ++i) sel_states.push_back(i);
  }
  std::vector<std::size_t> sel_times = time_indices;
  if (sel_times.empty()) {
    for (std::size_t k = 0; k < problem.n_times(); ++k) sel_times.push_back(k);
  }
  std::vector<Monomial> monos;
  std::vector<std::vector<int>> exps;
  for (std::size_t i : sel_states) {
    if (i >= n) throw std::out_of_range("state index out of range");
    for (int m = 1; m <= degree; ++m) {
      std::vector<int> e(n, 0);
      e[i] = m;
      monos.emplace_back(0, e);
      exps.push_back(std::move(e));
    }
  }
  const ReferenceMoments ref = reference_moments(problem, dist, monos, {}, run);
  std::vector<MomentEstimate> out;
  for (std::size_t k : sel_times) {
    if (k >= problem.n_times()) throw std::out_of_range("time index out of range");
    for (std::size_t i = 0; i < monos.size(); ++i) out.push_back({k, exps[i], ref.endpoint[k][i]});
  }
  return out;
}

std::vector<Estimate> cell_masses(const InitialDistribution& dist, const Partition& partition,
                                  const SampleRun& run) {
  if (run.samples == 0 || run.chunk == 0) throw std::invalid_argument("sample count must be positive");
  const std::size_t n_chunks = (run.samples + run.chunk - 1) / run.chunk;
  std::vector<std::vector<std::size_t>> counts(n_chunks, std::vector<std::size_t>(partition.cells.size(), 0));
  for_chunks(n_chunks, run.jobs, [&](std::size_t c) {
    auto rng = chunk_rng(run.seed, c);
    const std::size_t first = c * run.chunk;
    const std::size_t last = std::min(run.samples, first + run.chunk);
    std::vector<double> proj(partition.states.size());
    for (std::size_t s = first; s < last; ++s) {
      const std::vector<double> x = sample_point(dist, rng);
      for (std::size_t j = 0; j < partition.states.size(); ++j) proj[j] = x.at(partition.states[j]);
      if (auto cell = partition.locate(proj)) ++counts[c][*cell];
    }
  });
  const auto total = static_cast<double>(run.samples);
  std::vector<Estimate> out(partition.cells.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    std::size_t hits = 0;
    for (const auto& ch : counts) hits += ch[j];
    const double p = static_cast<double>(hits) / total;
    out[j] = {p, std::sqrt(p * (1.0 - p) / total)};
  }
  return out;
}

std::pair<double, double> analytic_example1(double t, double x10) {
  if (t == 0.0) return {x10, x10 * x10};
  const double nu1 = x10 * -std::expm1(-t) / t;
  const double nu2 = x10 * x10 * -std::expm1(-2.0 * t) / (2.0 * t);
  return {nu1, nu2};
}

std::vector<MomentBound> fabricate_moment_data(const std::vector<MomentEstimate>& moments, double slack) {
  if (slack < 0.0) throw std::invalid_argument("slack must be nonnegative");
  std::vector<MomentBound> out;
  out.reserve(moments.size());
  for (const auto& m : moments) {
    MomentBound b;
    b.time_index = m.time_index;
    b.exponents = m.exponents;
    b.lower = m.value.mean * (1.0 - slack);
    b.upper = m.value.mean * (1.0 + slack);
    if (b.lower > b.upper) std::swap(b.lower, b.upper);
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<double> beta_moments(double alpha, double beta, int degree) {
  std::vector<double> m(static_cast<std::size_t>(degree) + 1, 1.0);
  for (int k = 1; k <= degree; ++k) {
    m[static_cast<std::size_t>(k)] = m[static_cast<std::size_t>(k - 1)] * (alpha + k - 1) / (alpha + beta + k - 1);
  }
  return m;
}

}  // namespace occmom
