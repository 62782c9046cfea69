#include "occmom/engine.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <thread>

namespace occmom {
namespace {

const SdpBackend& backend_of(const EngineSettings& s) {
  return s.backend ? *s.backend : *default_backend();
}

bool has_value(const SolveReport& r) {
  return (r.status == SolveStatus::optimal || r.status == SolveStatus::inaccurate) && r.objective;
}

bool certified(const SolveReport& r, double margin) {
  return r.status == SolveStatus::infeasible && r.certificate && r.certificate->margin >= margin;
}

void check_query(const EstimationProblem& problem, const Query& q, int order) {
  if (q.kind == QueryKind::moment) {
    if (q.time_index >= problem.n_times()) throw std::out_of_range("time index out of range");
    if (q.exponents.size() != problem.n_x()) throw std::invalid_argument("exponent vector has wrong length");
    int deg = 0;
    for (int e : q.exponents) {
      if (e < 0) throw std::invalid_argument("negative exponent");
      deg += e;
    }
    if (deg > 2 * order) {
      throw std::invalid_argument("moment degree " + std::to_string(deg) + " exceeds 2r = " +
                                  std::to_string(2 * order));
    }
  } else if (q.kind == QueryKind::mass) {
    if (!problem.partition) throw std::invalid_argument("mass query without partition");
    if (q.cell >= problem.partition->cells.size()) throw std::out_of_range("cell index out of range");
  }
}

}  // namespace

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::not_invalidated:
      return "not_invalidated";
    case Verdict::invalidated:
      return "invalidated";
    case Verdict::undecided:
      return "undecided";
  }
  return "undecided";
}

int effective_order(const EstimationProblem& problem, const Query& query, const EngineSettings& settings) {
  if (settings.order) return *settings.order;
  if (query.order) return *query.order;
  return problem.order;
}

BoundResult bound_query(const Relaxation& relaxation, const Query& query, const EngineSettings& settings) {
  const auto start = std::chrono::steady_clock::now();
  BoundResult res;
  res.query = query;
  res.order = relaxation.order();
  Objective lo, hi;
  if (query.kind == QueryKind::moment) {
    lo = Objective::moment(query.time_index, query.exponents, Sense::minimize);
    hi = Objective::moment(query.time_index, query.exponents, Sense::maximize);
  } else if (query.kind == QueryKind::mass) {
    lo = Objective::mass(query.cell, Sense::minimize);
    hi = Objective::mass(query.cell, Sense::maximize);
  } else {
    throw std::invalid_argument("bound_query needs a moment or mass query");
  }
  const SdpBackend& backend = backend_of(settings);
  res.min_report = backend.solve(relaxation.program(lo), settings.solver);
  res.max_report = backend.solve(relaxation.program(hi), settings.solver);
  // Report the weaker of primal and dual objective so the interval stays an
  // outer bound when the solve stops short of a zero gap.
  if (has_value(res.min_report)) {
    res.lower = std::min(*res.min_report.objective, res.min_report.dual_objective.value_or(kInf));
  }
  if (has_value(res.max_report)) {
    res.upper = std::max(*res.max_report.objective, res.max_report.dual_objective.value_or(-kInf));
  }
  res.invalidated = certified(res.min_report, settings.certificate_margin) ||
                    certified(res.max_report, settings.certificate_margin);
  res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return res;
}

BoundResult bound_moment(const EstimationProblem& problem, std::size_t k, const std::vector<int>& exponents,
                         int order, const EngineSettings& settings) {
  Query q;
  q.kind = QueryKind::moment;
  q.id = "moment";
  q.time_index = k;
  q.exponents = exponents;
  q.order = order;
  check_query(problem, q, order);
  const Relaxation relax(problem, order);
  return bound_query(relax, q, settings);
}

BoundResult bound_mass(const EstimationProblem& problem, std::size_t cell, int order,
                       const EngineSettings& settings) {
  Query q;
  q.kind = QueryKind::mass;
  q.id = "mass";
  q.cell = cell;
  q.order = order;
  check_query(problem, q, order);
  RelaxationOptions opts;
  opts.split_cells = true;
  const Relaxation relax(problem, order, opts);
  return bound_query(relax, q, settings);
}

ConsistencyVerdict check_consistency(const EstimationProblem& problem, int max_order,
                                     const EngineSettings& settings) {
  ConsistencyVerdict v;
  const SdpBackend& backend = backend_of(settings);
  bool last_ok = false;
  for (int r = std::max(1, settings.min_consistency_order); r <= max_order; ++r) {
    const Relaxation relax(problem, r);
    SolveReport rep = backend.solve(relax.program(Objective{}), settings.solver);
    v.order = r;
    last_ok = rep.status == SolveStatus::optimal;
    if (certified(rep, settings.certificate_margin)) {
      v.outcome = Verdict::invalidated;
      v.margin = rep.certificate->margin;
      v.certificate = rep.certificate;
      v.message = "relaxation of order " + std::to_string(r) + " is infeasible";
      v.reports.push_back(std::move(rep));
      return v;
    }
    if (rep.status == SolveStatus::infeasible) {
      v.message = "order " + std::to_string(r) + " reported infeasible without a certified margin";
    } else if (rep.status != SolveStatus::optimal) {
      v.message = "order " + std::to_string(r) + ": " + to_string(rep.status) +
                  (rep.message.empty() ? "" : " (" + rep.message + ")");
    }
    v.reports.push_back(std::move(rep));
  }
  if (last_ok) {
    v.outcome = Verdict::not_invalidated;
    v.message = "feasible at order " + std::to_string(v.order);
  } else {
    v.outcome = Verdict::undecided;
  }
  return v;
}

std::vector<QueryResult> run_queries(const EstimationProblem& problem, const EngineSettings& settings) {
  return run_queries(problem, problem.queries, settings);
}

std::vector<QueryResult> run_queries(const EstimationProblem& problem, const std::vector<Query>& queries,
                                     const EngineSettings& settings) {
  std::vector<QueryResult> results(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) results[i].query = queries[i];

  // One shared skeleton per (order, cell split).
  using Key = std::pair<int, bool>;
  std::map<Key, std::shared_ptr<const Relaxation>> skeletons;
  std::map<Key, std::string> skeleton_errors;
  std::vector<std::optional<Key>> key_of(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const Query& q = queries[i];
    if (q.kind == QueryKind::consistency) continue;
    const int r = effective_order(problem, q, settings);
    try {
      check_query(problem, q, r);
    } catch (const std::exception& e) {
      results[i].error = e.what();
      continue;
    }
    const Key key{r, q.kind == QueryKind::mass};
    key_of[i] = key;
    if (skeletons.count(key) || skeleton_errors.count(key)) continue;
    try {
      RelaxationOptions opts;
      opts.split_cells = key.second;
      skeletons[key] = std::make_shared<const Relaxation>(problem, r, opts);
    } catch (const std::exception& e) {
      skeleton_errors[key] = e.what();
    }
  }

  auto work = [&](std::size_t i) {
    QueryResult& out = results[i];
    if (!out.error.empty()) return;
    const Query& q = queries[i];
    try {
      if (q.kind == QueryKind::consistency) {
        out.verdict = check_consistency(problem, effective_order(problem, q, settings), settings);
        return;
      }
      const Key key = *key_of[i];
      if (auto it = skeleton_errors.find(key); it != skeleton_errors.end()) {
        out.error = it->second;
        return;
      }
      out.bound = bound_query(*skeletons.at(key), q, settings);
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  };

  const std::size_t jobs = static_cast<std::size_t>(std::max(1, settings.jobs));
  if (jobs == 1 || queries.size() <= 1) {
    for (std::size_t i = 0; i < queries.size(); ++i) work(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(jobs, queries.size()); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < queries.size(); i = next++) work(i);
    });
  }
  for (auto& th : pool) th.join();
  return results;
}

}  // namespace occmom
