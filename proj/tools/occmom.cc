// occmom: moment and probability-mass bounds for polynomial ODEs with
// uncertain initial states.
//
//   occmom bound-moments problem.json --order 3 --out results/
//   occmom bound-mass    problem.json --grid 5x5
//   occmom validate      problem.json
//   occmom oracle        problem.json --samples 10000 --slack 0.01
//   occmom export-sdpa   problem.json --out sdpa/
//
// Exit codes: 0 success, 1 invalid input, 2 solver error; validate returns
// 0 (not invalidated), 3 (invalidated) or 4 (undecided).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "occmom/engine.h"
#include "occmom/oracle.h"
#include "occmom/problem.h"
#include "occmom/relaxation.h"
#include "occmom/results.h"

namespace fs = std::filesystem;
using namespace occmom;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitSolver = 2;
constexpr int kExitInvalidated = 3;
constexpr int kExitUndecided = 4;

struct Options {
  std::string problem;
  std::string out = ".";
  std::optional<int> order;
  double tol_feas = SolverSettings{}.feasibility_tol;
  double tol_gap = SolverSettings{}.gap_tol;
  int max_iter = SolverSettings{}.max_iterations;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  bool timings = false;
  bool verbose = false;
  // bound-moments
  bool overlay = false;
  // bound-mass
  std::string grid;
  // oracle
  std::optional<std::size_t> samples;
  std::optional<double> slack;
  std::optional<int> degree;
  std::optional<double> step;
  // export-sdpa
  std::vector<std::string> query_ids;
};

// Thrown for bad input that is not a problem-file error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
}

fs::path prepare_out(const Options& o) {
  fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw UsageError("output directory " + dir.string() + " is not writable");
  return dir;
}

EstimationProblem load(const Options& o) {
  EstimationProblem p = load_problem(o.problem);
  for (const Diagnostic& d : validate(p)) {
    if (d.severity != Severity::error) std::cerr << "warning: " << d.path << ": " << d.message << "\n";
  }
  if (o.order && *o.order < 1) throw UsageError("--order must be at least 1");
  return p;
}

EngineSettings engine_settings(const Options& o) {
  EngineSettings s;
  s.solver.feasibility_tol = o.tol_feas;
  s.solver.gap_tol = o.tol_gap;
  s.solver.max_iterations = o.max_iter;
  s.solver.verbose = o.verbose;
  s.jobs = o.jobs;
  s.order = o.order;
  return s;
}

RunConfig run_config(const Options& o, const std::string& sub, const EstimationProblem& p) {
  RunConfig c;
  c.subcommand = sub;
  c.problem_path = o.problem;
  c.out_dir = o.out;
  c.order = o.order;
  c.tol_feas = o.tol_feas;
  c.tol_gap = o.tol_gap;
  c.max_iterations = o.max_iter;
  c.jobs = o.jobs;
  c.seed = o.seed.value_or(p.oracle_settings ? p.oracle_settings->seed : 1);
  c.backend = std::string(default_backend()->name());
  c.version = version_string();
  return c;
}

void print_relaxation_warnings(const EstimationProblem& p, const std::vector<Query>& queries, const Options& o) {
  std::set<std::pair<int, bool>> seen;
  const EngineSettings s = engine_settings(o);
  for (const Query& q : queries) {
    const int r = effective_order(p, q, s);
    if (!seen.insert({r, q.kind == QueryKind::mass}).second) continue;
    try {
      RelaxationOptions opts;
      opts.split_cells = q.kind == QueryKind::mass;
      const Relaxation rel(p, r, opts);
      for (const Diagnostic& d : rel.diagnostics()) std::cerr << "note (r=" << r << "): " << d.path << ": " << d.message << "\n";
    } catch (const std::exception&) {
      // Reported per query by the engine.
    }
  }
}

bool solver_failed(const QueryResult& r) {
  if (!r.error.empty()) return true;
  if (r.bound) {
    return r.bound->min_report.status == SolveStatus::error || r.bound->max_report.status == SolveStatus::error;
  }
  return false;
}

void print_table(const std::vector<QueryResult>& results) {
  for (const auto& r : results) {
    std::printf("%-16s ", r.query.id.c_str());
    if (!r.error.empty()) {
      std::printf("error: %s\n", r.error.c_str());
    } else if (r.bound) {
      std::printf("[% .8f, % .8f]  r=%d  %s/%s%s\n", r.bound->lower, r.bound->upper, r.bound->order,
                  to_string(r.bound->min_report.status).c_str(), to_string(r.bound->max_report.status).c_str(),
                  r.bound->invalidated ? "  (infeasible: data inconsistent)" : "");
    } else if (r.verdict) {
      std::printf("%s at r=%d\n", to_string(r.verdict->outcome).c_str(), r.verdict->order);
    } else {
      std::printf("\n");
    }
  }
}

std::string moments_plot_script(bool with_oracle) {
  std::ostringstream s;
  s << "# Interval bounds on moments over time. Run: python3 plot_moments.py\n"
       "import csv\n"
       "from collections import defaultdict\n"
       "import matplotlib.pyplot as plt\n\n"
       "rows = defaultdict(list)\n"
       "with open('results.csv') as f:\n"
       "    for r in csv.DictReader(f):\n"
       "        if r['kind'] != 'moment' or not r['lower'] or not r['upper']:\n"
       "            continue\n"
       "        rows[r['target']].append((float(r['time']), float(r['lower']), float(r['upper'])))\n\n";
  if (with_oracle) {
    s << "oracle = defaultdict(list)\n"
         "with open('oracle_moments.csv') as f:\n"
         "    for r in csv.DictReader(f):\n"
         "        oracle[r['target']].append((float(r['time']), float(r['mean'])))\n\n";
  }
  s << "fig, axes = plt.subplots(1, len(rows), figsize=(5 * max(1, len(rows)), 4), squeeze=False)\n"
       "for ax, (target, pts) in zip(axes[0], sorted(rows.items())):\n"
       "    pts.sort()\n"
       "    t = [p[0] for p in pts]\n"
       "    ax.plot(t, [p[1] for p in pts], 'b-', label='lower bound')\n"
       "    ax.plot(t, [p[2] for p in pts], 'r-', label='upper bound')\n";
  if (with_oracle) {
    s << "    if target in oracle:\n"
         "        o = sorted(oracle[target])\n"
         "        ax.plot([p[0] for p in o], [p[1] for p in o], 'k.', label='Monte Carlo')\n";
  }
  s << "    ax.set_xlabel('t')\n"
       "    ax.set_title('exponents ' + target)\n"
       "    ax.legend()\n"
       "fig.tight_layout()\n"
       "fig.savefig('moments.png', dpi=150)\n";
  return s.str();
}

std::string mass_plot_script(const EstimationProblem& p) {
  const auto& part = *p.partition;
  const std::string xs = p.system.state_names.at(part.states.at(0));
  const std::string ys = part.states.size() > 1 ? p.system.state_names.at(part.states[1]) : "";
  std::ostringstream s;
  s << "# Heatmap of upper bounds on cell probability masses. Run: python3 plot_mass.py\n"
       "import csv\n"
       "import matplotlib.pyplot as plt\n"
       "from matplotlib.patches import Rectangle\n"
       "from matplotlib.collections import PatchCollection\n\n"
       "cells = []\n"
       "with open('mass_table.csv') as f:\n"
       "    for r in csv.DictReader(f):\n"
       "        if not r['upper']:\n"
       "            continue\n";
  if (!ys.empty()) {
    s << "        cells.append((float(r['" << xs << "_lower']), float(r['" << xs << "_upper']), float(r['" << ys
      << "_lower']), float(r['" << ys << "_upper']), float(r['upper'])))\n";
  } else {
    s << "        cells.append((float(r['" << xs << "_lower']), float(r['" << xs
      << "_upper']), 0.0, 1.0, float(r['upper'])))\n";
  }
  s << "\nfig, ax = plt.subplots(figsize=(6, 5))\n"
       "patches = [Rectangle((c[0], c[2]), c[1] - c[0], c[3] - c[2]) for c in cells]\n"
       "pc = PatchCollection(patches, cmap='viridis')\n"
       "pc.set_array([c[4] for c in cells])\n"
       "ax.add_collection(pc)\n"
       "ax.set_xlim(min(c[0] for c in cells), max(c[1] for c in cells))\n"
       "ax.set_ylim(min(c[2] for c in cells), max(c[3] for c in cells))\n"
       "ax.set_xlabel('"
    << xs << "')\n";
  if (!ys.empty()) s << "ax.set_ylabel('" << ys << "')\n";
  s << "fig.colorbar(pc, ax=ax, label='upper bound on mass')\n"
       "fig.tight_layout()\n"
       "fig.savefig('mass_upper.png', dpi=150)\n";
  return s.str();
}

SampleRun sample_run(const Options& o, const EstimationProblem& p) {
  SampleRun run;
  const OracleSettings os = p.oracle_settings.value_or(OracleSettings{});
  run.seed = o.seed.value_or(os.seed);
  run.samples = o.samples.value_or(os.samples);
  run.step = o.step.value_or(os.step);
  run.jobs = o.jobs;
  if (run.samples == 0) throw UsageError("--samples must be positive");
  if (!(run.step > 0.0)) throw UsageError("--step must be positive");
  return run;
}

int cmd_bound_moments(const Options& o) {
  const EstimationProblem p = load(o);
  std::vector<Query> queries;
  for (const Query& q : p.queries) {
    if (q.kind == QueryKind::moment) queries.push_back(q);
  }
  if (queries.empty()) throw UsageError("problem declares no moment queries");
  const fs::path dir = prepare_out(o);
  print_relaxation_warnings(p, queries, o);
  const auto results = run_queries(p, queries, engine_settings(o));
  const RunConfig cfg = run_config(o, "bound-moments", p);
  write_file(dir / "results.csv", results_csv(p, results, o.timings));
  write_file(dir / "results.json", results_json(p, results, cfg));

  bool overlay = false;
  if (o.overlay) {
    if (!p.oracle) throw UsageError("--overlay needs an oracle block in the problem");
    std::vector<Monomial> monos;
    for (const Query& q : queries) {
      Monomial m(0, q.exponents);
      if (std::find(monos.begin(), monos.end(), m) == monos.end()) monos.push_back(m);
    }
    const ReferenceMoments ref = reference_moments(p, *p.oracle, monos, {}, sample_run(o, p));
    std::ostringstream csv;
    csv << "time,target,mean,std_error\n";
    for (std::size_t k = 0; k < p.times.size(); ++k) {
      for (std::size_t i = 0; i < monos.size(); ++i) {
        std::string target;
        for (std::size_t j = 0; j < monos[i].n_x(); ++j) {
          target += (j ? ";" : "") + std::to_string(monos[i].x_exp(j));
        }
        char line[160];
        std::snprintf(line, sizeof line, "%.12g,%s,%.12g,%.12g\n", p.times[k], target.c_str(),
                      ref.endpoint[k][i].mean, ref.endpoint[k][i].std_error);
        csv << line;
      }
    }
    write_file(dir / "oracle_moments.csv", csv.str());
    overlay = true;
  }
  write_file(dir / "plot_moments.py", moments_plot_script(overlay));
  print_table(results);
  const bool failed = std::any_of(results.begin(), results.end(), solver_failed);
  return failed ? kExitSolver : kExitOk;
}

int cmd_bound_mass(const Options& o) {
  EstimationProblem p = load(o);
  if (!o.grid.empty()) {
    if (!p.partition) throw UsageError("--grid needs a partition block naming the partitioned states");
    std::vector<int> dims;
    std::stringstream ss(o.grid);
    std::string part;
    while (std::getline(ss, part, 'x')) {
      try {
        dims.push_back(std::stoi(part));
      } catch (const std::exception&) {
        throw UsageError("--grid expects counts like 5x5");
      }
    }
    if (dims.size() != p.partition->states.size()) {
      throw UsageError("--grid needs one count per partitioned state");
    }
    p.partition = make_grid_partition(p, p.partition->time_index, p.partition->states, dims);
  }
  if (!p.partition) throw UsageError("problem declares no partition");
  std::vector<Query> queries;
  Query base;
  base.kind = QueryKind::mass;
  for (const Query& q : p.queries) {
    if (q.kind == QueryKind::mass) {
      base = q;
      break;
    }
  }
  // One query per cell of the (possibly regridded) partition.
  for (std::size_t j = 0; j < p.partition->cells.size(); ++j) {
    Query q = base;
    q.cell = j;
    q.id = "cell_" + std::to_string(j);
    queries.push_back(q);
  }
  const fs::path dir = prepare_out(o);
  print_relaxation_warnings(p, {queries.front()}, o);
  const auto results = run_queries(p, queries, engine_settings(o));
  const RunConfig cfg = run_config(o, "bound-mass", p);
  write_file(dir / "results.csv", results_csv(p, results, o.timings));
  write_file(dir / "results.json", results_json(p, results, cfg));
  write_file(dir / "mass_table.csv", mass_table_csv(p, results));
  write_file(dir / "plot_mass.py", mass_plot_script(p));

  double sum_lo = 0.0, sum_hi = 0.0;
  std::size_t best = 0;
  for (std::size_t j = 0; j < results.size(); ++j) {
    if (!results[j].bound) continue;
    sum_lo += results[j].bound->lower;
    sum_hi += results[j].bound->upper;
    if (!results[best].bound || results[j].bound->upper > results[best].bound->upper) best = j;
  }
  std::printf("%zu cells  sum of lower bounds %.6f  sum of upper bounds %.6f\n", results.size(), sum_lo, sum_hi);
  if (results[best].bound) {
    const CellBox& c = p.partition->cells[best];
    std::printf("largest upper bound %.6f in cell %zu:", results[best].bound->upper, best);
    for (std::size_t s = 0; s < c.lower.size(); ++s) std::printf(" [%.4g, %.4g]", c.lower[s], c.upper[s]);
    std::printf("\n");
  }
  const bool failed = std::any_of(results.begin(), results.end(), solver_failed);
  return failed ? kExitSolver : kExitOk;
}

int cmd_validate(const Options& o) {
  const EstimationProblem p = load(o);
  const fs::path dir = prepare_out(o);
  const int max_order = o.order.value_or(p.order);
  EngineSettings s = engine_settings(o);
  s.order.reset();
  const ConsistencyVerdict v = check_consistency(p, max_order, s);
  const RunConfig cfg = run_config(o, "validate", p);
  write_file(dir / "verdict.json", verdict_json(v, cfg));
  std::printf("%s (order %d): %s\n", to_string(v.outcome).c_str(), v.order, v.message.c_str());
  switch (v.outcome) {
    case Verdict::not_invalidated:
      return kExitOk;
    case Verdict::invalidated:
      write_file(dir / "certificate.json", verdict_json(v, cfg));
      std::printf("certificate margin %.3g written to %s\n", v.margin, (dir / "certificate.json").string().c_str());
      return kExitInvalidated;
    case Verdict::undecided:
      return kExitUndecided;
  }
  return kExitUndecided;
}

int cmd_oracle(const Options& o) {
  const EstimationProblem p = load(o);
  if (!p.oracle) throw UsageError("problem declares no oracle block");
  const OracleSettings os = p.oracle_settings.value_or(OracleSettings{});
  const SampleRun run = sample_run(o, p);
  const int degree = o.degree.value_or(os.degree);
  const double slack = o.slack.value_or(os.slack);
  if (degree < 1) throw UsageError("--degree must be at least 1");
  if (slack < 0.0) throw UsageError("--slack must be nonnegative");
  std::vector<std::size_t> times = os.time_indices;
  if (times.empty()) {
    for (std::size_t k = 1; k < p.times.size(); ++k) times.push_back(k);
  }
  const fs::path dir = prepare_out(o);
  const auto estimates = sample_moments(p, *p.oracle, degree, times, os.states, run);
  const auto bounds = fabricate_moment_data(estimates, slack);
  RunConfig cfg = run_config(o, "oracle", p);
  cfg.seed = run.seed;
  cfg.samples = run.samples;
  cfg.slack = slack;
  write_file(dir / "moments.json", moment_data_json(p, estimates, bounds, cfg));
  std::printf("%zu moment estimates from %zu samples (seed %llu, slack %g)\n", estimates.size(), run.samples,
              static_cast<unsigned long long>(run.seed), slack);
  if (p.partition) {
    const auto masses = cell_masses(*p.oracle, *p.partition, run);
    write_file(dir / "cell_masses.csv", cell_masses_csv(p, masses));
    std::printf("%zu cell masses written\n", masses.size());
  }
  return kExitOk;
}

int cmd_export_sdpa(const Options& o) {
  const EstimationProblem p = load(o);
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < p.queries.size(); ++i) {
    const Query& q = p.queries[i];
    if (q.kind == QueryKind::consistency) continue;
    if (!o.query_ids.empty() &&
        std::find(o.query_ids.begin(), o.query_ids.end(), q.id) == o.query_ids.end()) {
      continue;
    }
    picked.push_back(i);
  }
  if (picked.empty()) {
    std::cerr << "warning: no moment or mass queries selected; nothing exported\n";
    return kExitOk;
  }
  const fs::path dir = prepare_out(o);
  const EngineSettings s = engine_settings(o);
  std::size_t files = 0;
  for (std::size_t i : picked) {
    const Query& q = p.queries[i];
    const int r = effective_order(p, q, s);
    RelaxationOptions opts;
    opts.split_cells = q.kind == QueryKind::mass;
    const Relaxation rel(p, r, opts);
    const std::string stem = "q" + std::to_string(i) + (q.id.empty() ? "" : "_" + q.id);
    for (Sense sense : {Sense::minimize, Sense::maximize}) {
      const Objective obj = q.kind == QueryKind::moment ? Objective::moment(q.time_index, q.exponents, sense)
                                                        : Objective::mass(q.cell, sense);
      const char* suffix = sense == Sense::minimize ? "_min.dat-s" : "_max.dat-s";
      export_sdpa(rel.program(obj), dir / (stem + suffix));
      ++files;
    }
  }
  std::printf("%zu SDPA files written to %s\n", files, dir.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moment and probability-mass bounds for polynomial ODEs with uncertain initial states"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());
  Options o;

  // Options shared by every subcommand; each reads an OCCMOM_* override.
  auto common = [&o](CLI::App* sub) {
    sub->add_option("problem", o.problem, "Problem file (JSON)")->required();
    sub->add_option("--out", o.out, "Output directory")->envname("OCCMOM_OUT");
    sub->add_option("--order", o.order, "Relaxation order r (overrides the problem file)")->envname("OCCMOM_ORDER");
    sub->add_option("--tol-feas", o.tol_feas, "Primal/dual feasibility tolerance")->envname("OCCMOM_TOL_FEAS");
    sub->add_option("--tol-gap", o.tol_gap, "Relative duality-gap tolerance")->envname("OCCMOM_TOL_GAP");
    sub->add_option("--max-iter", o.max_iter, "Interior-point iteration limit")->envname("OCCMOM_MAX_ITER");
    sub->add_option("--jobs", o.jobs, "Parallel solves / sampling threads")->envname("OCCMOM_JOBS");
    sub->add_option("--seed", o.seed, "Random seed for the oracle")->envname("OCCMOM_SEED");
    sub->add_flag("--verbose", o.verbose, "Print solver iterations");
  };

  auto* moments = app.add_subcommand("bound-moments", "Bound the moment queries of a problem");
  common(moments);
  moments->add_flag("--overlay", o.overlay, "Add Monte-Carlo moments from the oracle block to the plot");
  moments->add_option("--samples", o.samples, "Monte-Carlo samples for --overlay");
  moments->add_flag("--timings", o.timings, "Include wall times in results.csv");

  auto* mass = app.add_subcommand("bound-mass", "Bound the probability mass of every partition cell");
  common(mass);
  mass->add_option("--grid", o.grid, "Regrid the partition, e.g. 5x5");
  mass->add_flag("--timings", o.timings, "Include wall times in results.csv");

  auto* val = app.add_subcommand("validate", "Search for a certificate that the data contradict the model");
  common(val);

  auto* orc = app.add_subcommand("oracle", "Monte-Carlo reference moments and cell masses");
  common(orc);
  orc->add_option("--samples", o.samples, "Number of samples")->envname("OCCMOM_SAMPLES");
  orc->add_option("--slack", o.slack, "Relative slack of the fabricated moment intervals");
  orc->add_option("--degree", o.degree, "Highest moment degree per state");
  orc->add_option("--step", o.step, "RK4 step");

  auto* exp = app.add_subcommand("export-sdpa", "Write the relaxations of the queries in SDPA sparse format");
  common(exp);
  exp->add_option("--query", o.query_ids, "Query id to export (repeatable; default all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (o.jobs < 1) throw UsageError("--jobs must be at least 1");
    if (!(o.tol_feas > 0.0) || !(o.tol_gap > 0.0)) throw UsageError("tolerances must be positive");
    if (o.max_iter < 1) throw UsageError("--max-iter must be at least 1");
    if (*moments) return cmd_bound_moments(o);
    if (*mass) return cmd_bound_mass(o);
    if (*val) return cmd_validate(o);
    if (*orc) return cmd_oracle(o);
    if (*exp) return cmd_export_sdpa(o);
  } catch (const ProblemError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitInvalid;
}
