#include "occmom/results.h"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

namespace occmom {
namespace {

using json = nlohmann::json;

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json jopt(const std::optional<double>& v) { return v ? jnum(*v) : json(nullptr); }

std::string target(const Query& q) {
  if (q.kind == QueryKind::mass) return "cell:" + std::to_string(q.cell);
  if (q.kind == QueryKind::consistency) return "";
  std::string s;
  for (std::size_t i = 0; i < q.exponents.size(); ++i) s += (i ? ";" : "") + std::to_string(q.exponents[i]);
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double query_time(const EstimationProblem& p, const Query& q) {
  if (q.kind == QueryKind::moment && q.time_index < p.times.size()) return p.times[q.time_index];
  if (q.kind == QueryKind::mass && p.partition) return p.times.at(p.partition->time_index);
  return std::nan("");
}

json report_json(const SolveReport& r) {
  json j;
  j["status"] = to_string(r.status);
  j["objective"] = jopt(r.objective);
  j["dual_objective"] = jopt(r.dual_objective);
  j["iterations"] = r.iterations;
  j["wall_ms"] = r.wall_ms;
  j["primal_residual"] = jnum(r.primal_residual);
  j["dual_residual"] = jnum(r.dual_residual);
  j["gap"] = jnum(r.gap);
  if (!r.message.empty()) j["message"] = r.message;
  if (r.certificate) j["certificate_margin"] = jnum(r.certificate->margin);
  return j;
}

json config_json(const RunConfig& c) {
  json j;
  j["subcommand"] = c.subcommand;
  j["problem"] = c.problem_path;
  j["out"] = c.out_dir;
  j["order"] = c.order ? json(*c.order) : json(nullptr);
  j["tol_feas"] = c.tol_feas;
  j["tol_gap"] = c.tol_gap;
  j["max_iterations"] = c.max_iterations;
  j["jobs"] = c.jobs;
  j["seed"] = c.seed;
  j["backend"] = c.backend;
  j["version"] = c.version;
  if (c.samples) j["samples"] = *c.samples;
  if (c.slack) j["slack"] = *c.slack;
  return j;
}

json verdict_body(const ConsistencyVerdict& v) {
  json j;
  j["outcome"] = to_string(v.outcome);
  j["order"] = v.order;
  j["margin"] = jnum(v.margin);
  j["message"] = v.message;
  json reps = json::array();
  for (const auto& r : v.reports) reps.push_back(report_json(r));
  j["reports"] = reps;
  return j;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::string version_string() { return "0.1.0"; }

std::string results_csv(const EstimationProblem& problem, const std::vector<QueryResult>& results, bool timings) {
  std::ostringstream out;
  out << "id,kind,time,target,lower,upper,order,status_min,status_max,wall_ms\n";
  for (const auto& r : results) {
    const Query& q = r.query;
    const double t = query_time(problem, q);
    out << csv_field(q.id) << ',' << to_string(q.kind) << ',' << (std::isnan(t) ? "" : num(t)) << ','
        << target(q) << ',';
    if (!r.error.empty()) {
      out << ",,,error,error,\n";
      continue;
    }
    if (r.bound) {
      const BoundResult& b = *r.bound;
      out << num(b.lower) << ',' << num(b.upper) << ',' << b.order << ',' << to_string(b.min_report.status) << ','
          << to_string(b.max_report.status) << ',' << (timings ? num(b.wall_ms) : "") << '\n';
    } else if (r.verdict) {
      double ms = 0.0;
      for (const auto& rep : r.verdict->reports) ms += rep.wall_ms;
      out << ",," << r.verdict->order << ',' << to_string(r.verdict->outcome) << ",," << (timings ? num(ms) : "")
          << '\n';
    } else {
      out << ",,,,,\n";
    }
  }
  return out.str();
}

std::string results_json(const EstimationProblem& problem, const std::vector<QueryResult>& results,
                         const RunConfig& config) {
  json root;
  root["config"] = config_json(config);
  json arr = json::array();
  bool any_invalidated = false;
  for (const auto& r : results) {
    const Query& q = r.query;
    json j;
    j["id"] = q.id;
    j["kind"] = to_string(q.kind);
    const double t = query_time(problem, q);
    j["time"] = std::isnan(t) ? json(nullptr) : json(t);
    if (q.kind == QueryKind::moment) {
      j["time_index"] = q.time_index;
      j["exponents"] = q.exponents;
    } else if (q.kind == QueryKind::mass) {
      j["cell"] = q.cell;
      const CellBox& cb = problem.partition->cells.at(q.cell);
      j["cell_lower"] = cb.lower;
      j["cell_upper"] = cb.upper;
    }
    if (!r.error.empty()) j["error"] = r.error;
    if (r.bound) {
      const BoundResult& b = *r.bound;
      j["lower"] = jnum(b.lower);
      j["upper"] = jnum(b.upper);
      j["order"] = b.order;
      j["wall_ms"] = b.wall_ms;
      j["invalidated"] = b.invalidated;
      j["min"] = report_json(b.min_report);
      j["max"] = report_json(b.max_report);
      any_invalidated = any_invalidated || b.invalidated;
    }
    if (r.verdict) {
      j["verdict"] = verdict_body(*r.verdict);
      any_invalidated = any_invalidated || r.verdict->outcome == Verdict::invalidated;
    }
    arr.push_back(j);
  }
  root["results"] = arr;
  root["invalidated"] = any_invalidated;
  return root.dump(2) + "\n";
}

std::string mass_table_csv(const EstimationProblem& problem, const std::vector<QueryResult>& results) {
  std::ostringstream out;
  out << "cell";
  if (problem.partition) {
    for (std::size_t s : problem.partition->states) {
      const std::string& name = problem.system.state_names.at(s);
      out << ',' << name << "_lower," << name << "_upper";
    }
  }
  out << ",lower,upper,status_min,status_max\n";
  for (const auto& r : results) {
    if (r.query.kind != QueryKind::mass) continue;
    out << r.query.cell;
    const CellBox& cb = problem.partition->cells.at(r.query.cell);
    for (std::size_t s = 0; s < cb.lower.size(); ++s) out << ',' << num(cb.lower[s]) << ',' << num(cb.upper[s]);
    if (r.bound) {
      out << ',' << num(r.bound->lower) << ',' << num(r.bound->upper) << ',' << to_string(r.bound->min_report.status)
          << ',' << to_string(r.bound->max_report.status) << '\n';
    } else {
      out << ",,,error,error\n";
    }
  }
  return out.str();
}

std::string verdict_json(const ConsistencyVerdict& verdict, const RunConfig& config) {
  json root = verdict_body(verdict);
  root["config"] = config_json(config);
  if (verdict.certificate) {
    const auto& c = *verdict.certificate;
    json cert;
    cert["margin"] = jnum(c.margin);
    cert["row_multipliers"] = c.row_multipliers;
    cert["lower_multipliers"] = c.lower_multipliers;
    cert["upper_multipliers"] = c.upper_multipliers;
    json blocks = json::array();
    for (const auto& m : c.block_multipliers) blocks.push_back(matrix_json(m));
    cert["block_multipliers"] = blocks;
    root["certificate"] = cert;
  }
  return root.dump(2) + "\n";
}

std::string moment_data_json(const EstimationProblem& problem, const std::vector<MomentEstimate>& estimates,
                             const std::vector<MomentBound>& bounds, const RunConfig& config) {
  json root;
  root["config"] = config_json(config);
  root["states"] = problem.system.state_names;
  root["times"] = problem.times;
  json moments = json::array();
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    json m;
    m["time_index"] = bounds[i].time_index;
    m["exponents"] = bounds[i].exponents;
    m["lower"] = jnum(bounds[i].lower);
    m["upper"] = jnum(bounds[i].upper);
    if (i < estimates.size()) {
      m["mean"] = estimates[i].value.mean;
      m["std_error"] = estimates[i].value.std_error;
    }
    moments.push_back(m);
  }
  root["moments"] = moments;
  return root.dump(2) + "\n";
}

std::string cell_masses_csv(const EstimationProblem& problem, const std::vector<Estimate>& masses) {
  std::ostringstream out;
  out << "cell";
  for (std::size_t s : problem.partition->states) {
    const std::string& name = problem.system.state_names.at(s);
    out << ',' << name << "_lower," << name << "_upper";
  }
  out << ",mass,std_error\n";
  for (std::size_t j = 0; j < masses.size(); ++j) {
    const CellBox& cb = problem.partition->cells.at(j);
    out << j;
    for (std::size_t s = 0; s < cb.lower.size(); ++s) out << ',' << num(cb.lower[s]) << ',' << num(cb.upper[s]);
    out << ',' << num(masses[j].mean) << ',' << num(masses[j].std_error) << '\n';
  }
  return out.str();
}

}  // namespace occmom
