#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "occmom/problem.h"

namespace occmom {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ProblemError(path.empty() ? key : path + "." + key,
                       "missing required field");
  }
  return obj.at(key);
}

double as_number(const json& v, const std::string& path) {
  if (v.is_null()) return std::nan("");
  if (!v.is_number()) throw ProblemError(path, "expected a number");
  return v.get<double>();
}

double as_bound(const json& obj, const char* key, double missing,
                const std::string& path) {
  if (!obj.contains(key) || obj.at(key).is_null()) return missing;
  return as_number(obj.at(key), path + "." + key);
}

std::size_t as_index(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ProblemError(path, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::vector<int> as_exponents(const json& v, const std::string& path) {
  if (!v.is_array()) throw ProblemError(path, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_integer()) {
      throw ProblemError(path + "[" + std::to_string(i) + "]",
                         "expected an integer");
    }
    out.push_back(v[i].get<int>());
  }
  return out;
}

Polynomial as_polynomial(const json& v, const std::vector<std::string>& names,
                         const std::string& path) {
  if (v.is_number()) return Polynomial(names.size(), v.get<double>());
  if (!v.is_string()) throw ProblemError(path, "expected a polynomial string");
  try {
    return parse_polynomial(v.get<std::string>(), names);
  } catch (const ParseError& e) {
    throw ProblemError(path, e.what());
  }
}

std::size_t state_index(const std::vector<std::string>& names,
                        const std::string& name, const std::string& path) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw ProblemError(path, "unknown state '" + name + "'");
}

std::vector<double> as_vector(const json& v, const std::string& path) {
  if (!v.is_array()) throw ProblemError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

CoordinateSpec parse_law(const json& v, const std::string& path) {
  if (!v.is_object()) throw ProblemError(path, "expected an object");
  CoordinateSpec spec;
  int kinds = 0;
  if (v.contains("dirac")) {
    spec.law = Dirac{as_number(v.at("dirac"), path + ".dirac")};
    ++kinds;
  }
  if (v.contains("uniform")) {
    auto r = as_vector(v.at("uniform"), path + ".uniform");
    if (r.size() != 2) throw ProblemError(path + ".uniform", "expected [a, b]");
    spec.law = Uniform{r[0], r[1]};
    ++kinds;
  }
  if (v.contains("beta")) {
    auto p = as_vector(v.at("beta"), path + ".beta");
    if (p.size() != 2) {
      throw ProblemError(path + ".beta", "expected [alpha, beta]");
    }
    Beta b{p[0], p[1], 0.0, 1.0};
    if (v.contains("range")) {
      auto r = as_vector(v.at("range"), path + ".range");
      if (r.size() != 2) throw ProblemError(path + ".range", "expected [a, b]");
      b.lower = r[0];
      b.upper = r[1];
    }
    spec.law = b;
    ++kinds;
  }
  if (v.contains("discrete")) {
    const json& d = v.at("discrete");
    Discrete law;
    law.points = as_vector(require(d, "points", path + ".discrete"),
                           path + ".discrete.points");
    law.weights = as_vector(require(d, "weights", path + ".discrete"),
                            path + ".discrete.weights");
    spec.law = std::move(law);
    ++kinds;
  }
  if (kinds != 1) {
    throw ProblemError(path,
                       "expected exactly one of dirac, uniform, beta, discrete");
  }
  if (v.contains("pin")) {
    if (!v.at("pin").is_boolean()) {
      throw ProblemError(path + ".pin", "expected a boolean");
    }
    spec.pin = v.at("pin").get<bool>();
  }
  return spec;
}

json law_to_json(const CoordinateSpec& spec) {
  json out = json::object();
  std::visit(
      [&out](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, Dirac>) {
          out["dirac"] = law.value;
        } else if constexpr (std::is_same_v<T, Uniform>) {
          out["uniform"] = {law.lower, law.upper};
        } else if constexpr (std::is_same_v<T, Beta>) {
          out["beta"] = {law.alpha, law.beta};
          out["range"] = {law.lower, law.upper};
        } else {
          out["discrete"] = {{"points", law.points}, {"weights", law.weights}};
        }
      },
      spec.law);
  if (spec.pin) out["pin"] = true;
  return out;
}

json bound_to_json(double v) {
  if (std::isinf(v)) return nullptr;
  return v;
}

}  // namespace

EstimationProblem parse_problem(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ProblemError("", std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ProblemError("", "top level must be an object");

  EstimationProblem p;
  const json& states = require(root, "states", "");
  if (!states.is_array()) throw ProblemError("states", "expected an array");
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!states[i].is_string()) {
      throw ProblemError("states[" + std::to_string(i) + "]",
                         "expected a string");
    }
    p.system.state_names.push_back(states[i].get<std::string>());
  }
  const auto& names = p.system.state_names;
  const std::size_t n = names.size();

  const json& field = require(root, "field", "");
  if (!field.is_array()) throw ProblemError("field", "expected an array");
  for (std::size_t i = 0; i < field.size(); ++i) {
    p.system.field.push_back(
        as_polynomial(field[i], names, "field[" + std::to_string(i) + "]"));
  }

  p.box.assign(n, std::nullopt);
  if (root.contains("box")) {
    const json& box = root.at("box");
    if (!box.is_object()) throw ProblemError("box", "expected an object");
    for (const auto& [name, range] : box.items()) {
      const std::string path = "box." + name;
      const std::size_t i = state_index(names, name, path);
      auto r = as_vector(range, path);
      if (r.size() != 2) throw ProblemError(path, "expected [lower, upper]");
      p.box[i] = Interval{r[0], r[1]};
    }
  }
  if (root.contains("global_support")) {
    const json& g = root.at("global_support");
    if (!g.is_array()) throw ProblemError("global_support", "expected an array");
    for (std::size_t i = 0; i < g.size(); ++i) {
      p.global_inequalities.push_back(as_polynomial(
          g[i], names, "global_support[" + std::to_string(i) + "]"));
    }
  }

  p.times = as_vector(require(root, "times", ""), "times");
  p.support.resize(p.times.size());
  for (std::size_t k = 0; k < p.support.size(); ++k) {
    p.support[k].label = "X_" + std::to_string(k);
  }

  if (root.contains("support")) {
    const json& sup = root.at("support");
    if (!sup.is_array()) throw ProblemError("support", "expected an array");
    for (std::size_t s = 0; s < sup.size(); ++s) {
      const std::string path = "support[" + std::to_string(s) + "]";
      const std::size_t k =
          as_index(require(sup[s], "time_index", path), path + ".time_index");
      if (k >= p.times.size()) {
        throw ProblemError(path + ".time_index", "time index out of range");
      }
      if (sup[s].contains("label") && sup[s].at("label").is_string()) {
        p.support[k].label = sup[s].at("label").get<std::string>();
      }
      const json& ineq = require(sup[s], "inequalities", path);
      if (!ineq.is_array()) {
        throw ProblemError(path + ".inequalities", "expected an array");
      }
      for (std::size_t i = 0; i < ineq.size(); ++i) {
        p.support[k].inequalities.push_back(as_polynomial(
            ineq[i], names,
            path + ".inequalities[" + std::to_string(i) + "]"));
      }
    }
  }

  if (root.contains("moments")) {
    const json& mom = root.at("moments");
    if (!mom.is_array()) throw ProblemError("moments", "expected an array");
    for (std::size_t i = 0; i < mom.size(); ++i) {
      const std::string path = "moments[" + std::to_string(i) + "]";
      MomentBound mb;
      mb.time_index =
          as_index(require(mom[i], "time_index", path), path + ".time_index");
      mb.exponents =
          as_exponents(require(mom[i], "exponents", path), path + ".exponents");
      mb.lower = as_bound(mom[i], "lower", -kInf, path);
      mb.upper = as_bound(mom[i], "upper", kInf, path);
      p.moments.push_back(std::move(mb));
    }
  }

  if (root.contains("partition")) {
    const json& part = root.at("partition");
    const std::string path = "partition";
    const std::size_t k =
        part.contains("time_index")
            ? as_index(part.at("time_index"), path + ".time_index")
            : 0;
    std::vector<std::size_t> pstates;
    if (part.contains("states")) {
      const json& st = part.at("states");
      if (!st.is_array()) throw ProblemError(path + ".states", "expected an array");
      for (std::size_t i = 0; i < st.size(); ++i) {
        pstates.push_back(state_index(names, st[i].get<std::string>(),
                                      path + ".states[" + std::to_string(i) + "]"));
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) pstates.push_back(i);
    }
    if (part.contains("grid")) {
      auto grid = as_exponents(part.at("grid"), path + ".grid");
      p.partition = make_grid_partition(p, k, pstates, grid);
    } else if (part.contains("cells")) {
      Partition parts;
      parts.time_index = k;
      parts.states = pstates;
      const json& cells = part.at("cells");
      if (!cells.is_array()) throw ProblemError(path + ".cells", "expected an array");
      for (std::size_t j = 0; j < cells.size(); ++j) {
        const std::string cpath = path + ".cells[" + std::to_string(j) + "]";
        CellBox c;
        c.lower = as_vector(require(cells[j], "lower", cpath), cpath + ".lower");
        c.upper = as_vector(require(cells[j], "upper", cpath), cpath + ".upper");
        parts.cells.push_back(std::move(c));
      }
      p.partition = std::move(parts);
    } else {
      throw ProblemError(path, "expected 'grid' or 'cells'");
    }
  }

  if (root.contains("oracle")) {
    const json& orc = root.at("oracle");
    if (!orc.is_object()) throw ProblemError("oracle", "expected an object");
    InitialDistribution dist;
    dist.coordinates.resize(n);
    std::vector<bool> seen(n, false);
    for (const auto& [name, law] : orc.items()) {
      const std::string path = "oracle." + name;
      const std::size_t i = state_index(names, name, path);
      dist.coordinates[i] = parse_law(law, path);
      seen[i] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!seen[i]) {
        throw ProblemError("oracle." + names[i], "missing law for state");
      }
    }
    p.oracle = std::move(dist);
  }

  if (root.contains("oracle_settings")) {
    const json& os = root.at("oracle_settings");
    const std::string path = "oracle_settings";
    OracleSettings s;
    if (os.contains("samples")) s.samples = as_index(os.at("samples"), path + ".samples");
    if (os.contains("seed")) s.seed = as_index(os.at("seed"), path + ".seed");
    if (os.contains("step")) s.step = as_number(os.at("step"), path + ".step");
    if (os.contains("degree")) {
      s.degree = static_cast<int>(as_index(os.at("degree"), path + ".degree"));
    }
    if (os.contains("slack")) s.slack = as_number(os.at("slack"), path + ".slack");
    if (os.contains("time_indices")) {
      const json& ti = os.at("time_indices");
      for (std::size_t i = 0; i < ti.size(); ++i) {
        s.time_indices.push_back(
            as_index(ti[i], path + ".time_indices[" + std::to_string(i) + "]"));
      }
    }
    if (os.contains("states")) {
      const json& st = os.at("states");
      for (std::size_t i = 0; i < st.size(); ++i) {
        s.states.push_back(state_index(names, st[i].get<std::string>(),
                                       path + ".states[" + std::to_string(i) + "]"));
      }
    }
    p.oracle_settings = std::move(s);
  }

  if (root.contains("order")) {
    p.order = static_cast<int>(as_number(root.at("order"), "order"));
  }

  if (root.contains("queries")) {
    const json& qs = root.at("queries");
    if (!qs.is_array()) throw ProblemError("queries", "expected an array");
    for (std::size_t q = 0; q < qs.size(); ++q) {
      const std::string path = "queries[" + std::to_string(q) + "]";
      const json& jq = qs[q];
      Query base;
      const std::string kind =
          require(jq, "kind", path).is_string()
              ? jq.at("kind").get<std::string>()
              : throw ProblemError(path + ".kind", "expected a string");
      if (jq.contains("id")) base.id = jq.at("id").get<std::string>();
      if (jq.contains("order")) {
        base.order = static_cast<int>(as_index(jq.at("order"), path + ".order"));
      }
      auto expand = [&](const char* key, std::size_t count,
                        auto&& assign) {
        const json& v = require(jq, key, path);
        if (v.is_string() && v.get<std::string>() == "all") {
          for (std::size_t i = 0; i < count; ++i) {
            Query copy = base;
            assign(copy, i);
            if (!base.id.empty()) copy.id = base.id + "_" + std::to_string(i);
            p.queries.push_back(std::move(copy));
          }
        } else {
          Query copy = base;
          assign(copy, as_index(v, path + "." + key));
          p.queries.push_back(std::move(copy));
        }
      };
      if (kind == "moment") {
        base.kind = QueryKind::moment;
        base.exponents = as_exponents(require(jq, "exponents", path),
                                      path + ".exponents");
        expand("time_index", p.times.size(),
               [](Query& qq, std::size_t i) { qq.time_index = i; });
      } else if (kind == "mass") {
        base.kind = QueryKind::mass;
        expand("cell", p.partition ? p.partition->cells.size() : 0,
               [](Query& qq, std::size_t i) { qq.cell = i; });
      } else if (kind == "consistency") {
        base.kind = QueryKind::consistency;
        p.queries.push_back(base);
      } else {
        throw ProblemError(path + ".kind", "unknown query kind '" + kind + "'");
      }
    }
  }
  return p;
}

EstimationProblem load_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ProblemError("", "cannot open problem file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  // "moments_file": extra moment data in the same schema (e.g. written by
  // `occmom oracle`), resolved relative to the problem file.
  json root = json::parse(text, nullptr, false);
  if (!root.is_discarded() && root.is_object() && root.contains("moments_file")) {
    if (!root.at("moments_file").is_string()) throw ProblemError("moments_file", "expected a string");
    std::filesystem::path extra = root.at("moments_file").get<std::string>();
    if (extra.is_relative()) extra = path.parent_path() / extra;
    std::ifstream ein(extra);
    if (!ein) throw ProblemError("moments_file", "cannot open " + extra.string());
    json data = json::parse(ein, nullptr, false);
    if (data.is_discarded() || !data.is_object() || !data.contains("moments") || !data.at("moments").is_array()) {
      throw ProblemError("moments_file", extra.string() + " has no 'moments' array");
    }
    json& merged = root["moments"];
    if (merged.is_null()) merged = json::array();
    for (const json& m : data.at("moments")) {
      json entry;
      for (const char* key : {"time_index", "exponents", "lower", "upper"}) {
        if (m.contains(key)) entry[key] = m.at(key);
      }
      merged.push_back(entry);
    }
    root.erase("moments_file");
    text = root.dump();
  }
  EstimationProblem p = parse_problem(text);
  for (const Diagnostic& d : validate(p)) {
    if (d.severity == Severity::error) throw ProblemError(d.path, d.message);
  }
  return p;
}

std::string serialize_problem(const EstimationProblem& p) {
  const auto& names = p.system.state_names;
  json root;
  root["states"] = names;
  json field = json::array();
  for (const auto& f : p.system.field) field.push_back(f.to_string(names));
  root["field"] = field;
  json box = json::object();
  for (std::size_t i = 0; i < p.box.size() && i < names.size(); ++i) {
    if (p.box[i]) box[names[i]] = {p.box[i]->lower, p.box[i]->upper};
  }
  root["box"] = box;
  if (!p.global_inequalities.empty()) {
    json g = json::array();
    for (const auto& q : p.global_inequalities) g.push_back(q.to_string(names));
    root["global_support"] = g;
  }
  root["times"] = p.times;
  json support = json::array();
  for (std::size_t k = 0; k < p.support.size(); ++k) {
    if (p.support[k].inequalities.empty()) continue;
    json ineq = json::array();
    for (const auto& g : p.support[k].inequalities) ineq.push_back(g.to_string(names));
    support.push_back({{"time_index", k},
                       {"label", p.support[k].label},
                       {"inequalities", ineq}});
  }
  root["support"] = support;
  json moments = json::array();
  for (const auto& mb : p.moments) {
    moments.push_back({{"time_index", mb.time_index},
                       {"exponents", mb.exponents},
                       {"lower", bound_to_json(mb.lower)},
                       {"upper", bound_to_json(mb.upper)}});
  }
  root["moments"] = moments;
  if (p.partition) {
    json part;
    part["time_index"] = p.partition->time_index;
    json st = json::array();
    for (std::size_t s : p.partition->states) st.push_back(names[s]);
    part["states"] = st;
    json cells = json::array();
    for (const auto& c : p.partition->cells) {
      cells.push_back({{"lower", c.lower}, {"upper", c.upper}});
    }
    part["cells"] = cells;
    root["partition"] = part;
  }
  if (p.oracle) {
    json orc = json::object();
    for (std::size_t i = 0; i < p.oracle->coordinates.size(); ++i) {
      orc[names[i]] = law_to_json(p.oracle->coordinates[i]);
    }
    root["oracle"] = orc;
  }
  if (p.oracle_settings) {
    const auto& s = *p.oracle_settings;
    json os = {{"samples", s.samples}, {"seed", s.seed},   {"step", s.step},
               {"degree", s.degree},   {"slack", s.slack}, {"time_indices", s.time_indices}};
    json st = json::array();
    for (std::size_t i : s.states) st.push_back(names[i]);
    os["states"] = st;
    root["oracle_settings"] = os;
  }
  root["order"] = p.order;
  json queries = json::array();
  for (const auto& q : p.queries) {
    json jq = {{"kind", to_string(q.kind)}};
    if (!q.id.empty()) jq["id"] = q.id;
    if (q.order) jq["order"] = *q.order;
    if (q.kind == QueryKind::moment) {
      jq["time_index"] = q.time_index;
      jq["exponents"] = q.exponents;
    } else if (q.kind == QueryKind::mass) {
      jq["cell"] = q.cell;
    }
    queries.push_back(jq);
  }
  root["queries"] = queries;
  return root.dump(2);
}

void save_problem(const EstimationProblem& problem,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ProblemError("", "cannot write " + path.string());
  out << serialize_problem(problem) << '\n';
}

}  // namespace occmom
