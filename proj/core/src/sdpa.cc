#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <tuple>

#include "occmom/conic.h"

namespace occmom {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// One diagonal LP entry a^T x - beta >= 0.
struct LpEntry {
  std::vector<std::pair<std::size_t, double>> a;
  double beta;
};

}  // namespace

void export_sdpa(const ConicProgram& program, std::ostream& out) {
  program.check();
  std::vector<LpEntry> lp;
  for (std::size_t i = 0; i < program.n_vars; ++i) {
    if (std::isfinite(program.lower[i])) lp.push_back({{{i, 1.0}}, program.lower[i]});
    if (std::isfinite(program.upper[i])) lp.push_back({{{i, -1.0}}, -program.upper[i]});
  }
  for (const auto& row : program.rows) {
    LinearForm f = row.form;
    f.canonicalize();
    auto negated = f.terms;
    for (auto& t : negated) t.second = -t.second;
    if (row.relation != Relation::upper_bound) lp.push_back({f.terms, row.rhs});
    if (row.relation != Relation::lower_bound) lp.push_back({negated, -row.rhs});
  }

  const bool has_lp = !lp.empty();
  const std::size_t nblock = program.psd_blocks.size() + (has_lp ? 1 : 0);
  out << "\"occmom moment relaxation: " << program.n_vars << " variables\"\n";
  out << program.n_vars << " = mDIM\n";
  out << nblock << " = nBLOCK\n";
  if (has_lp) out << "-" << lp.size() << (program.psd_blocks.empty() ? "" : " ");
  for (std::size_t b = 0; b < program.psd_blocks.size(); ++b) {
    out << program.psd_blocks[b].size << (b + 1 < program.psd_blocks.size() ? " " : "");
  }
  out << " = bLOCKsTRUCT\n";
  const double sense = program.sense == Sense::maximize ? -1.0 : 1.0;
  for (std::size_t i = 0; i < program.n_vars; ++i) {
    out << num(sense * program.objective[i]) << (i + 1 < program.n_vars ? " " : "\n");
  }
  if (program.n_vars == 0) out << "\n";

  // Accumulate (matno, block, i, j) -> value so duplicates merge.
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>, double> entries;
  std::size_t blk = 1;
  if (has_lp) {
    for (std::size_t k = 0; k < lp.size(); ++k) {
      if (lp[k].beta != 0.0) entries[{0, blk, k + 1, k + 1}] += lp[k].beta;
      for (const auto& [v, a] : lp[k].a) entries[{v + 1, blk, k + 1, k + 1}] += a;
    }
    ++blk;
  }
  for (const PsdBlock& p : program.psd_blocks) {
    for (const auto& e : p.entries) {
      // SDPA rows/cols are 1-based with i <= j.
      const std::size_t i = e.col + 1, j = e.row + 1;
      if (e.value.constant != 0.0) entries[{0, blk, i, j}] += -e.value.constant;
      for (const auto& [v, a] : e.value.linear.terms) entries[{v + 1, blk, i, j}] += a;
    }
    ++blk;
  }
  for (const auto& [key, value] : entries) {
    if (value == 0.0) continue;
    const auto& [m, b, i, j] = key;
    out << m << " " << b << " " << i << " " << j << " " << num(value) << "\n";
  }
}

void export_sdpa(const ConicProgram& program, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  export_sdpa(program, f);
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace occmom
