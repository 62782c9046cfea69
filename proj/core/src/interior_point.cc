// Homogeneous self-dual embedding interior-point method for
//   min c^T x  s.t.  A x = b,  G x + s = h,  s in R+^q x S+^{n_1} x ...
// with Nesterov-Todd scaling and a Mehrotra predictor-corrector. PSD blocks
// are written S = F0 + sum_i x_i F_i, i.e. h = F0 and G x = -sum_i x_i F_i.
//
// The reduced KKT matrix G^T H^{-1} G is block diagonal over groups of
// variables that share a cone block; equality rows are handled through a
// dense Schur complement A M^{-1} A^T. That reduced solve preconditions
// GMRES on the full KKT system, which keeps directions accurate when both
// levels become ill-conditioned near the optimum.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/Sparse>
#include <Eigen/SparseQR>

#include "occmom/conic.h"

namespace occmom {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Coef {
  int r;
  int c;
  double v;
};

struct BlockVar {
  std::size_t var = 0;
  std::vector<Coef> coefs;
  std::vector<int> rows;  // distinct rows touched by F_i (symmetrized)
  MatrixXd f_rows;        // F_i restricted to `rows`, |rows| x size
};

struct PsdData {
  int size = 0;
  MatrixXd f0;
  std::vector<BlockVar> vars;
};

enum class LpOrigin { var_lower, var_upper, row };

// s = h - g * x[var] >= 0
struct LpRow {
  std::size_t var;
  double g;
  double h;
  LpOrigin origin;
  std::size_t index;
};

struct EqRow {
  std::vector<std::pair<std::size_t, double>> terms;
  double rhs = 0.0;
  bool aux = false;
  std::size_t origin = 0;
};

struct Standard {
  std::size_t n = 0;
  std::size_t n_orig = 0;
  VectorXd c;
  std::vector<EqRow> eq;
  std::vector<LpRow> lp;
  std::vector<PsdData> psd;
};

Standard to_standard(const ConicProgram& p) {
  Standard s;
  s.n_orig = p.n_vars;
  s.n = p.n_vars;
  for (std::size_t i = 0; i < p.n_vars; ++i) {
    if (std::isfinite(p.lower[i])) {
      s.lp.push_back({i, -1.0, -p.lower[i], LpOrigin::var_lower, i});
    }
    if (std::isfinite(p.upper[i])) {
      s.lp.push_back({i, 1.0, p.upper[i], LpOrigin::var_upper, i});
    }
  }
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    LinearForm form = p.rows[r].form;
    form.canonicalize();
    const double rhs = p.rows[r].rhs;
    const Relation rel = p.rows[r].relation;
    if (rel == Relation::equal) {
      s.eq.push_back({form.terms, rhs, false, r});
      continue;
    }
    const double sign = rel == Relation::lower_bound ? -1.0 : 1.0;
    if (form.terms.size() == 1) {
      const auto [v, a] = form.terms.front();
      s.lp.push_back({v, sign * a, sign * rhs, LpOrigin::row, r});
      continue;
    }
    const std::size_t aux = s.n++;
    auto terms = form.terms;
    terms.emplace_back(aux, -1.0);
    s.eq.push_back({std::move(terms), 0.0, true, r});
    s.lp.push_back({aux, sign, sign * rhs, LpOrigin::row, r});
  }
  s.c = VectorXd::Zero(static_cast<Eigen::Index>(s.n));
  const double sense = p.sense == Sense::maximize ? -1.0 : 1.0;
  for (std::size_t i = 0; i < p.n_vars; ++i) s.c(i) = sense * p.objective[i];

  for (const PsdBlock& blk : p.psd_blocks) {
    PsdData d;
    d.size = static_cast<int>(blk.size);
    d.f0 = MatrixXd::Zero(d.size, d.size);
    std::map<std::size_t, std::vector<Coef>> per_var;
    for (const auto& e : blk.entries) {
      const int r = static_cast<int>(e.row), c = static_cast<int>(e.col);
      d.f0(r, c) += e.value.constant;
      if (r != c) d.f0(c, r) += e.value.constant;
      for (const auto& [v, coef] : e.value.linear.terms) {
        if (coef != 0.0) per_var[v].push_back({r, c, coef});
      }
    }
    for (auto& [v, coefs] : per_var) {
      BlockVar bv;
      bv.var = v;
      bv.coefs = std::move(coefs);
      for (const Coef& k : bv.coefs) {
        bv.rows.push_back(k.r);
        bv.rows.push_back(k.c);
      }
      std::sort(bv.rows.begin(), bv.rows.end());
      bv.rows.erase(std::unique(bv.rows.begin(), bv.rows.end()), bv.rows.end());
      bv.f_rows = MatrixXd::Zero(static_cast<Eigen::Index>(bv.rows.size()), d.size);
      auto local = [&](int row) {
        return static_cast<Eigen::Index>(
            std::lower_bound(bv.rows.begin(), bv.rows.end(), row) - bv.rows.begin());
      };
      for (const Coef& k : bv.coefs) {
        bv.f_rows(local(k.r), k.c) += k.v;
        if (k.r != k.c) bv.f_rows(local(k.c), k.r) += k.v;
      }
      d.vars.push_back(std::move(bv));
    }
    s.psd.push_back(std::move(d));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Cone vectors.

struct ConeVec {
  VectorXd lp;
  std::vector<MatrixXd> psd;
};

ConeVec cone_zero(const Standard& s) {
  ConeVec v;
  v.lp = VectorXd::Zero(static_cast<Eigen::Index>(s.lp.size()));
  for (const auto& b : s.psd) v.psd.push_back(MatrixXd::Zero(b.size, b.size));
  return v;
}

ConeVec cone_identity(const Standard& s) {
  ConeVec v;
  v.lp = VectorXd::Ones(static_cast<Eigen::Index>(s.lp.size()));
  for (const auto& b : s.psd) v.psd.push_back(MatrixXd::Identity(b.size, b.size));
  return v;
}

double dot(const ConeVec& a, const ConeVec& b) {
  double d = a.lp.dot(b.lp);
  for (std::size_t k = 0; k < a.psd.size(); ++k) d += a.psd[k].cwiseProduct(b.psd[k]).sum();
  return d;
}

double norm(const ConeVec& a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, const ConeVec& x, ConeVec& y) {
  y.lp += alpha * x.lp;
  for (std::size_t k = 0; k < x.psd.size(); ++k) y.psd[k] += alpha * x.psd[k];
}

ConeVec scaled(const ConeVec& x, double alpha) {
  ConeVec y = x;
  y.lp *= alpha;
  for (auto& m : y.psd) m *= alpha;
  return y;
}

std::size_t cone_degree(const Standard& s) {
  std::size_t d = s.lp.size();
  for (const auto& b : s.psd) d += static_cast<std::size_t>(b.size);
  return d;
}

ConeVec apply_g(const Standard& s, const VectorXd& x) {
  ConeVec out = cone_zero(s);
  for (std::size_t l = 0; l < s.lp.size(); ++l) out.lp(l) = s.lp[l].g * x(s.lp[l].var);
  for (std::size_t b = 0; b < s.psd.size(); ++b) {
    MatrixXd& m = out.psd[b];
    for (const BlockVar& bv : s.psd[b].vars) {
      const double xi = x(bv.var);
      if (xi == 0.0) continue;
      for (const Coef& k : bv.coefs) {
        m(k.r, k.c) -= xi * k.v;
        if (k.r != k.c) m(k.c, k.r) -= xi * k.v;
      }
    }
  }
  return out;
}

VectorXd apply_gt(const Standard& s, const ConeVec& z) {
  VectorXd out = VectorXd::Zero(static_cast<Eigen::Index>(s.n));
  for (std::size_t l = 0; l < s.lp.size(); ++l) out(s.lp[l].var) += s.lp[l].g * z.lp(l);
  for (std::size_t b = 0; b < s.psd.size(); ++b) {
    const MatrixXd& m = z.psd[b];
    for (const BlockVar& bv : s.psd[b].vars) {
      double tr = 0.0;
      for (const Coef& k : bv.coefs) tr += k.v * (k.r == k.c ? m(k.r, k.r) : 2.0 * m(k.r, k.c));
      out(bv.var) -= tr;
    }
  }
  return out;
}

ConeVec cone_h(const Standard& s) {
  ConeVec h = cone_zero(s);
  for (std::size_t l = 0; l < s.lp.size(); ++l) h.lp(l) = s.lp[l].h;
  for (std::size_t b = 0; b < s.psd.size(); ++b) h.psd[b] = s.psd[b].f0;
  return h;
}

MatrixXd sym(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// ---------------------------------------------------------------------------
// Nesterov-Todd scaling.

struct Scaling {
  VectorXd w;       // LP: sqrt(s/z)
  VectorXd lp_lam;  // LP: sqrt(s z)
  std::vector<MatrixXd> r, rinv, v, rrt;
  std::vector<VectorXd> lam;
};

bool compute_scaling(const ConeVec& s, const ConeVec& z, Scaling& sc) {
  sc.w = (s.lp.array() / z.lp.array()).sqrt();
  sc.lp_lam = (s.lp.array() * z.lp.array()).sqrt();
  const std::size_t nb = s.psd.size();
  sc.r.resize(nb);
  sc.rinv.resize(nb);
  sc.v.resize(nb);
  sc.rrt.resize(nb);
  sc.lam.resize(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    Eigen::LLT<MatrixXd> ls(s.psd[b]), lz(z.psd[b]);
    if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
    const MatrixXd l_s = ls.matrixL();
    const MatrixXd l_z = lz.matrixL();
    Eigen::JacobiSVD<MatrixXd> svd(l_z.transpose() * l_s, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const VectorXd lam = svd.singularValues();
    if (lam.minCoeff() <= 0.0) return false;
    const VectorXd isq = lam.cwiseSqrt().cwiseInverse();
    sc.r[b] = l_s * svd.matrixV() * isq.asDiagonal();
    sc.rinv[b] = isq.asDiagonal() * svd.matrixU().transpose() * l_z.transpose();
    sc.v[b] = sc.rinv[b].transpose() * sc.rinv[b];
    sc.rrt[b] = sc.r[b] * sc.r[b].transpose();
    sc.lam[b] = lam;
  }
  return true;
}

// W u (scaled dual direction)
ConeVec scale_w(const Scaling& sc, const ConeVec& u) {
  ConeVec out = u;
  out.lp = u.lp.cwiseProduct(sc.w);
  for (std::size_t b = 0; b < u.psd.size(); ++b) out.psd[b] = sym(sc.r[b].transpose() * u.psd[b] * sc.r[b]);
  return out;
}

// W^{-T} u (scaled primal direction)
ConeVec scale_winvt(const Scaling& sc, const ConeVec& u) {
  ConeVec out = u;
  out.lp = u.lp.cwiseQuotient(sc.w);
  for (std::size_t b = 0; b < u.psd.size(); ++b) out.psd[b] = sym(sc.rinv[b] * u.psd[b] * sc.rinv[b].transpose());
  return out;
}

// W^T u
ConeVec scale_wt(const Scaling& sc, const ConeVec& u) {
  ConeVec out = u;
  out.lp = u.lp.cwiseProduct(sc.w);
  for (std::size_t b = 0; b < u.psd.size(); ++b) out.psd[b] = sym(sc.r[b] * u.psd[b] * sc.r[b].transpose());
  return out;
}

ConeVec apply_h(const Scaling& sc, const ConeVec& u) {
  ConeVec out = u;
  out.lp = u.lp.cwiseProduct(sc.w.cwiseAbs2());
  for (std::size_t b = 0; b < u.psd.size(); ++b) out.psd[b] = sym(sc.rrt[b] * u.psd[b] * sc.rrt[b]);
  return out;
}

ConeVec apply_hinv(const Scaling& sc, const ConeVec& u) {
  ConeVec out = u;
  out.lp = u.lp.cwiseQuotient(sc.w.cwiseAbs2());
  for (std::size_t b = 0; b < u.psd.size(); ++b) out.psd[b] = sym(sc.v[b] * u.psd[b] * sc.v[b]);
  return out;
}

// lambda \ u: inverse of the Jordan product with lambda.
ConeVec lambda_div(const Scaling& sc, const ConeVec& u) {
  ConeVec out = u;
  out.lp = u.lp.cwiseQuotient(sc.lp_lam);
  for (std::size_t b = 0; b < u.psd.size(); ++b) {
    const VectorXd& l = sc.lam[b];
    MatrixXd& m = out.psd[b];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = 2.0 * u.psd[b](i, j) / (l(i) + l(j));
    }
  }
  return out;
}

ConeVec jordan(const ConeVec& a, const ConeVec& b) {
  ConeVec out = a;
  out.lp = a.lp.cwiseProduct(b.lp);
  for (std::size_t k = 0; k < a.psd.size(); ++k) out.psd[k] = 0.5 * (a.psd[k] * b.psd[k] + b.psd[k] * a.psd[k]);
  return out;
}

// Largest alpha in (0, cap] keeping lambda + alpha * d in the cone.
double max_step(const Scaling& sc, const ConeVec& d, double cap) {
  double alpha = cap;
  for (Eigen::Index i = 0; i < d.lp.size(); ++i) {
    if (d.lp(i) < 0.0) alpha = std::min(alpha, -sc.lp_lam(i) / d.lp(i));
  }
  for (std::size_t b = 0; b < d.psd.size(); ++b) {
    const VectorXd isq = sc.lam[b].cwiseSqrt().cwiseInverse();
    const MatrixXd m = isq.asDiagonal() * d.psd[b] * isq.asDiagonal();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym(m), Eigen::EigenvaluesOnly);
    const double mn = eig.eigenvalues().minCoeff();
    if (mn < 0.0) alpha = std::min(alpha, -1.0 / mn);
  }
  return alpha;
}

// ---------------------------------------------------------------------------
// Equality presolve: drop dependent rows, detect inconsistent ones.

struct EqSystem {
  Eigen::SparseMatrix<double, Eigen::RowMajor> a;
  VectorXd b;
  std::vector<std::size_t> kept;  // index into Standard::eq
  VectorXd scale;                 // per kept row: original = scaled * scale
  std::optional<VectorXd> inconsistency;  // multipliers over Standard::eq (unscaled)
};

EqSystem presolve_equalities(const Standard& s) {
  EqSystem out;
  const auto m = static_cast<Eigen::Index>(s.eq.size());
  const auto n = static_cast<Eigen::Index>(s.n);
  if (m == 0) {
    out.a.resize(0, n);
    out.b.resize(0);
    return out;
  }
  VectorXd scale(m), b(m);
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index r = 0; r < m; ++r) {
    double mx = 0.0;
    for (const auto& [v, c] : s.eq[r].terms) mx = std::max(mx, std::abs(c));
    scale(r) = mx > 0.0 ? mx : 1.0;
    for (const auto& [v, c] : s.eq[r].terms) {
      trip.emplace_back(static_cast<int>(v), static_cast<int>(r), c / scale(r));
    }
    b(r) = s.eq[r].rhs / scale(r);
  }
  Eigen::SparseMatrix<double> at(n, m);
  at.setFromTriplets(trip.begin(), trip.end());
  at.makeCompressed();

  Eigen::SparseQR<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> qr;
  qr.compute(at);
  std::vector<std::size_t> kept;
  if (qr.info() != Eigen::Success || qr.rank() == m) {
    kept.resize(static_cast<std::size_t>(m));
    std::iota(kept.begin(), kept.end(), 0);
  } else {
    const Eigen::Index k = qr.rank();
    const auto& perm = qr.colsPermutation().indices();
    const MatrixXd r_full = MatrixXd(qr.matrixR());
    const MatrixXd r11 = r_full.topLeftCorner(k, k);
    const auto tri = r11.triangularView<Eigen::Upper>();
    VectorXd b_ind(k);
    for (Eigen::Index i = 0; i < k; ++i) b_ind(i) = b(perm(i));
    for (Eigen::Index j = k; j < m; ++j) {
      const VectorXd coeffs = tri.solve(r_full.block(0, j, k, 1));
      const double predicted = b_ind.dot(coeffs);
      const double actual = b(perm(j));
      const double tol = 1e-9 * std::max({1.0, std::abs(actual), coeffs.cwiseAbs().dot(b_ind.cwiseAbs())});
      if (std::abs(predicted - actual) > tol && !out.inconsistency) {
        VectorXd w = VectorXd::Zero(m);
        for (Eigen::Index i = 0; i < k; ++i) w(perm(i)) = coeffs(i) / scale(perm(i));
        w(perm(j)) = -1.0 / scale(perm(j));
        out.inconsistency = w;
      }
    }
    for (Eigen::Index i = 0; i < k; ++i) kept.push_back(static_cast<std::size_t>(perm(i)));
    std::sort(kept.begin(), kept.end());
  }
  const auto p = static_cast<Eigen::Index>(kept.size());
  std::vector<Eigen::Triplet<double>> rows;
  out.b.resize(p);
  out.scale.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const std::size_t r = kept[static_cast<std::size_t>(i)];
    for (const auto& [v, c] : s.eq[r].terms) {
      rows.emplace_back(static_cast<int>(i), static_cast<int>(v), c / scale(r));
    }
    out.b(i) = b(r);
    out.scale(i) = scale(r);
  }
  out.a.resize(p, n);
  out.a.setFromTriplets(rows.begin(), rows.end());
  out.a.makeCompressed();
  out.kept = std::move(kept);
  return out;
}

// ---------------------------------------------------------------------------
// KKT system.

struct Group {
  std::vector<std::size_t> vars;
  std::vector<std::size_t> blocks;
  std::vector<std::size_t> lp_rows;
  std::vector<Eigen::Index> eq_rows;  // equality rows touching the group
  MatrixXd a;                         // eq_rows x vars
  MatrixXd m;
  Eigen::LLT<MatrixXd> llt;
};

class Kkt {
 public:
  Kkt(const Standard& s, const EqSystem& eq) : s_(s), eq_(eq) {
    const std::size_t n = s.n;
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t v) {
      while (parent[v] != v) v = parent[v] = parent[parent[v]];
      return v;
    };
    for (const auto& blk : s.psd) {
      for (std::size_t k = 1; k < blk.vars.size(); ++k) {
        parent[find(blk.vars[k].var)] = find(blk.vars[0].var);
      }
    }
    std::vector<long> group_of_root(n, -1);
    group_.resize(n);
    local_.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t root = find(v);
      if (group_of_root[root] < 0) {
        group_of_root[root] = static_cast<long>(groups_.size());
        groups_.emplace_back();
      }
      const auto g = static_cast<std::size_t>(group_of_root[root]);
      group_[v] = g;
      local_[v] = groups_[g].vars.size();
      groups_[g].vars.push_back(v);
    }
    for (std::size_t b = 0; b < s.psd.size(); ++b) {
      if (!s.psd[b].vars.empty()) groups_[group_[s.psd[b].vars[0].var]].blocks.push_back(b);
    }
    for (std::size_t l = 0; l < s.lp.size(); ++l) groups_[group_[s.lp[l].var]].lp_rows.push_back(l);

    const Eigen::Index p = eq.a.rows();
    for (Eigen::Index r = 0; r < p; ++r) {
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(eq.a, r); it; ++it) {
        const std::size_t g = group_[static_cast<std::size_t>(it.col())];
        if (groups_[g].eq_rows.empty() || groups_[g].eq_rows.back() != r) groups_[g].eq_rows.push_back(r);
      }
    }
    for (auto& g : groups_) {
      g.a = MatrixXd::Zero(static_cast<Eigen::Index>(g.eq_rows.size()), static_cast<Eigen::Index>(g.vars.size()));
      for (std::size_t i = 0; i < g.eq_rows.size(); ++i) {
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(eq.a, g.eq_rows[i]); it; ++it) {
          const auto v = static_cast<std::size_t>(it.col());
          if (&groups_[group_[v]] == &g) g.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(local_[v])) = it.value();
        }
      }
    }
  }

  bool factor(const Scaling& sc) {
    const Eigen::Index p = eq_.a.rows();
    schur_ = MatrixXd::Zero(p, p);
    for (auto& g : groups_) {
      const auto ng = static_cast<Eigen::Index>(g.vars.size());
      g.m = MatrixXd::Zero(ng, ng);
      for (std::size_t l : g.lp_rows) {
        const LpRow& row = s_.lp[l];
        const auto i = static_cast<Eigen::Index>(local_[row.var]);
        g.m(i, i) += row.g * row.g / (sc.w(static_cast<Eigen::Index>(l)) * sc.w(static_cast<Eigen::Index>(l)));
      }
      for (std::size_t b : g.blocks) add_block(s_.psd[b], sc.v[b], g);
      double reg = 1e-13 * std::max(1.0, g.m.diagonal().cwiseAbs().maxCoeff());
      for (int attempt = 0; attempt < 6; ++attempt) {
        MatrixXd mr = g.m;
        mr.diagonal().array() += reg;
        g.llt.compute(mr);
        if (g.llt.info() == Eigen::Success) break;
        reg *= 100.0;
        if (attempt == 5) return false;
      }
      if (g.eq_rows.empty()) continue;
      const MatrixXd y = g.llt.matrixL().solve(g.a.transpose());
      const MatrixXd part = y.transpose() * y;
      for (std::size_t i = 0; i < g.eq_rows.size(); ++i) {
        for (std::size_t j = 0; j < g.eq_rows.size(); ++j) {
          schur_(g.eq_rows[i], g.eq_rows[j]) += part(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
      }
    }
    if (p > 0) {
      double reg = 1e-13 * std::max(1.0, schur_.diagonal().cwiseAbs().maxCoeff());
      for (int attempt = 0; attempt < 6; ++attempt) {
        MatrixXd sr = schur_;
        sr.diagonal().array() += reg;
        schur_llt_.compute(sr);
        if (schur_llt_.info() == Eigen::Success) break;
        reg *= 100.0;
        if (attempt == 5) return false;
      }
    }
    sc_ = &sc;
    return true;
  }

  // Solves [0 A^T G^T; A 0 0; G 0 -H] (dx, dy, dz) = (rx, ry, rz). The
  // reduced solve alone loses accuracy near the optimum (M and the Schur
  // complement both become ill-conditioned), so it serves as a right
  // preconditioner for restarted GMRES on the full system.
  // `rel_tol` is the GMRES stopping tolerance relative to the right-hand side.
  void solve(const VectorXd& rx, const VectorXd& ry, const ConeVec& rz, VectorXd& dx, VectorXd& dy,
             ConeVec& dz, double rel_tol) const {
    const KVec rhs{rx, ry, rz};
    KVec u = precondition(rhs);
    const double target = rel_tol * std::max(1.0, knorm(rhs));
    constexpr int kRestart = 20;
    for (int cycle = 0; cycle < 3; ++cycle) {
      KVec res = rhs;
      kaxpy(-1.0, apply(u), res);
      const double beta = knorm(res);
      if (beta <= target) break;
      std::vector<KVec> v{kscaled(res, 1.0 / beta)};
      std::vector<KVec> zs;
      MatrixXd hess = MatrixXd::Zero(kRestart + 1, kRestart);
      VectorXd cs = VectorXd::Zero(kRestart), sn = VectorXd::Zero(kRestart);
      VectorXd g = VectorXd::Zero(kRestart + 1);
      g(0) = beta;
      int used = 0;
      for (int j = 0; j < kRestart; ++j) {
        zs.push_back(precondition(v[static_cast<std::size_t>(j)]));
        KVec w = apply(zs.back());
        for (int i = 0; i <= j; ++i) {
          hess(i, j) = kdot(w, v[static_cast<std::size_t>(i)]);
          kaxpy(-hess(i, j), v[static_cast<std::size_t>(i)], w);
        }
        const double wn = knorm(w);
        hess(j + 1, j) = wn;
        for (int i = 0; i < j; ++i) {
          const double t = cs(i) * hess(i, j) + sn(i) * hess(i + 1, j);
          hess(i + 1, j) = -sn(i) * hess(i, j) + cs(i) * hess(i + 1, j);
          hess(i, j) = t;
        }
        const double den = std::hypot(hess(j, j), hess(j + 1, j));
        cs(j) = den > 0.0 ? hess(j, j) / den : 1.0;
        sn(j) = den > 0.0 ? hess(j + 1, j) / den : 0.0;
        hess(j, j) = den;
        hess(j + 1, j) = 0.0;
        g(j + 1) = -sn(j) * g(j);
        g(j) = cs(j) * g(j);
        used = j + 1;
        if (std::abs(g(j + 1)) <= target || hess(j, j) == 0.0 || wn == 0.0) break;
        v.push_back(kscaled(w, 1.0 / wn));
      }
      const VectorXd coef =
          hess.topLeftCorner(used, used).triangularView<Eigen::Upper>().solve(g.head(used));
      for (int i = 0; i < used; ++i) kaxpy(coef(i), zs[static_cast<std::size_t>(i)], u);
      if (std::abs(g(used)) <= target) break;
    }
    dx = std::move(u.x);
    dy = std::move(u.y);
    dz = std::move(u.z);
  }

 private:
  void add_block(const PsdData& blk, const MatrixXd& v, Group& g) const {
    const auto nv = blk.vars.size();
    std::vector<Eigen::Index> loc(nv);
    for (std::size_t k = 0; k < nv; ++k) loc[k] = static_cast<Eigen::Index>(local_[blk.vars[k].var]);
    for (std::size_t i = 0; i < nv; ++i) {
      const BlockVar& bi = blk.vars[i];
      // B = V F_i V built from the rows F_i touches.
      MatrixXd vr(v.rows(), static_cast<Eigen::Index>(bi.rows.size()));
      for (std::size_t k = 0; k < bi.rows.size(); ++k) vr.col(static_cast<Eigen::Index>(k)) = v.col(bi.rows[k]);
      const MatrixXd t = bi.f_rows * v;
      const MatrixXd bm = vr * t;
      for (std::size_t j = i; j < nv; ++j) {
        double tr = 0.0;
        for (const Coef& k : blk.vars[j].coefs) tr += k.v * (k.r == k.c ? bm(k.r, k.r) : bm(k.r, k.c) + bm(k.c, k.r));
        g.m(loc[i], loc[j]) += tr;
        if (j != i) g.m(loc[j], loc[i]) += tr;
      }
    }
  }

  struct KVec {
    VectorXd x, y;
    ConeVec z;
  };

  static double kdot(const KVec& a, const KVec& b) { return a.x.dot(b.x) + a.y.dot(b.y) + dot(a.z, b.z); }
  static double knorm(const KVec& a) { return std::sqrt(kdot(a, a)); }
  static void kaxpy(double alpha, const KVec& a, KVec& b) {
    b.x += alpha * a.x;
    b.y += alpha * a.y;
    axpy(alpha, a.z, b.z);
  }
  static KVec kscaled(const KVec& a, double alpha) { return KVec{alpha * a.x, alpha * a.y, scaled(a.z, alpha)}; }

  KVec apply(const KVec& u) const {
    KVec out;
    out.x = eq_.a.transpose() * u.y + apply_gt(s_, u.z);
    out.y = eq_.a * u.x;
    out.z = apply_g(s_, u.x);
    axpy(-1.0, apply_h(*sc_, u.z), out.z);
    return out;
  }

  KVec precondition(const KVec& r) const {
    KVec out;
    reduced_solve(r.x, r.y, r.z, out.x, out.y, out.z);
    return out;
  }

  VectorXd m_solve(const VectorXd& r) const {
    VectorXd out(r.size());
    for (const auto& g : groups_) {
      VectorXd rg(static_cast<Eigen::Index>(g.vars.size()));
      for (std::size_t i = 0; i < g.vars.size(); ++i) rg(static_cast<Eigen::Index>(i)) = r(g.vars[i]);
      const VectorXd sol = g.llt.solve(rg);
      for (std::size_t i = 0; i < g.vars.size(); ++i) out(g.vars[i]) = sol(static_cast<Eigen::Index>(i));
    }
    return out;
  }

  void reduced_solve(const VectorXd& rx, const VectorXd& ry, const ConeVec& rz, VectorXd& dx, VectorXd& dy,
                     ConeVec& dz) const {
    const VectorXd t = rx + apply_gt(s_, apply_hinv(*sc_, rz));
    const VectorXd mt = m_solve(t);
    if (eq_.a.rows() > 0) {
      const VectorXd rhs = eq_.a * mt - ry;
      dy = schur_llt_.solve(rhs);
      dx = m_solve(t - eq_.a.transpose() * dy);
    } else {
      dy = VectorXd::Zero(0);
      dx = mt;
    }
    ConeVec gd = apply_g(s_, dx);
    axpy(-1.0, rz, gd);
    dz = apply_hinv(*sc_, gd);
  }

  const Standard& s_;
  const EqSystem& eq_;
  std::vector<Group> groups_;
  std::vector<std::size_t> group_;
  std::vector<std::size_t> local_;
  MatrixXd schur_;
  Eigen::LLT<MatrixXd> schur_llt_;
  const Scaling* sc_ = nullptr;
};

// ---------------------------------------------------------------------------

InfeasibilityCertificate make_certificate(const ConicProgram& program, const Standard& s, const EqSystem& eq,
                                          const VectorXd& y, const ConeVec& z) {
  InfeasibilityCertificate cert;
  cert.row_multipliers.assign(program.rows.size(), 0.0);
  cert.lower_multipliers.assign(program.n_vars, 0.0);
  cert.upper_multipliers.assign(program.n_vars, 0.0);
  for (std::size_t i = 0; i < eq.kept.size(); ++i) {
    const EqRow& row = s.eq[eq.kept[i]];
    if (!row.aux) cert.row_multipliers[row.origin] = -y(static_cast<Eigen::Index>(i)) / eq.scale(static_cast<Eigen::Index>(i));
  }
  for (std::size_t l = 0; l < s.lp.size(); ++l) {
    const double zl = std::max(0.0, z.lp(static_cast<Eigen::Index>(l)));
    switch (s.lp[l].origin) {
      case LpOrigin::var_lower:
        cert.lower_multipliers[s.lp[l].index] = zl;
        break;
      case LpOrigin::var_upper:
        cert.upper_multipliers[s.lp[l].index] = zl;
        break;
      case LpOrigin::row:
        cert.row_multipliers[s.lp[l].index] = zl;
        break;
    }
  }
  cert.block_multipliers = z.psd;
  double total = 0.0;
  for (std::size_t r = 0; r < program.rows.size(); ++r) {
    if (program.rows[r].relation != Relation::equal) total += cert.row_multipliers[r];
  }
  for (double u : cert.lower_multipliers) total += u;
  for (double u : cert.upper_multipliers) total += u;
  for (const auto& m : cert.block_multipliers) total += m.trace();
  if (total <= 0.0) {
    for (double w : cert.row_multipliers) total = std::max(total, std::abs(w));
  }
  if (total > 0.0) {
    for (double& w : cert.row_multipliers) w /= total;
    for (double& w : cert.lower_multipliers) w /= total;
    for (double& w : cert.upper_multipliers) w /= total;
    for (auto& m : cert.block_multipliers) m /= total;
  }
  cert.margin = certificate_margin(program, cert);
  return cert;
}

}  // namespace

SolveReport InteriorPointBackend::solve(const ConicProgram& program, const SolverSettings& settings) const {
  const auto start = std::chrono::steady_clock::now();
  SolveReport rep;
  rep.settings = settings;
  auto finish = [&](SolveReport& r) -> SolveReport {
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
  };
  try {
    program.check();
  } catch (const std::exception& e) {
    rep.status = SolveStatus::error;
    rep.message = e.what();
    return finish(rep);
  }

  try {
    const Standard s = to_standard(program);
    const EqSystem eq = presolve_equalities(s);
    if (eq.inconsistency) {
      InfeasibilityCertificate cert;
      cert.row_multipliers.assign(program.rows.size(), 0.0);
      cert.lower_multipliers.assign(program.n_vars, 0.0);
      cert.upper_multipliers.assign(program.n_vars, 0.0);
      cert.block_multipliers.resize(program.psd_blocks.size());
      const VectorXd& w = *eq.inconsistency;
      double phi0 = 0.0, mx = 0.0;
      for (Eigen::Index r = 0; r < w.size(); ++r) {
        phi0 -= w(r) * s.eq[r].rhs;
        mx = std::max(mx, std::abs(w(r)));
      }
      const double sign = phi0 > 0.0 ? -1.0 : 1.0;
      for (Eigen::Index r = 0; r < w.size(); ++r) {
        if (!s.eq[r].aux) cert.row_multipliers[s.eq[r].origin] = sign * w(r) / mx;
      }
      cert.margin = certificate_margin(program, cert);
      rep.status = SolveStatus::infeasible;
      rep.message = "inconsistent equality rows";
      rep.certificate = std::move(cert);
      return finish(rep);
    }

    const auto n = static_cast<Eigen::Index>(s.n);
    const Eigen::Index p = eq.a.rows();
    const ConeVec h = cone_h(s);
    const VectorXd& c = s.c;
    const VectorXd& b = eq.b;
    const double degree = static_cast<double>(cone_degree(s));
    const double nc = std::max(1.0, c.norm());
    const double nb = std::max(1.0, b.size() ? b.norm() : 0.0);
    const double nh = std::max(1.0, norm(h));

    // No cone: a consistent linear system. Bounded iff c lies in the row
    // space of the equalities; the homogeneous embedding has no interior here.
    if (degree == 0.0) {
      const Eigen::MatrixXd a = Eigen::MatrixXd(eq.a);
      VectorXd x0 = VectorXd::Zero(n);
      VectorXd y0 = VectorXd::Zero(p);
      if (p > 0) {
        const auto qr = a.completeOrthogonalDecomposition();
        x0 = qr.solve(b);
        y0 = a.transpose().completeOrthogonalDecomposition().solve(-c);
      }
      const double dres0 = (a.transpose() * y0 + c).norm() / nc;
      rep.iterations = 0;
      if (dres0 > settings.feasibility_tol) {
        rep.status = SolveStatus::unbounded;
        rep.message = "dual infeasible";
        return finish(rep);
      }
      const double obj_sign = program.sense == Sense::maximize ? -1.0 : 1.0;
      rep.status = SolveStatus::optimal;
      rep.primal.resize(program.n_vars);
      for (std::size_t i = 0; i < program.n_vars; ++i) rep.primal[i] = x0(static_cast<Eigen::Index>(i));
      rep.objective = obj_sign * c.dot(x0);
      rep.dual_objective = obj_sign * -b.dot(y0);
      rep.primal_residual = p > 0 ? (a * x0 - b).norm() / nb : 0.0;
      rep.dual_residual = dres0;
      return finish(rep);
    }

    VectorXd x = VectorXd::Zero(n), y = VectorXd::Zero(p);
    ConeVec sv = cone_identity(s), zv = cone_identity(s);
    double tau = 1.0, kappa = 1.0;

    Kkt kkt(s, eq);
    Scaling sc;
    int stall = 0;
    SolveStatus status = SolveStatus::error;
    double pres = kInfinity, dres = kInfinity, rel_gap = kInfinity, pcost = 0.0, dcost = 0.0;
    double pinf = kInfinity, dinf = kInfinity;
    std::string message;
    int iter = 0;

    // Best iterate so far by max(pres, dres, gap); late iterations can lose
    // accuracy to round-off, so a stalled solve falls back to it.
    struct Snapshot {
      double merit = kInfinity;
      int iter = 0;
      VectorXd x;
      double tau = 1.0, pres = 0.0, dres = 0.0, gap = 0.0, pcost = 0.0, dcost = 0.0;
    } best;

    for (;; ++iter) {
      // Residuals.
      const VectorXd rx = eq.a.transpose() * y + apply_gt(s, zv) + c * tau;
      const VectorXd ry = eq.a * x - b * tau;
      ConeVec rz = apply_g(s, x);
      axpy(1.0, sv, rz);
      axpy(-tau, h, rz);
      const double cx = c.dot(x), by = b.dot(y), hz = dot(h, zv);
      const double rtau = kappa + cx + by + hz;
      const double sz = dot(sv, zv);
      const double mu = (sz + tau * kappa) / (degree + 1.0);

      // Residuals relative to the size of the terms they balance.
      const double aty_norm = eq.a.rows() ? (eq.a.transpose() * y).norm() : 0.0;
      const double gtz_norm = apply_gt(s, zv).norm();
      ConeVec gx_s = rz;
      axpy(tau, h, gx_s);
      const double ax_norm = ry.size() ? (ry + b * tau).norm() : 0.0;
      pres = std::max(ry.size() ? ry.norm() / std::max(nb * tau, ax_norm) : 0.0,
                      norm(rz) / std::max(nh * tau, norm(gx_s)));
      dres = rx.norm() / std::max({nc * tau, aty_norm, gtz_norm});
      pcost = cx / tau;
      dcost = -(by + hz) / tau;
      const double gap = std::max(sz / (tau * tau), std::abs(pcost - dcost));
      rel_gap = gap / std::max(1.0, std::min(std::abs(pcost), std::abs(dcost)));
      pinf = (by + hz) < 0.0 ? (eq.a.transpose() * y + apply_gt(s, zv)).norm() / -(by + hz) : kInfinity;
      if (cx < 0.0) {
        ConeVec gs = apply_g(s, x);
        axpy(1.0, sv, gs);
        const VectorXd ax = eq.a * x;
        dinf = std::max(ax.size() ? ax.norm() : 0.0, norm(gs)) / -cx;
      } else {
        dinf = kInfinity;
      }

      if (settings.verbose) {
        std::fprintf(stderr, "%3d  pcost % .8e  dcost % .8e  pres %.2e  dres %.2e  gap %.2e  tau %.2e  kap %.2e\n",
                     iter, pcost, dcost, pres, dres, rel_gap, tau, kappa);
      }

      if (pres <= settings.feasibility_tol && dres <= settings.feasibility_tol && rel_gap <= settings.gap_tol) {
        status = SolveStatus::optimal;
        break;
      }
      if (pinf <= settings.feasibility_tol) {
        status = SolveStatus::infeasible;
        break;
      }
      if (dinf <= settings.feasibility_tol) {
        status = SolveStatus::unbounded;
        break;
      }
      const double merit = std::max({pres, dres, rel_gap});
      if (merit < best.merit) {
        best = Snapshot{merit, iter, x, tau, pres, dres, rel_gap, pcost, dcost};
      }
      if (iter - best.iter >= 8) {
        message = "no progress in the last 8 iterations";
        break;
      }
      if (iter >= settings.max_iterations) {
        message = "iteration limit reached";
        break;
      }
      if (stall >= 3) {
        message = "step length collapsed";
        break;
      }

      if (!compute_scaling(sv, zv, sc) || !kkt.factor(sc)) {
        message = "numerical failure in the KKT factorization";
        break;
      }

      // Directions only need to be accurate relative to the current residuals.
      const double lin_tol = std::clamp(1e-3 * std::max({pres, dres, rel_gap}), 1e-12, 1e-6);
      VectorXd x1, y1, x2, y2;
      ConeVec z1, z2;
      kkt.solve(-c, b, h, x1, y1, z1, lin_tol);
      const double denom_base = c.dot(x1) + b.dot(y1) + dot(h, z1);

      ConeVec lam = cone_zero(s);
      lam.lp = sc.lp_lam;
      for (std::size_t k = 0; k < lam.psd.size(); ++k) lam.psd[k] = sc.lam[k].asDiagonal();

      // One direction for given (sigma, d_s, d_kappa).
      auto direction = [&](double sigma, const ConeVec& ds_target, double dk_target, VectorXd& dx, VectorXd& dy,
                           ConeVec& dz, ConeVec& ds, double& dtau, double& dkap) {
        const ConeVec lds = lambda_div(sc, ds_target);
        const ConeVec wlds = scale_wt(sc, lds);
        ConeVec rhs_z = scaled(rz, -(1.0 - sigma));
        axpy(-1.0, wlds, rhs_z);
        kkt.solve(-(1.0 - sigma) * rx, -(1.0 - sigma) * ry, rhs_z, x2, y2, z2, lin_tol);
        const double num = dk_target / tau + (1.0 - sigma) * rtau + c.dot(x2) + b.dot(y2) + dot(h, z2);
        dtau = num / (kappa / tau - denom_base);
        dx = x2 + dtau * x1;
        dy = y2 + dtau * y1;
        dz = z2;
        axpy(dtau, z1, dz);
        ds = wlds;
        axpy(-1.0, apply_h(sc, dz), ds);
        dkap = (dk_target - kappa * dtau) / tau;
      };

      auto step_length = [&](const ConeVec& ds, const ConeVec& dz, double dtau, double dkap) {
        double a = std::min(max_step(sc, scale_winvt(sc, ds), 1.0), max_step(sc, scale_w(sc, dz), 1.0));
        if (dtau < 0.0) a = std::min(a, -tau / dtau);
        if (dkap < 0.0) a = std::min(a, -kappa / dkap);
        return a;
      };

      // Predictor.
      VectorXd dxa, dya;
      ConeVec dza, dsa;
      double dtaua, dkapa;
      const ConeVec ds_aff = scaled(jordan(lam, lam), -1.0);
      direction(0.0, ds_aff, -tau * kappa, dxa, dya, dza, dsa, dtaua, dkapa);
      const double alpha_aff = step_length(dsa, dza, dtaua, dkapa);
      const double sigma = std::pow(1.0 - alpha_aff, 3);

      // Corrector.
      ConeVec ds_cor = ds_aff;
      const ConeVec ident = cone_identity(s);
      axpy(sigma * mu, ident, ds_cor);
      axpy(-1.0, jordan(scale_winvt(sc, dsa), scale_w(sc, dza)), ds_cor);
      const double dk_cor = -tau * kappa + sigma * mu - dtaua * dkapa;
      VectorXd dx, dy;
      ConeVec dz, ds;
      double dtau, dkap;
      direction(sigma, ds_cor, dk_cor, dx, dy, dz, ds, dtau, dkap);
      double alpha = std::min(1.0, 0.99 * step_length(ds, dz, dtau, dkap));

      // Guard against round-off pushing iterates out of the cone.
      for (int back = 0; back < 30; ++back) {
        ConeVec s_new = sv, z_new = zv;
        axpy(alpha, ds, s_new);
        axpy(alpha, dz, z_new);
        bool ok = (s_new.lp.array() > 0.0).all() && (z_new.lp.array() > 0.0).all();
        for (std::size_t k = 0; ok && k < s_new.psd.size(); ++k) {
          ok = Eigen::LLT<MatrixXd>(s_new.psd[k]).info() == Eigen::Success &&
               Eigen::LLT<MatrixXd>(z_new.psd[k]).info() == Eigen::Success;
        }
        if (ok) {
          sv = std::move(s_new);
          zv = std::move(z_new);
          break;
        }
        alpha *= 0.5;
        if (back == 29) alpha = 0.0;
      }
      x += alpha * dx;
      y += alpha * dy;
      tau += alpha * dtau;
      kappa += alpha * dkap;
      stall = alpha < 1e-8 ? stall + 1 : 0;
    }

    rep.iterations = iter;
    rep.primal_residual = pres;
    rep.dual_residual = dres;
    rep.gap = rel_gap;
    const double obj_sign = program.sense == Sense::maximize ? -1.0 : 1.0;

    if (status == SolveStatus::error) {
      if (best.merit <= settings.inaccurate_tol) {
        status = SolveStatus::inaccurate;
        x = best.x;
        tau = best.tau;
        pcost = best.pcost;
        dcost = best.dcost;
        rep.primal_residual = best.pres;
        rep.dual_residual = best.dres;
        rep.gap = best.gap;
      } else if (pinf <= settings.inaccurate_tol) {
        status = SolveStatus::infeasible;
      } else if (dinf <= settings.inaccurate_tol) {
        status = SolveStatus::unbounded;
      }
    }
    rep.status = status;
    rep.message = message;
    if (status == SolveStatus::optimal || status == SolveStatus::inaccurate) {
      rep.primal.resize(program.n_vars);
      for (std::size_t i = 0; i < program.n_vars; ++i) rep.primal[i] = x(static_cast<Eigen::Index>(i)) / tau;
      rep.objective = obj_sign * pcost;
      rep.dual_objective = obj_sign * dcost;
    } else if (status == SolveStatus::infeasible) {
      rep.certificate = make_certificate(program, s, eq, y, zv);
      if (rep.message.empty()) rep.message = "primal infeasible";
    } else if (status == SolveStatus::unbounded) {
      if (rep.message.empty()) rep.message = "dual infeasible";
    }
  } catch (const std::exception& e) {
    rep.status = SolveStatus::error;
    rep.message = e.what();
  }
  return finish(rep);
}

}  // namespace occmom
