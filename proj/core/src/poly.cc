#include "occmom/poly.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace occmom {

Monomial::Monomial(std::size_t n_x) : exps_(n_x + 1, 0) {}

Monomial::Monomial(int t_exp, std::vector<int> x_exps) {
  exps_.reserve(x_exps.size() + 1);
  exps_.push_back(t_exp);
  exps_.insert(exps_.end(), x_exps.begin(), x_exps.end());
  for (int e : exps_) {
    if (e < 0) throw std::invalid_argument("negative monomial exponent");
    degree_ += e;
  }
}

Monomial Monomial::state(std::size_t n_x, std::size_t i, int power) {
  std::vector<int> x(n_x, 0);
  x.at(i) = power;
  return Monomial(0, std::move(x));
}

Monomial Monomial::time(std::size_t n_x, int power) {
  return Monomial(power, std::vector<int>(n_x, 0));
}

Monomial Monomial::operator*(const Monomial& other) const {
  if (exps_.size() != other.exps_.size()) {
    throw std::invalid_argument("monomial dimension mismatch");
  }
  Monomial out = *this;
  for (std::size_t i = 0; i < exps_.size(); ++i) out.exps_[i] += other.exps_[i];
  out.degree_ = degree_ + other.degree_;
  return out;
}

Monomial Monomial::without_time() const {
  Monomial out = *this;
  if (!out.exps_.empty()) {
    out.degree_ -= out.exps_[0];
    out.exps_[0] = 0;
  }
  return out;
}

std::strong_ordering Monomial::operator<=>(const Monomial& other) const {
  if (auto c = degree_ <=> other.degree_; c != 0) return c;
  // Larger leading exponents sort first within one degree.
  return other.exps_ <=> exps_;
}

std::string Monomial::to_string(std::span<const std::string> names) const {
  std::string out;
  auto append = [&out](const std::string& name, int e) {
    if (e == 0) return;
    if (!out.empty()) out += '*';
    out += name;
    if (e > 1) out += '^' + std::to_string(e);
  };
  append("t", t_exp());
  for (std::size_t i = 0; i < n_x(); ++i) {
    append(i < names.size() ? names[i] : "x" + std::to_string(i + 1),
           x_exp(i));
  }
  return out.empty() ? "1" : out;
}

std::size_t MonomialHash::operator()(const Monomial& m) const noexcept {
  std::size_t h = 0xcbf29ce484222325ull;
  for (int e : m.raw()) {
    h ^= static_cast<std::size_t>(e) + 0x9e3779b97f4a7c15ull + (h << 6) +
         (h >> 2);
  }
  return h;
}

// ---------------------------------------------------------------------------

Polynomial::Polynomial(std::size_t n_x, double constant) : n_x_(n_x) {
  add_term(Monomial(n_x), constant);
}

Polynomial::Polynomial(const Monomial& m, double coefficient)
    : n_x_(m.n_x()) {
  add_term(m, coefficient);
}

Polynomial Polynomial::state(std::size_t n_x, std::size_t i) {
  return Polynomial(Monomial::state(n_x, i));
}

Polynomial Polynomial::time(std::size_t n_x) {
  return Polynomial(Monomial::time(n_x));
}

int Polynomial::degree() const {
  int d = -1;
  for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
  return d;
}

int Polynomial::t_degree() const {
  int d = -1;
  for (const auto& [m, c] : terms_) d = std::max(d, m.t_exp());
  return d;
}

double Polynomial::coefficient(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? 0.0 : it->second;
}

bool Polynomial::is_constant() const {
  return terms_.empty() ||
         (terms_.size() == 1 && terms_.begin()->first.degree() == 0);
}

double Polynomial::constant_term() const {
  return coefficient(Monomial(n_x_));
}

void Polynomial::add_term(const Monomial& m, double coefficient) {
  if (m.n_x() != n_x_) {
    throw std::invalid_argument("monomial has " + std::to_string(m.n_x()) +
                                " states, polynomial has " +
                                std::to_string(n_x_));
  }
  if (coefficient == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(m, coefficient);
  if (!inserted) {
    it->second += coefficient;
    if (it->second == 0.0) terms_.erase(it);
  }
}

void Polynomial::check_compatible(const Polynomial& other) const {
  if (n_x_ != other.n_x_) {
    throw std::invalid_argument("polynomial dimension mismatch: " +
                                std::to_string(n_x_) + " vs " +
                                std::to_string(other.n_x_));
  }
}

Polynomial& Polynomial::operator+=(const Polynomial& other) {
  check_compatible(other);
  for (const auto& [m, c] : other.terms_) add_term(m, c);
  return *this;
}

Polynomial Polynomial::operator+(const Polynomial& other) const {
  Polynomial out = *this;
  out += other;
  return out;
}

Polynomial Polynomial::operator-(const Polynomial& other) const {
  return *this + (other * -1.0);
}

Polynomial Polynomial::operator*(const Polynomial& other) const {
  check_compatible(other);
  Polynomial out(n_x_);
  for (const auto& [ma, ca] : terms_) {
    for (const auto& [mb, cb] : other.terms_) out.add_term(ma * mb, ca * cb);
  }
  return out;
}

Polynomial Polynomial::operator*(double s) const {
  Polynomial out(n_x_);
  if (s == 0.0) return out;
  for (const auto& [m, c] : terms_) out.add_term(m, c * s);
  return out;
}

Polynomial Polynomial::pow(int power) const {
  if (power < 0) throw std::invalid_argument("negative polynomial power");
  Polynomial out(n_x_, 1.0);
  for (int i = 0; i < power; ++i) out = out * *this;
  return out;
}

Polynomial Polynomial::derivative(std::size_t var) const {
  if (var > n_x_) throw std::invalid_argument("derivative variable out of range");
  Polynomial out(n_x_);
  for (const auto& [m, c] : terms_) {
    int e = m.raw()[var];
    if (e == 0) continue;
    std::vector<int> exps = m.raw();
    exps[var] -= 1;
    out.add_term(Monomial(exps[0], {exps.begin() + 1, exps.end()}), c * e);
  }
  return out;
}

Polynomial Polynomial::at_time(double t) const {
  Polynomial out(n_x_);
  for (const auto& [m, c] : terms_) {
    out.add_term(m.without_time(), c * std::pow(t, m.t_exp()));
  }
  return out;
}

Polynomial Polynomial::fix_state(std::size_t i, double value) const {
  if (i >= n_x_) throw std::invalid_argument("state index out of range");
  Polynomial out(n_x_);
  for (const auto& [m, c] : terms_) {
    std::vector<int> exps = m.raw();
    int e = exps[i + 1];
    exps[i + 1] = 0;
    out.add_term(Monomial(exps[0], {exps.begin() + 1, exps.end()}),
                 c * std::pow(value, e));
  }
  return out;
}

double Polynomial::eval(double t, std::span<const double> x) const {
  if (x.size() != n_x_) {
    throw std::invalid_argument("evaluation point has dimension " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(n_x_));
  }
  double sum = 0.0;
  for (const auto& [m, c] : terms_) {
    double v = c * std::pow(t, m.t_exp());
    for (std::size_t i = 0; i < n_x_; ++i) v *= std::pow(x[i], m.x_exp(i));
    sum += v;
  }
  return sum;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string Polynomial::to_string(std::span<const std::string> names) const {
  if (terms_.empty()) return "0";
  std::string out;
  bool first = true;
  for (const auto& [m, c] : terms_) {
    double mag = std::abs(c);
    if (first) {
      if (c < 0) out += '-';
    } else {
      out += c < 0 ? " - " : " + ";
    }
    first = false;
    if (m.degree() == 0) {
      out += format_double(mag);
    } else if (mag == 1.0) {
      out += m.to_string(names);
    } else {
      out += format_double(mag) + '*' + m.to_string(names);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Polynomial lie_derivative(const Polynomial& v, std::span<const Polynomial> f) {
  if (f.size() != v.n_x()) {
    throw std::invalid_argument("vector field has " + std::to_string(f.size()) +
                                " components, expected " +
                                std::to_string(v.n_x()));
  }
  Polynomial out = v.derivative(0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i].n_x() != v.n_x()) {
      throw std::invalid_argument("vector field component dimension mismatch");
    }
    Polynomial dv = v.derivative(i + 1);
    if (!dv.is_zero()) out += dv * f[i];
  }
  return out;
}

std::size_t monomial_count(std::size_t n_vars, int max_deg) {
  if (max_deg < 0) return 0;
  // C(n + d, d) computed incrementally to stay exact.
  std::size_t c = 1;
  for (std::size_t i = 1; i <= n_vars; ++i) {
    c = c * (static_cast<std::size_t>(max_deg) + i) / i;
  }
  return c;
}

namespace {

// Emit all exponent vectors of length `len` summing to `total` in
// lexicographically decreasing order.
void compositions(std::size_t len, int total, std::vector<int>& cur,
                  std::vector<std::vector<int>>& out) {
  if (cur.size() + 1 == len) {
    cur.push_back(total);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int e = total; e >= 0; --e) {
    cur.push_back(e);
    compositions(len, total - e, cur, out);
    cur.pop_back();
  }
}

}  // namespace

std::vector<Monomial> monomial_basis(std::size_t n_x, int max_deg,
                                     bool include_t) {
  std::vector<Monomial> out;
  if (max_deg < 0) return out;
  const std::size_t n_vars = n_x + (include_t ? 1 : 0);
  out.reserve(monomial_count(n_vars, max_deg));
  for (int d = 0; d <= max_deg; ++d) {
    if (n_vars == 0) {
      if (d == 0) out.emplace_back(n_x);
      continue;
    }
    std::vector<std::vector<int>> exps;
    std::vector<int> cur;
    compositions(n_vars, d, cur, exps);
    for (auto& e : exps) {
      if (include_t) {
        out.emplace_back(e[0], std::vector<int>(e.begin() + 1, e.end()));
      } else {
        out.emplace_back(0, std::move(e));
      }
    }
  }
  return out;
}

MonomialOrdering::MonomialOrdering(std::size_t n_x, int max_deg,
                                   bool include_t)
    : n_x_(n_x),
      max_deg_(max_deg),
      include_t_(include_t),
      basis_(monomial_basis(n_x, max_deg, include_t)) {
  for (std::size_t i = 0; i < basis_.size(); ++i) index_.emplace(basis_[i], i);
}

std::optional<std::size_t> MonomialOrdering::find(const Monomial& m) const {
  auto it = index_.find(m);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t MonomialOrdering::index(const Monomial& m) const {
  auto it = index_.find(m);
  if (it == index_.end()) {
    throw std::out_of_range("monomial of degree " + std::to_string(m.degree()) +
                            " not in ordering of degree " +
                            std::to_string(max_deg_));
  }
  return it->second;
}

}  // namespace occmom
