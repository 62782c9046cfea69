#pragma once

// Sparse multivariate polynomials in time t and states x_1..x_n.

#include <compare>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace occmom {

/// A monomial t^a x_1^b_1 ... x_n^b_n. Exponents are stored with the time
/// exponent first; the total degree is cached.
class Monomial {
 public:
  Monomial() = default;

  /// The constant monomial over @p n_x states.
  explicit Monomial(std::size_t n_x);
  Monomial(int t_exp, std::vector<int> x_exps);

  static Monomial state(std::size_t n_x, std::size_t i, int power = 1);
  static Monomial time(std::size_t n_x, int power = 1);

  int t_exp() const { return exps_.empty() ? 0 : exps_[0]; }
  std::span<const int> x_exps() const {
    return exps_.empty() ? std::span<const int>{}
                         : std::span<const int>(exps_).subspan(1);
  }
  int x_exp(std::size_t i) const { return exps_.at(i + 1); }
  int degree() const { return degree_; }
  /// Degree in the state variables only.
  int x_degree() const { return degree_ - t_exp(); }
  std::size_t n_x() const { return exps_.empty() ? 0 : exps_.size() - 1; }

  Monomial operator*(const Monomial& other) const;

  /// Same exponents with the time exponent dropped to zero.
  Monomial without_time() const;

  bool operator==(const Monomial& other) const { return exps_ == other.exps_; }

  /// Graded-lexicographic order over (t, x_1, ..., x_n): lower degree first,
  /// then larger leading exponents first, so x1 precedes x2 and t precedes x1.
  std::strong_ordering operator<=>(const Monomial& other) const;

  /// Human-readable form using the given state names ("1" for the constant).
  std::string to_string(std::span<const std::string> names) const;

  const std::vector<int>& raw() const { return exps_; }

 private:
  std::vector<int> exps_;  // [t, x_1, ..., x_n]
  int degree_ = 0;
};

struct MonomialHash {
  std::size_t operator()(const Monomial& m) const noexcept;
};

/// Polynomial with double coefficients in canonical form: no stored
/// coefficient is exactly zero and all monomials share one state dimension.
class Polynomial {
 public:
  using TermMap = std::map<Monomial, double>;

  Polynomial() = default;
  explicit Polynomial(std::size_t n_x) : n_x_(n_x) {}
  Polynomial(std::size_t n_x, double constant);
  Polynomial(const Monomial& m, double coefficient = 1.0);

  static Polynomial state(std::size_t n_x, std::size_t i);
  static Polynomial time(std::size_t n_x);

  std::size_t n_x() const { return n_x_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  /// Total degree; the zero polynomial has degree -1.
  int degree() const;
  /// Degree counting only the time variable.
  int t_degree() const;
  double coefficient(const Monomial& m) const;
  /// True when the polynomial is a constant (including zero).
  bool is_constant() const;
  double constant_term() const;

  void add_term(const Monomial& m, double coefficient);

  Polynomial operator+(const Polynomial& other) const;
  Polynomial operator-(const Polynomial& other) const;
  Polynomial operator*(const Polynomial& other) const;
  Polynomial operator*(double s) const;
  Polynomial operator-() const { return *this * -1.0; }
  Polynomial& operator+=(const Polynomial& other);
  bool operator==(const Polynomial& other) const = default;

  Polynomial pow(int power) const;

  /// Partial derivative with respect to time (var = 0) or state x_i
  /// (var = i + 1).
  Polynomial derivative(std::size_t var) const;

  /// Substitute t := value.
  Polynomial at_time(double t) const;
  /// Substitute x_i := value.
  Polynomial fix_state(std::size_t i, double value) const;

  double eval(double t, std::span<const double> x) const;

  /// Deterministic graded-lex printer; parse_polynomial(print()) reproduces
  /// the polynomial exactly.
  std::string to_string(std::span<const std::string> names) const;

 private:
  void check_compatible(const Polynomial& other) const;

  std::size_t n_x_ = 0;
  TermMap terms_;
};

inline Polynomial operator*(double s, const Polynomial& p) { return p * s; }

/// dv/dt + sum_i dv/dx_i * f_i, the generator of the flow of x' = f(t, x).
Polynomial lie_derivative(const Polynomial& v, std::span<const Polynomial> f);

/// All monomials of total degree <= max_deg in graded-lex order. With
/// include_t the time variable is part of the degree budget; otherwise every
/// monomial has t-exponent zero.
std::vector<Monomial> monomial_basis(std::size_t n_x, int max_deg,
                                     bool include_t);

/// Number of monomials in n variables of degree <= d: C(n + d, d).
std::size_t monomial_count(std::size_t n_vars, int max_deg);

/// Bijective index map between monomials of degree <= cap and 0..size-1,
/// following graded-lex order. Index 0 is the constant monomial.
class MonomialOrdering {
 public:
  MonomialOrdering() = default;
  MonomialOrdering(std::size_t n_x, int max_deg, bool include_t);

  std::size_t size() const { return basis_.size(); }
  int max_degree() const { return max_deg_; }
  bool includes_time() const { return include_t_; }
  std::size_t n_x() const { return n_x_; }
  const std::vector<Monomial>& basis() const { return basis_; }
  const Monomial& operator[](std::size_t i) const { return basis_[i]; }
  std::optional<std::size_t> find(const Monomial& m) const;
  /// Throws std::out_of_range when @p m is not part of the ordering.
  std::size_t index(const Monomial& m) const;

 private:
  std::size_t n_x_ = 0;
  int max_deg_ = 0;
  bool include_t_ = false;
  std::vector<Monomial> basis_;
  std::map<Monomial, std::size_t> index_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t position);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Parse an expression over +, -, *, ^ (non-negative integer powers),
/// parentheses, decimal constants, the time variable "t" and the given state
/// names. Unary minus is accepted only at the start of an expression or
/// parenthesized group.
Polynomial parse_polynomial(std::string_view text,
                            std::span<const std::string> state_names);

}  // namespace occmom
