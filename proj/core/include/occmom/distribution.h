#pragma once

#include <variant>
#include <vector>

namespace occmom {

struct Dirac {
  double value = 0.0;
};

struct Uniform {
  double lower = 0.0;
  double upper = 1.0;
};

/// Beta(alpha, beta) law affinely mapped onto [lower, upper].
struct Beta {
  double alpha = 1.0;
  double beta = 1.0;
  double lower = 0.0;
  double upper = 1.0;
};

struct Discrete {
  std::vector<double> points;
  std::vector<double> weights;
};

using CoordinateLaw = std::variant<Dirac, Uniform, Beta, Discrete>;

struct CoordinateSpec {
  CoordinateLaw law;
  /// For Dirac laws: let the assembler pin every moment of this coordinate.
  bool pin = false;
};

/// Product law over all states; coordinates are independent.
struct InitialDistribution {
  std::vector<CoordinateSpec> coordinates;
};

}  // namespace occmom
