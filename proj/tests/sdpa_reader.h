#pragma once

// Minimal SDPA sparse-format (.dat-s) reader used to check the exporter.

#include <cstddef>
#include <istream>
#include <map>
#include <tuple>
#include <vector>

namespace occmom::testing {

struct SdpaProblem {
  std::size_t m = 0;
  /// Negative sizes are diagonal (LP) blocks.
  std::vector<long> block_struct;
  std::vector<double> c;
  /// (matno, block, i, j) -> value, all 1-based except matno (0 = F0).
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>, double> entries;
};

/// Throws std::runtime_error on malformed input.
SdpaProblem read_sdpa(std::istream& in);

}  // namespace occmom::testing
