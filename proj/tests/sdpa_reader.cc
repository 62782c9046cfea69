#include "sdpa_reader.h"

#include <sstream>
#include <stdexcept>
#include <string>

namespace occmom::testing {
namespace {

// Next line that is neither empty nor a comment ('"' or '*').
bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto p = line.find_first_not_of(" \t\r");
    if (p == std::string::npos) continue;
    if (line[p] == '"' || line[p] == '*') continue;
    return true;
  }
  return false;
}

// SDPA allows ",", "(", ")", "{", "}" as separators.
std::string clean(std::string s) {
  for (char& ch : s) {
    if (ch == ',' || ch == '(' || ch == ')' || ch == '{' || ch == '}') ch = ' ';
  }
  return s;
}

}  // namespace

SdpaProblem read_sdpa(std::istream& in) {
  SdpaProblem p;
  std::string line;
  if (!next_line(in, line)) throw std::runtime_error("missing mDIM");
  p.m = std::stoul(line);
  if (!next_line(in, line)) throw std::runtime_error("missing nBLOCK");
  const std::size_t nblock = std::stoul(line);
  if (!next_line(in, line)) throw std::runtime_error("missing bLOCKsTRUCT");
  {
    std::istringstream s(clean(line));
    for (std::size_t b = 0; b < nblock; ++b) {
      long v = 0;
      if (!(s >> v)) throw std::runtime_error("short bLOCKsTRUCT");
      p.block_struct.push_back(v);
    }
  }
  // The cost vector may span several lines.
  while (p.c.size() < p.m) {
    if (!next_line(in, line)) throw std::runtime_error("short cost vector");
    std::istringstream s(clean(line));
    double v;
    while (p.c.size() < p.m && s >> v) p.c.push_back(v);
  }
  while (next_line(in, line)) {
    std::istringstream s(clean(line));
    std::size_t mat, blk, i, j;
    double v;
    if (!(s >> mat >> blk >> i >> j >> v)) throw std::runtime_error("bad entry: " + line);
    if (mat > p.m || blk == 0 || blk > nblock || i > j) throw std::runtime_error("entry out of range: " + line);
    const long size = p.block_struct[blk - 1];
    const std::size_t dim = static_cast<std::size_t>(size < 0 ? -size : size);
    if (i == 0 || j > dim || (size < 0 && i != j)) throw std::runtime_error("index out of block: " + line);
    p.entries[{mat, blk, i, j}] += v;
  }
  return p;
}

}  // namespace occmom::testing
