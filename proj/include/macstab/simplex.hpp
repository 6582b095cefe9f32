#pragma once

#include <cstddef>
#include <vector>

namespace macstab::simplex {

/// Dense row-major constraint matrix for `A x <= b`.
struct Problem {
  std::size_t num_vars = 0;
  std::vector<double> objective;        // maximize objective . x
  std::vector<std::vector<double>> rows;  // each of length num_vars
  std::vector<double> rhs;              // must be >= 0
};

struct Solution {
  double value = 0.0;
  std::vector<double> x;
  std::size_t pivots = 0;
};

/// Maximizes c.x subject to A x <= b, x >= 0, with b >= 0 so that the
/// slack basis is feasible. Bland's rule picks entering and leaving
/// variables, which rules out cycling on the degenerate vertices these
/// problems start from.
///
/// Throws SolverError on an unbounded objective or when the pivot limit is
/// reached, DomainError on malformed input.
Solution maximize(const Problem& problem, double tol = 1e-12,
                  std::size_t max_pivots = 100000);

}  // namespace macstab::simplex
