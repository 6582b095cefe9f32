#include "macstab/simplex.hpp"

#include <cmath>
#include <limits>

#include "macstab/errors.hpp"

namespace macstab::simplex {

Solution maximize(const Problem& problem, double tol, std::size_t max_pivots) {
  const std::size_t n = problem.num_vars;
  const std::size_t m = problem.rows.size();
  if (problem.objective.size() != n || problem.rhs.size() != m)
    throw DomainError("simplex: inconsistent problem dimensions");

  // Tableau columns: n structural, m slack, 1 rhs. Row m is the cost row
  // holding reduced costs c_j - z_j.
  const std::size_t width = n + m + 1;
  std::vector<double> t((m + 1) * width, 0.0);
  auto at = [&](std::size_t r, std::size_t c) -> double& {
    return t[r * width + c];
  };

  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) {
    if (problem.rows[r].size() != n)
      throw DomainError("simplex: row length mismatch");
    if (!(problem.rhs[r] >= 0.0))
      throw DomainError("simplex: right-hand side must be non-negative");
    for (std::size_t c = 0; c < n; ++c) at(r, c) = problem.rows[r][c];
    at(r, n + r) = 1.0;
    at(r, width - 1) = problem.rhs[r];
    basis[r] = n + r;
  }
  for (std::size_t c = 0; c < n; ++c) at(m, c) = problem.objective[c];

  Solution sol;
  for (;;) {
    std::size_t enter = width;
    for (std::size_t c = 0; c + 1 < width; ++c) {
      if (at(m, c) > tol) {
        enter = c;
        break;
      }
    }
    if (enter == width) break;

    std::size_t leave = m;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < m; ++r) {
      const double a = at(r, enter);
      if (a <= tol) continue;
      const double ratio = at(r, width - 1) / a;
      if (ratio < best - tol ||
          (std::abs(ratio - best) <= tol && basis[r] < basis[leave])) {
        best = ratio;
        leave = r;
      }
    }
    if (leave == m) throw SolverError("simplex: objective is unbounded");
    if (++sol.pivots > max_pivots)
      throw SolverError("simplex: pivot limit reached without convergence");

    const double pivot = at(leave, enter);
    for (std::size_t c = 0; c < width; ++c) at(leave, c) /= pivot;
    for (std::size_t r = 0; r <= m; ++r) {
      if (r == leave) continue;
      const double f = at(r, enter);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < width; ++c) at(r, c) -= f * at(leave, c);
      at(r, enter) = 0.0;
    }
    basis[leave] = enter;
  }

  sol.x.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    if (basis[r] < n) sol.x[basis[r]] = std::max(0.0, at(r, width - 1));
  sol.value = 0.0;
  for (std::size_t c = 0; c < n; ++c) sol.value += problem.objective[c] * sol.x[c];
  return sol;
}

}  // namespace macstab::simplex
