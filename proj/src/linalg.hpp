// Dense numerical kernels shared by the allocation engines: spectral radius,
// linear solves, min-cost assignment, the inverse Gaussian tail, Euclidean
// projection onto a capped simplex, and scalar root bisection.
//
// Everything here is pure and reentrant; no shared mutable state.
#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace ranopt {

// Raised by solve_linear when elimination meets a pivot below threshold.
struct singular_matrix_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Small sizes only (interference coupling
// matrices, assignment tables), so no effort is spent on blocking or sparsity.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;  // rows*cols entries, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), a(r * c, fill) {}

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  bool square() const { return rows == cols && rows > 0; }
};

Matrix mat_mul(const Matrix& x, const Matrix& y);

// Largest eigenvalue modulus of a square non-negative matrix, within tol.
// Power iteration on the shifted matrix (m + I) with a cap of 10,000 rounds;
// if that fails to settle (reducible/degenerate inputs) the value is recovered
// from repeated squaring with norm rescaling, which is exact for non-negative
// matrices up to floating error. Throws std::invalid_argument on non-square,
// negative, or non-finite input.
double spectral_radius(const Matrix& m, double tol = 1e-10);

// Solves a*x = b by Gaussian elimination with partial pivoting plus one round
// of iterative refinement. A pivot below 1e-12 times its row scale raises
// singular_matrix_error. Residual satisfies |a*x-b|_inf <= 1e-9*(1+|b|_inf)
// for reasonably conditioned systems.
std::vector<double> solve_linear(const Matrix& a, const std::vector<double>& b);

// Min-cost assignment. Cost table is agents x tasks with agents <= tasks and
// finite non-negative weights.
struct AssignmentProblem {
  Matrix cost;
};
struct AssignmentResult {
  std::vector<std::size_t> task_of_agent;  // one distinct task per agent
  double total_cost = 0.0;
};

// Globally minimal assignment; among cost-equal optima returns the
// lexicographically smallest task vector (agent 0's task first). Throws
// std::invalid_argument when agents > tasks or weights are invalid.
AssignmentResult hungarian_min_assign(const AssignmentProblem& p);

// Gaussian tail Q(x) = P(N(0,1) > x).
double gaussian_q(double x);

// Inverse of the Gaussian tail on (0, 0.5): returns x >= 0 with Q(x) = p,
// accurate to 1e-9 or better. Throws std::invalid_argument outside (0, 0.5).
double inverse_q(double p);

// Euclidean projection of x onto {y : y >= 0, sum(y) <= cap}. cap >= 0.
std::vector<double> project_capped_simplex(const std::vector<double>& x, double cap);

// Root of a monotone function on [lo, hi] by bisection; stops when |f| <= tol
// or the interval width <= tol. Requires a sign change (f(lo)*f(hi) <= 0).
double bisect_root(const std::function<double(double)>& f, double lo, double hi,
                   double tol);

}  // namespace ranopt
