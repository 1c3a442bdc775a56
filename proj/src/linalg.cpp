#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ranopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double inf_norm(const Matrix& m) {
  double best = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) row += std::abs(m(i, j));
    best = std::max(best, row);
  }
  return best;
}

// Spectral radius of a non-negative matrix by repeated squaring with norm
// rescaling: rho(A) = prod_k n_k^(2^-k) where n_k = |A_k| and
// A_{k+1} = (A_k/n_k)^2. After 64 squarings the truncation error of the
// final factor rho(A_64/n_64)^(2^-64) is below double precision, so the
// result is exact to floating error for every non-negative matrix,
// reducible or defective included.
double radius_by_squaring(Matrix m) {
  double log_rho = 0.0;
  double weight = 1.0;
  for (int k = 0; k <= 64; ++k) {
    const double n = inf_norm(m);
    if (n == 0.0) return 0.0;
    log_rho += weight * std::log(n);
    weight *= 0.5;
    for (double& v : m.a) v /= n;
    m = mat_mul(m, m);
  }
  return std::exp(log_rho);
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix mat_mul(const Matrix& x, const Matrix& y) {
  require(x.cols == y.rows, "mat_mul: inner dimensions disagree");
  Matrix out(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) {
      const double xv = x(i, k);
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < y.cols; ++j) out(i, j) += xv * y(k, j);
    }
  return out;
}

double spectral_radius(const Matrix& m, double tol) {
  require(m.square(), "spectral_radius: matrix must be square and non-empty");
  require(tol > 0.0, "spectral_radius: tol must be positive");
  for (double v : m.a)
    require(std::isfinite(v) && v >= 0.0,
            "spectral_radius: entries must be finite and non-negative");
  const std::size_t n = m.rows;
  if (n == 1) return m(0, 0);

  // Power iteration on the shifted matrix m + I. The shift makes irreducible
  // matrices primitive (kills period-2 oscillation) and moves the radius by
  // exactly +1 for non-negative input. A strictly positive iterate gives
  // two-sided Collatz-Wielandt bounds, so the stop test is rigorous.
  std::vector<double> x(n, 1.0), ax(n);
  for (int it = 0; it < 10000; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x[i];  // the +I shift
      for (std::size_t j = 0; j < n; ++j) s += m(i, j) * x[j];
      ax[i] = s;
    }
    double lo = kInf, hi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ax[i] / x[i];
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    if (hi - lo <= tol * std::max(1.0, hi)) return 0.5 * (lo + hi) - 1.0;
    const double scale = hi > 0.0 ? 1.0 / *std::max_element(ax.begin(), ax.end())
                                  : 1.0;
    for (std::size_t i = 0; i < n; ++i) x[i] = ax[i] * scale;
  }
  // Reducible/defective inputs can leave the bounds open; fall back to the
  // dense squaring evaluation, which terminates unconditionally.
  return radius_by_squaring(m);
}

std::vector<double> solve_linear(const Matrix& a, const std::vector<double>& b) {
  require(a.square(), "solve_linear: matrix must be square and non-empty");
  require(a.rows == b.size(), "solve_linear: dimension mismatch");
  for (double v : a.a) require(std::isfinite(v), "solve_linear: non-finite entry");
  const std::size_t n = a.rows;

  // Scaled partial pivoting; keep the factorization for one refinement pass.
  Matrix lu = a;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> scale(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s = std::max(s, std::abs(a(i, j)));
    if (s == 0.0) throw singular_matrix_error("solve_linear: zero row");
    scale[i] = s;
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t pivot = c;
    double best = -1.0;
    for (std::size_t r = c; r < n; ++r) {
      const double cand = std::abs(lu(perm[r], c)) / scale[perm[r]];
      if (cand > best) {
        best = cand;
        pivot = r;
      }
    }
    std::swap(perm[c], perm[pivot]);
    const std::size_t pr = perm[c];
    if (std::abs(lu(pr, c)) < 1e-12 * scale[pr])
      throw singular_matrix_error("solve_linear: pivot below threshold");
    for (std::size_t r = c + 1; r < n; ++r) {
      const std::size_t rr = perm[r];
      const double f = lu(rr, c) / lu(pr, c);
      lu(rr, c) = f;
      for (std::size_t j = c + 1; j < n; ++j) lu(rr, j) -= f * lu(pr, j);
    }
  }
  auto lu_solve = [&](const std::vector<double>& rhs) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = rhs[perm[i]];
      for (std::size_t j = 0; j < i; ++j) s -= lu(perm[i], j) * y[j];
      y[i] = s;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t j = ii + 1; j < n; ++j) s -= lu(perm[ii], j) * y[j];
      y[ii] = s / lu(perm[ii], ii);
    }
    return y;
  };

  std::vector<double> x = lu_solve(b);
  // One round of iterative refinement keeps the residual well inside the
  // 1e-9*(1+|b|) budget on the coupling systems this library builds.
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t j = 0; j < n; ++j) s -= a(i, j) * x[j];
    resid[i] = s;
  }
  const std::vector<double> d = lu_solve(resid);
  for (std::size_t i = 0; i < n; ++i) x[i] += d[i];
  return x;
}

namespace {

// Shortest-augmenting-path assignment with potentials. rows <= cols. Returns
// the matched task per agent; total cost is the sum over matches.
std::vector<std::size_t> sap_assign(const Matrix& cost) {
  const std::size_t n = cost.rows, m = cost.cols;
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> p(m + 1, n);  // p[j]: agent on task j (1-based), n = free
  std::vector<std::size_t> way(m + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != n);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> task_of_agent(n);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != n) task_of_agent[p[j]] = j - 1;
  return task_of_agent;
}

double assignment_cost(const Matrix& cost, const std::vector<std::size_t>& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += cost(i, t[i]);
  return s;
}

}  // namespace

AssignmentResult hungarian_min_assign(const AssignmentProblem& prob) {
  const Matrix& cost = prob.cost;
  require(cost.rows > 0 && cost.cols > 0, "hungarian: empty cost table");
  require(cost.rows <= cost.cols, "hungarian: more agents than tasks");
  for (double v : cost.a)
    require(std::isfinite(v) && v >= 0.0,
            "hungarian: weights must be finite and non-negative");

  const double optimum = assignment_cost(cost, sap_assign(cost));
  const double tie_tol = 1e-9 * (1.0 + std::abs(optimum));

  // Lexicographic refinement: fix agents in order to the lowest-index task
  // that still lets the remainder reach the optimal total. Exact for the
  // structural ties the allocators create (duplicated agent rows).
  const std::size_t n = cost.rows, m = cost.cols;
  std::vector<std::size_t> fixed(n, m);
  std::vector<bool> taken(m, false);
  double remaining_target = optimum;
  std::vector<std::size_t> agents_left(n), tasks_left;
  std::iota(agents_left.begin(), agents_left.end(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t rows_left = n - i - 1;
    for (std::size_t t = 0; t < m; ++t) {
      if (taken[t]) continue;
      double reduced_cost = 0.0;
      if (rows_left > 0) {
        tasks_left.clear();
        for (std::size_t j = 0; j < m; ++j)
          if (!taken[j] && j != t) tasks_left.push_back(j);
        Matrix sub(rows_left, tasks_left.size());
        for (std::size_t r = 0; r < rows_left; ++r)
          for (std::size_t cidx = 0; cidx < tasks_left.size(); ++cidx)
            sub(r, cidx) = cost(i + 1 + r, tasks_left[cidx]);
        reduced_cost = assignment_cost(sub, sap_assign(sub));
      }
      if (cost(i, t) + reduced_cost <= remaining_target + tie_tol) {
        fixed[i] = t;
        taken[t] = true;
        remaining_target -= cost(i, t);
        break;
      }
    }
  }
  return {fixed, assignment_cost(cost, fixed)};
}

double gaussian_q(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double inverse_q(double p) {
  require(p > 0.0 && p < 0.5, "inverse_q: probability must lie in (0, 0.5)");
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (gaussian_q(mid) > p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> project_capped_simplex(const std::vector<double>& x, double cap) {
  require(cap >= 0.0, "project_capped_simplex: negative cap");
  std::vector<double> y(x.size());
  double clamped_sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::max(x[i], 0.0);
    clamped_sum += y[i];
  }
  if (clamped_sum <= cap) return y;  // sum constraint slack: clamping suffices

  // Active sum: project onto {y >= 0, sum y = cap} via the sorted threshold
  // rule y_i = max(x_i - theta, 0).
  std::vector<double> u = x;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cum += u[k];
    const double cand = (cum - cap) / double(k + 1);
    if (k + 1 == u.size() || u[k + 1] <= cand) {
      theta = cand;
      break;
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::max(x[i] - theta, 0.0);
  return y;
}

double bisect_root(const std::function<double(double)>& f, double lo, double hi,
                   double tol) {
  require(lo <= hi, "bisect_root: empty interval");
  require(tol > 0.0, "bisect_root: tol must be positive");
  double flo = f(lo), fhi = f(hi);
  if (std::abs(flo) <= tol) return lo;
  if (std::abs(fhi) <= tol) return hi;
  require(flo * fhi <= 0.0, "bisect_root: no sign change on interval");
  for (int i = 0; i < 200 && hi - lo > tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (std::abs(fm) <= tol) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace ranopt
