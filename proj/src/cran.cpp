#include "cran.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>

namespace ranopt {

namespace {

constexpr double kQuantScale = std::numbers::sqrt3 * std::numbers::pi;
constexpr double kInfVal = std::numeric_limits<double>::infinity();
// Rates are kept this far inside capacity so the effort stays finite.
constexpr double kCapMargin = 1e-12;
// Pseudo-gap used by the width step when a width dips under the rate's
// capacity need; it prices such widths steeply instead of forbidding them,
// which lets the waterfill rebalance saturated PRBs.
constexpr double kSoftGap = 1e-9;
// Widths beyond this leave the quantization noise at denormal scale.
constexpr double kMaxBits = 400.0;

double quant_noise_raw(double bits, double received) {
  return kQuantScale * received * std::exp2(-(2.0 * bits + 1.0));
}

double capacity_raw(double d, double i, double bits) {
  return std::log2(1.0 + d / (i + quant_noise_raw(bits, d + i)));
}

// d(capacity)/d(bits). Single peak where the noise matches the geometric
// mean of received and interference power; strictly decreasing above it.
double capacity_slope(double d, double i, double bits) {
  const double y = d + i;
  const double q = quant_noise_raw(bits, y);
  return 2.0 * q * d / ((i + q) * (y + q));
}

double min_bits_real_raw(double d, double i) {
  return std::max(0.0,
                  0.5 * (std::log2(kQuantScale * std::sqrt((d + i) / i)) - 1.0));
}

// Width whose capacity equals the rate; infinite when even the analog
// capacity falls short.
double bits_for_rate_raw(double d, double i, double r) {
  const double need = d / (std::exp2(r) - 1.0) - i;
  if (!(need > 0.0)) return kInfVal;
  return std::max(0.0, 0.5 * (std::log2(kQuantScale * (d + i) / need) - 1.0));
}

double chi_raw(double a, double bcoef, double r, double t) {
  if (r <= 0.0) return 0.0;
  const double gap = t - r;
  if (gap <= 0.0) return kInfVal;
  return a * r * (bcoef - 2.0 * std::log2(gap));
}

// One PRB in the width waterfill. The weight is the PRB's current rate and
// the marginal prices the headroom log2(t(b) - rate).
struct FillItem {
  double weight = 0.0;
  double floor_b = 0.0;
  double d = 0.0, i = 0.0;
  double rate = 0.0;
};

double fill_marginal(const FillItem& it, double b) {
  if (it.weight <= 0.0) return 0.0;
  const double t = capacity_raw(it.d, it.i, b);
  const double gap = std::max(t - it.rate, t * kSoftGap);
  return it.weight * capacity_slope(it.d, it.i, b) / (gap * std::numbers::ln2);
}

// Smallest width at or above the floor where the marginal drops to mu. The
// floors sit at or above the slope peak, so the marginal is decreasing.
double fill_root(const FillItem& it, double mu) {
  if (fill_marginal(it, it.floor_b) <= mu) return it.floor_b;
  double len = 1.0;
  while (it.floor_b + len < kMaxBits && fill_marginal(it, it.floor_b + len) > mu)
    len *= 2.0;
  double lo = it.floor_b + (len > 1.0 ? len / 2.0 : 0.0);
  double hi = std::min(it.floor_b + len, kMaxBits);
  for (int n = 0; n < 48; ++n) {
    const double mid = 0.5 * (lo + hi);
    (fill_marginal(it, mid) > mu ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Spend the width budget exactly, equalizing marginals above the floors.
// Callers guarantee the floors fit inside the budget.
std::vector<double> waterfill_bits(const std::vector<FillItem>& items,
                                   double budget) {
  const std::size_t n = items.size();
  std::vector<double> bits(n, 0.0);
  if (n == 0) return bits;
  double fsum = 0.0, wsum = 0.0;
  for (const auto& it : items) {
    fsum += it.floor_b;
    wsum += it.weight;
  }
  const double spare = budget - fsum;
  if (spare <= 0.0 || wsum <= 0.0 || budget / static_cast<double>(n) >= kMaxBits) {
    for (std::size_t s = 0; s < n; ++s)
      bits[s] = items[s].floor_b + std::max(0.0, spare) / static_cast<double>(n);
    return bits;
  }
  if (n == 1) {
    bits[0] = budget;
    return bits;
  }
  if (n == 2) {
    // One unknown: the second width is whatever budget remains.
    double lo = items[0].floor_b, hi = budget - items[1].floor_b;
    auto imbalance = [&](double b0) {
      return fill_marginal(items[0], b0) - fill_marginal(items[1], budget - b0);
    };
    if (imbalance(lo) <= 0.0) {
      bits[0] = lo;
    } else if (imbalance(hi) >= 0.0) {
      bits[0] = hi;
    } else {
      for (int n2 = 0; n2 < 60; ++n2) {
        const double mid = 0.5 * (lo + hi);
        (imbalance(mid) > 0.0 ? lo : hi) = mid;
      }
      bits[0] = 0.5 * (lo + hi);
    }
    bits[1] = budget - bits[0];
    return bits;
  }
  // Bisect the common marginal level.
  double mu_hi = 0.0;
  for (const auto& it : items)
    mu_hi = std::max(mu_hi, fill_marginal(it, it.floor_b));
  double mu_lo = 0.0;
  auto spend = [&](double mu) {
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) sum += (bits[s] = fill_root(items[s], mu));
    return sum;
  };
  for (int n2 = 0; n2 < 60; ++n2) {
    const double mu = 0.5 * (mu_lo + mu_hi);
    (spend(mu) > budget ? mu_lo : mu_hi) = mu;
  }
  const double sum = spend(mu_hi);
  const double resid = (budget - sum) / static_cast<double>(n);
  for (auto& b : bits) b += resid;
  return bits;
}

// Per-PRB rate maximizing r - lambda * effort at a fixed width. The slope is
// strictly decreasing, so a sign check at the ends plus bisection covers it.
double rate_step(double a, double bcoef, double lambda, double d, double i,
                 double bits, double r_lo, double r_hi) {
  const double t = capacity_raw(d, i, bits);
  const double hi = std::min(r_hi, t * (1.0 - kCapMargin));
  if (hi <= r_lo) return hi;
  if (lambda <= 0.0) return hi;
  const double e = 1.0 - lambda * a * bcoef + 2.0 * lambda * a * std::log2(t);
  auto slope = [&](double r) {
    return e + 2.0 * lambda * a *
                   (std::log2(1.0 - r / t) - r / ((t - r) * std::numbers::ln2));
  };
  if (slope(hi) >= 0.0) return hi;
  if (slope(r_lo) <= 0.0) return r_lo;
  double lo = r_lo, up = hi;
  for (int n = 0; n < 60; ++n) {
    const double mid = 0.5 * (lo + up);
    (slope(mid) > 0.0 ? lo : up) = mid;
  }
  return 0.5 * (lo + up);
}

struct EnginePrb {
  std::size_t k = 0, s = 0;
  double d = 0.0, i = 0.0;
  double floor_b = 0.0;
  double fix_rate = -1.0;  // negative while free
  double fix_bits = -1.0;
  bool dead = false;  // analog capacity below the smallest format
};

struct EngineResult {
  Matrix rate, bits;
  double lambda = 0.0;
  double sum_rate = 0.0;
  std::size_t iterations = 0;
  bool feasible = false;
  bool floors_infeasible = false;
  std::vector<RllTraceRow> trace;
};

struct EngineInput {
  const CranScenario* sc = nullptr;
  const ComplexityModel* m = nullptr;
  std::size_t op = 0;
  double cloud_bips = 0.0;
  const std::vector<double>* fh_bps = nullptr;
  const Matrix* fix_rate = nullptr;  // negative entries free
  const Matrix* fix_bits = nullptr;
  const Matrix* disabled = nullptr;  // nonzero entries excluded
  double warm_lambda = 0.0;
  const Matrix* warm_rate = nullptr;
  const Matrix* warm_bits = nullptr;
  bool record_trace = true;
  double tol = 1e-4;
};

// Dual-price engine behind the relaxed solves: alternate the width waterfill
// and the closed-form rate step per cell at a fixed effort price, move the
// price by subgradient, then pin it down by bisection and return the best
// budget-respecting iterate seen anywhere along the way.
EngineResult run_rll_engine(const EngineInput& in) {
  const CranScenario& sc = *in.sc;
  const double a = in.m->a(), bcoef = in.m->b();
  const double rmin = sc.r_min(), rmax = sc.r_max();
  const double cloud = in.cloud_bips / sc.n_re;

  EngineResult out;
  out.rate = Matrix(sc.n_cells, sc.n_prbs);
  out.bits = Matrix(sc.n_cells, sc.n_prbs);

  std::vector<std::vector<EnginePrb>> cells;
  std::vector<std::size_t> cell_id;
  std::vector<double> cell_budget;
  for (std::size_t k = 0; k < sc.n_cells; ++k) {
    std::vector<EnginePrb> list;
    for (std::size_t s : sc.op_prbs[in.op][k]) {
      if (in.disabled && (*in.disabled)(k, s) != 0.0) continue;
      EnginePrb p;
      p.k = k;
      p.s = s;
      p.d = sc.direct(k, s);
      p.i = sc.interf(k, s);
      p.floor_b = static_cast<double>(min_quant_bits(p.d, p.i));
      p.dead = std::log2(1.0 + p.d / p.i) <= rmin * (1.0 + 1e-9);
      if (in.fix_rate && (*in.fix_rate)(k, s) >= 0.0)
        p.fix_rate = (*in.fix_rate)(k, s);
      if (in.fix_bits && (*in.fix_bits)(k, s) >= 0.0)
        p.fix_bits = (*in.fix_bits)(k, s);
      list.push_back(p);
    }
    if (list.empty()) continue;
    const double budget = (*in.fh_bps)[k] / (2.0 * sc.n_re);
    double need = 0.0;
    for (const auto& p : list)
      need += p.fix_bits >= 0.0 ? p.fix_bits : p.floor_b;
    if (need > budget * (1.0 + 1e-12) + 1e-15) {
      out.floors_infeasible = true;
      return out;
    }
    cells.push_back(std::move(list));
    cell_id.push_back(k);
    cell_budget.push_back(budget);
  }

  for (const auto& list : cells)
    for (const auto& p : list) {
      const double b0 = p.fix_bits >= 0.0 ? p.fix_bits
                        : in.warm_bits
                            ? std::max((*in.warm_bits)(p.k, p.s), p.floor_b)
                            : p.floor_b;
      double r0 = p.fix_rate >= 0.0 ? p.fix_rate
                  : p.dead          ? 0.0
                  : in.warm_rate    ? (*in.warm_rate)(p.k, p.s)
                                    : rmin;
      if (p.fix_rate < 0.0 && !p.dead) {
        const double cap = capacity_raw(p.d, p.i, b0) * (1.0 - kCapMargin);
        r0 = std::clamp(r0, 0.0, std::max(0.0, cap));
      }
      out.bits(p.k, p.s) = b0;
      out.rate(p.k, p.s) = r0;
    }

  auto measure = [&](double& rsum, double& csum) {
    rsum = 0.0;
    csum = 0.0;
    for (const auto& list : cells)
      for (const auto& p : list) {
        const double r = out.rate(p.k, p.s);
        if (r <= 0.0) continue;
        rsum += r;
        csum += chi_raw(a, bcoef, r,
                        capacity_raw(p.d, p.i, out.bits(p.k, p.s)));
      }
  };
  auto phi_at = [&](double lambda) {
    double rsum, csum;
    measure(rsum, csum);
    if (lambda <= 0.0) return rsum;
    return rsum - lambda * (csum - cloud);
  };

  auto update_cell = [&](std::size_t c, double lambda) {
    auto& list = cells[c];
    std::vector<std::pair<double, double>> back(list.size());
    for (std::size_t idx = 0; idx < list.size(); ++idx)
      back[idx] = {out.rate(list[idx].k, list[idx].s),
                   out.bits(list[idx].k, list[idx].s)};
    const double phi0 = phi_at(lambda);

    std::vector<FillItem> items;
    std::vector<std::size_t> free_idx;
    double budget = cell_budget[c];
    for (std::size_t idx = 0; idx < list.size(); ++idx) {
      const auto& p = list[idx];
      if (p.fix_bits >= 0.0) {
        budget -= p.fix_bits;
        continue;
      }
      FillItem it;
      it.weight = out.rate(p.k, p.s);
      it.floor_b = p.floor_b;
      it.d = p.d;
      it.i = p.i;
      it.rate = out.rate(p.k, p.s);
      items.push_back(it);
      free_idx.push_back(idx);
    }
    if (!items.empty()) {
      const auto bits = waterfill_bits(items, budget);
      for (std::size_t j = 0; j < free_idx.size(); ++j)
        out.bits(list[free_idx[j]].k, list[free_idx[j]].s) = bits[j];
    }
    for (const auto& p : list) {
      if (p.fix_rate >= 0.0 || p.dead) continue;
      out.rate(p.k, p.s) = rate_step(a, bcoef, lambda, p.d, p.i,
                                     out.bits(p.k, p.s), rmin, rmax);
    }
    double phi1 = phi_at(lambda);
    if (!(phi1 >= phi0 - 1e-12 * (1.0 + std::fabs(phi0)))) {
      for (std::size_t idx = 0; idx < list.size(); ++idx) {
        out.rate(list[idx].k, list[idx].s) = back[idx].first;
        out.bits(list[idx].k, list[idx].s) = back[idx].second;
      }
      phi1 = phi0;
    }
    return phi1;
  };

  struct BestState {
    bool has = false;
    Matrix rate, bits;
    double lambda = 0.0;
    double sum = -1.0;
  } best;
  const double feas_tol = 1e-9 * std::max(1.0, cloud);
  auto consider = [&](double lambda) {
    double rsum, csum;
    measure(rsum, csum);
    if (csum <= cloud + feas_tol && rsum > best.sum) {
      best.has = true;
      best.rate = out.rate;
      best.bits = out.bits;
      best.lambda = lambda;
      best.sum = rsum;
    }
    return csum - cloud;
  };

  const double stable_tol = in.tol * 1e-2;
  double lambda = std::max(0.0, in.warm_lambda);
  double state_lambda = lambda;
  double delta0 = 0.0;
  double g = -cloud;
  double prev_phi = -kInfVal;
  bool seen_over = false, seen_under = false;
  std::size_t outer = 0;
  for (outer = 1; outer <= 200; ++outer) {
    double phi_now = 0.0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      phi_now = update_cell(c, lambda);
      if (in.record_trace) out.trace.push_back({outer, cell_id[c], phi_now});
    }
    state_lambda = lambda;
    g = consider(lambda);
    if (outer == 1) delta0 = 1.0 / std::max(1.0, std::fabs(g));
    seen_over = seen_over || g > feas_tol;
    seen_under = seen_under || g <= feas_tol;
    // Once the violation has changed sign the optimal price is bracketed and
    // the bisection polish pins it far faster than the diminishing steps.
    if (seen_over && seen_under) break;
    const double next =
        std::max(0.0, lambda + delta0 / std::sqrt(static_cast<double>(outer)) * g);
    const bool lam_stable = std::fabs(next - lambda) <= stable_tol * std::max(1.0, lambda);
    const bool phi_stable =
        std::fabs(phi_now - prev_phi) <= stable_tol * (1.0 + std::fabs(phi_now));
    prev_phi = phi_now;
    lambda = next;
    if (lam_stable && phi_stable) break;
  }
  out.iterations = std::min<std::size_t>(outer, 200);

  auto inner_solve = [&](double lam, int rounds) {
    double prev = -kInfVal;
    for (int rd = 0; rd < rounds; ++rd) {
      double p = 0.0;
      for (std::size_t c = 0; c < cells.size(); ++c) p = update_cell(c, lam);
      if (std::fabs(p - prev) <= 1e-12 * (1.0 + std::fabs(p))) break;
      prev = p;
    }
    state_lambda = lam;
    return consider(lam);
  };

  // Price polish: if the unpriced optimum overruns the budget, bisect the
  // price until the effort lands on it.
  if (!cells.empty()) {
    const double g0 = inner_solve(0.0, 6);
    if (g0 > feas_tol) {
      double lo = 0.0;
      double hi = std::max(1.0, 2.0 * lambda);
      double ghi = inner_solve(hi, 6);
      while (ghi > feas_tol && hi < 1e6) {
        hi *= 4.0;
        ghi = inner_solve(hi, 6);
      }
      if (ghi <= feas_tol) {
        while (hi - lo > 1e-3 * std::max(1.0, hi)) {
          const double mid = 0.5 * (lo + hi);
          (inner_solve(mid, 4) > feas_tol ? lo : hi) = mid;
        }
        inner_solve(hi, 8);
      }
    }
  }

  if (best.has) {
    out.rate = best.rate;
    out.bits = best.bits;
    out.lambda = best.lambda;
    out.feasible = true;
  } else {
    out.lambda = state_lambda;
    out.feasible = false;
  }
  double rsum, csum;
  measure(rsum, csum);
  out.sum_rate = rsum;
  return out;
}

void validate_scenario(const CranScenario& sc) {
  if (sc.n_cells == 0 || sc.n_prbs == 0)
    throw std::invalid_argument("scenario has no cells or PRBs");
  if (sc.direct.rows != sc.n_cells || sc.direct.cols != sc.n_prbs ||
      sc.interf.rows != sc.n_cells || sc.interf.cols != sc.n_prbs)
    throw std::invalid_argument("power matrix dimensions mismatch");
  if (!(sc.n_re > 0.0)) throw std::invalid_argument("n_re must be positive");
  if (sc.rates.empty() || !std::is_sorted(sc.rates.begin(), sc.rates.end()) ||
      sc.rates.front() <= 0.0)
    throw std::invalid_argument("rate menu must be positive and ascending");
  if (sc.op_prbs.empty()) throw std::invalid_argument("no operators");
  for (const auto& per_cell : sc.op_prbs)
    if (per_cell.size() != sc.n_cells)
      throw std::invalid_argument("operator PRB lists must cover every cell");
}

void validate_op_budgets(const CranScenario& sc, std::size_t op,
                         double cloud_bips, const std::vector<double>& fh_bps) {
  if (op >= sc.n_ops()) throw std::invalid_argument("operator index out of range");
  if (!(cloud_bips >= 0.0)) throw std::invalid_argument("negative cloud budget");
  if (fh_bps.size() != sc.n_cells)
    throw std::invalid_argument("one fronthaul budget per cell required");
}

std::size_t nearest_rate_index(const std::vector<double>& menu, double r) {
  std::size_t best = 0;
  double dist = std::fabs(r - menu[0]);
  for (std::size_t j = 1; j < menu.size(); ++j) {
    const double dj = std::fabs(r - menu[j]);
    if (dj < dist) {
      dist = dj;
      best = j;
    }
  }
  return best;
}

// Smallest integer width that keeps the rate strictly under capacity while
// respecting the quantization floor; negative when no width can carry it.
long long min_int_width(double d, double i, double rate, double floor_b) {
  const long long lo = static_cast<long long>(std::llround(floor_b));
  if (rate <= 0.0) return lo;
  const double need = bits_for_rate_raw(d, i, rate);
  if (need == kInfVal) return -1;
  return std::max(lo, static_cast<long long>(std::floor(need + 1e-12)) + 1);
}

double discrete_chi(const CranScenario& sc, const ComplexityModel& m,
                    std::size_t k, std::size_t s, double rate, double bits) {
  if (rate <= 0.0) return 0.0;
  return chi_raw(m.a(), m.b(), rate,
                 capacity_raw(sc.direct(k, s), sc.interf(k, s), bits));
}

// Shared repair for a discrete allocation whose effort overruns the budget:
// step the worst offender one format down, switching the PRB off when it is
// already at the smallest format.
void trim_effort(const CranScenario& sc, const ComplexityModel& m, std::size_t op,
                 double cloud_pcu, Matrix& rate, Matrix& bits, bool& degraded) {
  for (;;) {
    double total = 0.0;
    double worst = 0.0;
    std::size_t wk = 0, ws = 0;
    bool found = false;
    for (std::size_t k = 0; k < sc.n_cells; ++k)
      for (std::size_t s : sc.op_prbs[op][k]) {
        const double c = discrete_chi(sc, m, k, s, rate(k, s), bits(k, s));
        total += c;
        if (rate(k, s) > 0.0 && (!found || c > worst)) {
          worst = c;
          wk = k;
          ws = s;
          found = true;
        }
      }
    if (total <= cloud_pcu * (1.0 + 1e-12) || !found) return;
    const std::size_t idx = nearest_rate_index(sc.rates, rate(wk, ws));
    if (idx == 0) {
      // Already at the smallest format: switch the PRB off.
      rate(wk, ws) = 0.0;
      bits(wk, ws) = 0.0;
      degraded = true;
    } else {
      rate(wk, ws) = sc.rates[idx - 1];
    }
  }
}

// Terminal hill climb on the discrete lattice: while the effort budget has
// slack, raise the rate of the cheapest PRB one format (widening its
// quantizer by one bit when the fronthaul still has room and the next format
// needs the extra capacity), and switch disabled PRBs back on when both
// budgets allow the smallest format. Each move grows the sum rate, so the
// loop terminates on the finite grid.
void upgrade_discrete(const CranScenario& sc, const ComplexityModel& m,
                      std::size_t op, double cloud_pcu,
                      const std::vector<double>& fh_bps, Matrix& rate,
                      Matrix& bits) {
  const double a = m.a(), bcoef = m.b();
  for (std::size_t guard = 0; guard < 100000; ++guard) {
    double chi_total = 0.0;
    std::vector<double> spent(sc.n_cells, 0.0);
    for (std::size_t k = 0; k < sc.n_cells; ++k)
      for (std::size_t s : sc.op_prbs[op][k]) {
        chi_total += discrete_chi(sc, m, k, s, rate(k, s), bits(k, s));
        spent[k] += bits(k, s);
      }
    const double effort_left = cloud_pcu * (1.0 + 1e-12) - chi_total;

    struct Move {
      double dr = 0.0, dchi = 0.0, new_rate = 0.0, new_bits = 0.0;
      std::size_t k = 0, s = 0;
      bool valid = false;
    } best;
    auto offer = [&](std::size_t k, std::size_t s, double r2, double b2,
                     double dchi) {
      const double dr = r2 - rate(k, s);
      if (!(dr > 0.0) || dchi > effort_left) return;
      if (!best.valid || dr > best.dr ||
          (dr == best.dr &&
           (dchi < best.dchi ||
            (dchi == best.dchi && std::tie(k, s) < std::tie(best.k, best.s)))))
        best = {dr, dchi, r2, b2, k, s, true};
    };
    for (std::size_t k = 0; k < sc.n_cells; ++k) {
      const double slack =
          fh_bps[k] / (2.0 * sc.n_re) * (1.0 + 1e-12) - spent[k];
      for (std::size_t s : sc.op_prbs[op][k]) {
        const double d = sc.direct(k, s), i = sc.interf(k, s);
        if (rate(k, s) > 0.0) {
          const std::size_t idx = nearest_rate_index(sc.rates, rate(k, s));
          if (idx + 1 >= sc.rates.size()) continue;
          const double r2 = sc.rates[idx + 1];
          const double chi0 = discrete_chi(sc, m, k, s, rate(k, s), bits(k, s));
          const double t1 = capacity_raw(d, i, bits(k, s));
          if (r2 < t1 * (1.0 - 1e-9)) {
            offer(k, s, r2, bits(k, s), chi_raw(a, bcoef, r2, t1) - chi0);
          } else if (slack >= 1.0) {
            const double t2 = capacity_raw(d, i, bits(k, s) + 1.0);
            if (r2 < t2 * (1.0 - 1e-9))
              offer(k, s, r2, bits(k, s) + 1.0,
                    chi_raw(a, bcoef, r2, t2) - chi0);
          }
        } else {
          const double floor_b = static_cast<double>(min_quant_bits(d, i));
          const long long need = min_int_width(d, i, sc.rates.front(), floor_b);
          if (need < 0 || static_cast<double>(need) > slack) continue;
          const double t2 = capacity_raw(d, i, static_cast<double>(need));
          if (sc.rates.front() < t2 * (1.0 - 1e-9))
            offer(k, s, sc.rates.front(), static_cast<double>(need),
                  chi_raw(a, bcoef, sc.rates.front(), t2));
        }
      }
    }
    if (best.valid) {
      rate(best.k, best.s) = best.new_rate;
      bits(best.k, best.s) = best.new_bits;
      continue;
    }

    // No single uptick fits the effort budget. Try paying for one with a
    // one-format downgrade elsewhere when the trade still gains rate.
    struct Swap {
      double gain = 0.0, dchi = 0.0;
      std::size_t up_k = 0, up_s = 0, dn_k = 0, dn_s = 0;
      double up_rate = 0.0, up_bits = 0.0, dn_rate = 0.0;
      bool valid = false;
    } trade;
    for (std::size_t dk = 0; dk < sc.n_cells; ++dk)
      for (std::size_t ds : sc.op_prbs[op][dk]) {
        if (rate(dk, ds) <= 0.0) continue;
        const std::size_t didx = nearest_rate_index(sc.rates, rate(dk, ds));
        if (didx == 0) continue;
        const double dn_rate = sc.rates[didx - 1];
        const double dn_loss = rate(dk, ds) - dn_rate;
        const double dn_dchi =
            discrete_chi(sc, m, dk, ds, dn_rate, bits(dk, ds)) -
            discrete_chi(sc, m, dk, ds, rate(dk, ds), bits(dk, ds));
        for (std::size_t uk = 0; uk < sc.n_cells; ++uk) {
          const double slack =
              fh_bps[uk] / (2.0 * sc.n_re) * (1.0 + 1e-12) - spent[uk];
          for (std::size_t us : sc.op_prbs[op][uk]) {
            if (rate(uk, us) <= 0.0 || (uk == dk && us == ds)) continue;
            const std::size_t uidx =
                nearest_rate_index(sc.rates, rate(uk, us));
            if (uidx + 1 >= sc.rates.size()) continue;
            const double r2 = sc.rates[uidx + 1];
            const double gain = r2 - rate(uk, us) - dn_loss;
            if (!(gain > 0.0)) continue;
            const double d = sc.direct(uk, us), i = sc.interf(uk, us);
            const double chi0 =
                discrete_chi(sc, m, uk, us, rate(uk, us), bits(uk, us));
            double b2 = bits(uk, us);
            const double t1 = capacity_raw(d, i, b2);
            double up_dchi;
            if (r2 < t1 * (1.0 - 1e-9)) {
              up_dchi = chi_raw(a, bcoef, r2, t1) - chi0;
            } else if (slack >= 1.0) {
              b2 += 1.0;
              const double t2 = capacity_raw(d, i, b2);
              if (!(r2 < t2 * (1.0 - 1e-9))) continue;
              up_dchi = chi_raw(a, bcoef, r2, t2) - chi0;
            } else {
              continue;
            }
            const double dchi = up_dchi + dn_dchi;
            if (dchi > effort_left) continue;
            if (!trade.valid || gain > trade.gain ||
                (gain == trade.gain &&
                 (dchi < trade.dchi ||
                  (dchi == trade.dchi &&
                   std::tie(uk, us, dk, ds) <
                       std::tie(trade.up_k, trade.up_s, trade.dn_k,
                                trade.dn_s)))))
              trade = {gain, dchi, uk, us, dk, ds, r2, b2, dn_rate, true};
          }
        }
      }
    if (!trade.valid) return;
    rate(trade.dn_k, trade.dn_s) = trade.dn_rate;
    rate(trade.up_k, trade.up_s) = trade.up_rate;
    bits(trade.up_k, trade.up_s) = trade.up_bits;
  }
}

DiscreteAlloc finish_discrete(const CranScenario& sc, const ComplexityModel& m,
                              std::size_t op, double cloud_bips,
                              const std::vector<double>& fh_bps, Matrix rate,
                              Matrix bits, bool degraded) {
  DiscreteAlloc alloc;
  alloc.rate = std::move(rate);
  alloc.bits = std::move(bits);
  alloc.degraded = degraded;
  alloc.sum_rate = 0.0;
  double chi_total = 0.0;
  bool ok = true;
  for (std::size_t k = 0; k < sc.n_cells; ++k) {
    double spent = 0.0;
    for (std::size_t s : sc.op_prbs[op][k]) {
      alloc.sum_rate += alloc.rate(k, s);
      spent += alloc.bits(k, s);
      chi_total += discrete_chi(sc, m, k, s, alloc.rate(k, s), alloc.bits(k, s));
    }
    if (spent > fh_bps[k] / (2.0 * sc.n_re) * (1.0 + 1e-9)) ok = false;
  }
  if (chi_total > cloud_bips / sc.n_re * (1.0 + 1e-9)) ok = false;
  alloc.feasible = ok;
  return alloc;
}

}  // namespace

std::vector<double> default_rate_set() {
  static const int kTbs[] = {16,  24,  32,  40,  56,  72,  88,  104, 120,
                             136, 144, 176, 208, 224, 256, 280, 328, 336,
                             376, 408, 440, 488, 520, 552, 584, 616, 712};
  std::vector<double> rates;
  rates.reserve(std::size(kTbs));
  for (int tbs : kTbs) rates.push_back(tbs * 1000.0 / 168000.0);
  return rates;
}

double ComplexityModel::a() const {
  if (!(zeta > 2.0))
    throw std::invalid_argument("decoder connectivity must exceed 2");
  return 1.0 / std::log2(zeta - 1.0);
}

double ComplexityModel::b() const {
  if (!(zeta > 2.0))
    throw std::invalid_argument("decoder connectivity must exceed 2");
  if (!(t_prime > 0.0))
    throw std::invalid_argument("iteration scale must be positive");
  if (!(eps_ch > 0.0) || !(eps_ch < 1.0))
    throw std::invalid_argument("outage share must lie in (0, 1)");
  const double t = -t_prime / std::log10(eps_ch);
  return std::log2((zeta - 2.0) / (zeta * t));
}

double quant_noise(double bits, double received_w) {
  if (!(bits >= 0.0)) throw std::invalid_argument("negative bit width");
  if (!(received_w > 0.0))
    throw std::invalid_argument("received power must be positive");
  return quant_noise_raw(bits, received_w);
}

double sinr_with_quant(double direct_w, double interf_w, double bits) {
  if (!(direct_w > 0.0) || !(interf_w > 0.0))
    throw std::invalid_argument("powers must be positive");
  if (!(bits >= 0.0)) throw std::invalid_argument("negative bit width");
  return direct_w / (interf_w + quant_noise_raw(bits, direct_w + interf_w));
}

double quant_capacity(double direct_w, double interf_w, double bits) {
  return std::log2(1.0 + sinr_with_quant(direct_w, interf_w, bits));
}

double min_quant_bits_real(double direct_w, double interf_w) {
  if (!(direct_w > 0.0) || !(interf_w > 0.0))
    throw std::invalid_argument("powers must be positive");
  return min_bits_real_raw(direct_w, interf_w);
}

unsigned min_quant_bits(double direct_w, double interf_w) {
  const double b = min_quant_bits_real(direct_w, interf_w);
  return static_cast<unsigned>(std::ceil(b - 1e-12));
}

double decode_complexity(const ComplexityModel& model, double rate, double bits,
                         double direct_w, double interf_w) {
  if (!(rate >= 0.0)) throw std::invalid_argument("negative rate");
  const double t = quant_capacity(direct_w, interf_w, bits);
  if (rate >= t)
    throw std::invalid_argument("rate at or above capacity: effort diverges");
  return chi_raw(model.a(), model.b(), rate, t);
}

double optimal_rate_given_bits(const ComplexityModel& model, double lambda,
                               double bits, double direct_w, double interf_w,
                               double r_min, double r_max) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("negative effort price");
  if (!(r_min > 0.0) || r_max < r_min)
    throw std::invalid_argument("invalid rate bounds");
  quant_capacity(direct_w, interf_w, bits);  // validates the link arguments
  return rate_step(model.a(), model.b(), lambda, direct_w, interf_w, bits,
                   r_min, r_max);
}

std::vector<double> optimal_bits_given_rates(const ComplexityModel& model,
                                             const std::vector<double>& rates,
                                             const std::vector<double>& direct_w,
                                             const std::vector<double>& interf_w,
                                             double fronthaul_bps, double n_re) {
  model.a();
  if (rates.empty() || rates.size() != direct_w.size() ||
      rates.size() != interf_w.size())
    throw std::invalid_argument("per-PRB vectors must match");
  if (!(n_re > 0.0)) throw std::invalid_argument("n_re must be positive");
  if (!(fronthaul_bps >= 0.0))
    throw std::invalid_argument("negative fronthaul budget");
  const double budget = fronthaul_bps / (2.0 * n_re);
  std::vector<FillItem> items(rates.size());
  double floors = 0.0;
  for (std::size_t s = 0; s < rates.size(); ++s) {
    const double d = direct_w[s], i = interf_w[s];
    if (!(d > 0.0) || !(i > 0.0))
      throw std::invalid_argument("powers must be positive");
    if (!(rates[s] >= 0.0)) throw std::invalid_argument("negative rate");
    double floor_b = static_cast<double>(min_quant_bits(d, i));
    if (rates[s] > 0.0) {
      const double need = bits_for_rate_raw(d, i, rates[s]);
      if (need == kInfVal)
        throw std::invalid_argument("rate above the analog capacity");
      floor_b = std::max(floor_b, need);
    }
    items[s] = {rates[s], floor_b, d, i, rates[s]};
    floors += floor_b;
  }
  if (floors > budget * (1.0 + 1e-12))
    throw std::runtime_error("fronthaul budget below the width floors");
  return waterfill_bits(items, budget);
}

RllResult solve_rll(const CranScenario& sc, const ComplexityModel& model,
                    std::size_t op, double cloud_bips,
                    const std::vector<double>& fronthaul_bps, double tol) {
  validate_scenario(sc);
  validate_op_budgets(sc, op, cloud_bips, fronthaul_bps);
  EngineInput in;
  in.sc = &sc;
  in.m = &model;
  in.op = op;
  in.cloud_bips = cloud_bips;
  in.fh_bps = &fronthaul_bps;
  in.tol = tol;
  auto eng = run_rll_engine(in);
  if (eng.floors_infeasible)
    throw std::runtime_error("fronthaul budget below the width floors");
  RllResult res;
  res.rate = std::move(eng.rate);
  res.bits = std::move(eng.bits);
  res.lambda = eng.lambda;
  res.sum_rate = eng.sum_rate;
  res.iterations = eng.iterations;
  res.feasible = eng.feasible;
  res.trace = std::move(eng.trace);
  return res;
}

DiscreteAlloc round_ir(const CranScenario& sc, const ComplexityModel& model,
                       std::size_t op, double cloud_bips,
                       const std::vector<double>& fronthaul_bps,
                       const RllResult& relaxed) {
  validate_scenario(sc);
  validate_op_budgets(sc, op, cloud_bips, fronthaul_bps);
  if (relaxed.rate.rows != sc.n_cells || relaxed.rate.cols != sc.n_prbs ||
      relaxed.bits.rows != sc.n_cells || relaxed.bits.cols != sc.n_prbs)
    throw std::invalid_argument("relaxed allocation dimensions mismatch");

  Matrix fix_rate(sc.n_cells, sc.n_prbs, -1.0);
  Matrix fix_bits(sc.n_cells, sc.n_prbs, -1.0);
  Matrix disabled(sc.n_cells, sc.n_prbs, 0.0);
  Matrix cur_rate = relaxed.rate;
  Matrix cur_bits = relaxed.bits;
  double cur_lambda = relaxed.lambda;
  bool degraded = false;

  struct Var {
    double dist = 0.0;
    int kind = 0;  // 0 rate, 1 bits
    std::size_t k = 0, s = 0;
  };
  auto run_masked = [&]() {
    EngineInput in;
    in.sc = &sc;
    in.m = &model;
    in.op = op;
    in.cloud_bips = cloud_bips;
    in.fh_bps = &fronthaul_bps;
    in.fix_rate = &fix_rate;
    in.fix_bits = &fix_bits;
    in.disabled = &disabled;
    in.warm_lambda = cur_lambda;
    in.warm_rate = &cur_rate;
    in.warm_bits = &cur_bits;
    in.record_trace = false;
    return run_rll_engine(in);
  };

  for (std::size_t k = 0; k < sc.n_cells; ++k)
    for (std::size_t s : sc.op_prbs[op][k])
      if (relaxed.rate(k, s) <= 0.0) {
        disabled(k, s) = 1.0;
        degraded = true;
      }

  for (;;) {
    bool found = false;
    Var pick;
    for (std::size_t k = 0; k < sc.n_cells; ++k)
      for (std::size_t s : sc.op_prbs[op][k]) {
        if (disabled(k, s) != 0.0) continue;
        if (fix_rate(k, s) < 0.0) {
          const double r = cur_rate(k, s);
          const Var v{std::fabs(r - sc.rates[nearest_rate_index(sc.rates, r)]),
                      0, k, s};
          if (!found || v.dist < pick.dist ||
              (v.dist == pick.dist &&
               std::tie(v.kind, v.k, v.s) < std::tie(pick.kind, pick.k, pick.s))) {
            pick = v;
            found = true;
          }
        }
        if (fix_bits(k, s) < 0.0) {
          const double b = cur_bits(k, s);
          const double r_now =
              fix_rate(k, s) >= 0.0 ? fix_rate(k, s) : cur_rate(k, s);
          const double floor_b =
              static_cast<double>(min_quant_bits(sc.direct(k, s), sc.interf(k, s)));
          const long long lo = min_int_width(sc.direct(k, s), sc.interf(k, s),
                                             r_now, floor_b);
          const double target =
              lo < 0 ? -1.0
                     : std::max(std::round(b), static_cast<double>(lo));
          const Var v{target < 0.0 ? 1e9 : std::fabs(b - target), 1, k, s};
          if (!found || v.dist < pick.dist ||
              (v.dist == pick.dist &&
               std::tie(v.kind, v.k, v.s) < std::tie(pick.kind, pick.k, pick.s))) {
            pick = v;
            found = true;
          }
        }
      }
    if (!found) break;

    std::vector<double> candidates;
    if (pick.kind == 0) {
      const double r = cur_rate(pick.k, pick.s);
      const std::size_t idx = nearest_rate_index(sc.rates, r);
      candidates.push_back(sc.rates[idx]);
      // Fallback: the next format down restores feasibility more often.
      if (idx > 0) candidates.push_back(sc.rates[idx - 1]);
    } else {
      const double b = cur_bits(pick.k, pick.s);
      const double r_now = fix_rate(pick.k, pick.s) >= 0.0
                               ? fix_rate(pick.k, pick.s)
                               : cur_rate(pick.k, pick.s);
      const double floor_b = static_cast<double>(
          min_quant_bits(sc.direct(pick.k, pick.s), sc.interf(pick.k, pick.s)));
      const long long lo = min_int_width(sc.direct(pick.k, pick.s),
                                         sc.interf(pick.k, pick.s), r_now, floor_b);
      if (lo >= 0) {
        const double target = std::max(std::round(b), static_cast<double>(lo));
        candidates.push_back(target);
        const double down = std::max(std::floor(b), static_cast<double>(lo));
        if (down < target) candidates.push_back(down);
      }
    }

    bool accepted = false;
    for (double value : candidates) {
      Matrix& mask = pick.kind == 0 ? fix_rate : fix_bits;
      mask(pick.k, pick.s) = value;
      auto eng = run_masked();
      if (!eng.floors_infeasible && eng.feasible) {
        cur_rate = std::move(eng.rate);
        cur_bits = std::move(eng.bits);
        cur_lambda = eng.lambda;
        accepted = true;
        break;
      }
      mask(pick.k, pick.s) = -1.0;
    }
    if (!accepted) {
      disabled(pick.k, pick.s) = 1.0;
      fix_rate(pick.k, pick.s) = -1.0;
      fix_bits(pick.k, pick.s) = -1.0;
      degraded = true;
      auto eng = run_masked();
      if (!eng.floors_infeasible) {
        cur_rate = std::move(eng.rate);
        cur_bits = std::move(eng.bits);
        cur_lambda = eng.lambda;
      }
    }
  }

  Matrix rate(sc.n_cells, sc.n_prbs);
  Matrix bits(sc.n_cells, sc.n_prbs);
  for (std::size_t k = 0; k < sc.n_cells; ++k)
    for (std::size_t s : sc.op_prbs[op][k]) {
      if (disabled(k, s) != 0.0) continue;
      rate(k, s) = std::max(0.0, fix_rate(k, s));
      bits(k, s) = std::max(0.0, fix_bits(k, s));
    }
  upgrade_discrete(sc, model, op, cloud_bips / sc.n_re, fronthaul_bps, rate,
                   bits);
  return finish_discrete(sc, model, op, cloud_bips, fronthaul_bps,
                         std::move(rate), std::move(bits), degraded);
}

DiscreteAlloc round_ra(const CranScenario& sc, const ComplexityModel& model,
                       std::size_t op, double cloud_bips,
                       const std::vector<double>& fronthaul_bps,
                       const RllResult& relaxed) {
  validate_scenario(sc);
  validate_op_budgets(sc, op, cloud_bips, fronthaul_bps);
  if (relaxed.rate.rows != sc.n_cells || relaxed.rate.cols != sc.n_prbs ||
      relaxed.bits.rows != sc.n_cells || relaxed.bits.cols != sc.n_prbs)
    throw std::invalid_argument("relaxed allocation dimensions mismatch");

  Matrix rate(sc.n_cells, sc.n_prbs);
  Matrix bits(sc.n_cells, sc.n_prbs);
  bool degraded = false;

  for (std::size_t k = 0; k < sc.n_cells; ++k)
    for (std::size_t s : sc.op_prbs[op][k]) {
      if (relaxed.rate(k, s) <= 0.0) continue;
      double r = sc.rates[nearest_rate_index(sc.rates, relaxed.rate(k, s))];
      const double floor_b =
          static_cast<double>(min_quant_bits(sc.direct(k, s), sc.interf(k, s)));
      long long lo = min_int_width(sc.direct(k, s), sc.interf(k, s), r, floor_b);
      while (lo < 0) {
        // Rounded above the analog capacity: fall back format by format.
        const std::size_t idx = nearest_rate_index(sc.rates, r);
        if (idx == 0) {
          r = 0.0;
          degraded = true;
          lo = 0;
          break;
        }
        r = sc.rates[idx - 1];
        lo = min_int_width(sc.direct(k, s), sc.interf(k, s), r, floor_b);
      }
      rate(k, s) = r;
      bits(k, s) = r > 0.0 ? std::max(std::round(relaxed.bits(k, s)),
                                      static_cast<double>(lo))
                           : 0.0;
    }

  // Fronthaul repair: shave the widest PRB that still has room, switching
  // the widest one off when nobody has room.
  for (std::size_t k = 0; k < sc.n_cells; ++k) {
    const double budget = fronthaul_bps[k] / (2.0 * sc.n_re);
    for (;;) {
      double spent = 0.0;
      for (std::size_t s : sc.op_prbs[op][k]) spent += bits(k, s);
      if (spent <= budget * (1.0 + 1e-12)) break;
      // Shave the widest PRB that can still lose a bit without choking its
      // rate; if nobody has room, disable the widest outright.
      double best_b = -1.0, widest_b = -1.0;
      std::size_t best_s = 0, widest = 0;
      for (std::size_t s : sc.op_prbs[op][k]) {
        if (bits(k, s) <= 0.0) continue;
        if (bits(k, s) > widest_b) {
          widest_b = bits(k, s);
          widest = s;
        }
        const double floor_b = static_cast<double>(
            min_quant_bits(sc.direct(k, s), sc.interf(k, s)));
        const long long lo =
            min_int_width(sc.direct(k, s), sc.interf(k, s), rate(k, s), floor_b);
        if (lo >= 0 && bits(k, s) - 1.0 >= static_cast<double>(lo) &&
            bits(k, s) > best_b) {
          best_b = bits(k, s);
          best_s = s;
        }
      }
      if (best_b >= 0.0) {
        bits(k, best_s) -= 1.0;
      } else if (widest_b > 0.0) {
        rate(k, widest) = 0.0;
        bits(k, widest) = 0.0;
        degraded = true;
      } else {
        break;
      }
    }
  }

  trim_effort(sc, model, op, cloud_bips / sc.n_re, rate, bits, degraded);
  upgrade_discrete(sc, model, op, cloud_bips / sc.n_re, fronthaul_bps, rate,
                   bits);
  return finish_discrete(sc, model, op, cloud_bips, fronthaul_bps,
                         std::move(rate), std::move(bits), degraded);
}

GreedyResult greedy_alloc(const CranScenario& sc, const ComplexityModel& model,
                          double cloud_cap_bips,
                          const std::vector<double>& fronthaul_cap_bps) {
  validate_scenario(sc);
  if (!(cloud_cap_bips >= 0.0))
    throw std::invalid_argument("negative cloud pool");
  if (fronthaul_cap_bps.size() != sc.n_cells)
    throw std::invalid_argument("one fronthaul pool per cell required");
  const std::size_t n_ops = sc.n_ops();

  // Analog rate shares decide the split of both pools.
  Matrix shannon(n_ops, sc.n_cells);
  std::vector<double> op_total(n_ops, 0.0);
  double grand = 0.0;
  for (std::size_t o = 0; o < n_ops; ++o)
    for (std::size_t k = 0; k < sc.n_cells; ++k)
      for (std::size_t s : sc.op_prbs[o][k]) {
        const double v = std::log2(1.0 + sc.direct(k, s) / sc.interf(k, s));
        shannon(o, k) += v;
        op_total[o] += v;
        grand += v;
      }

  GreedyResult res;
  res.cloud.assign(n_ops, 0.0);
  res.fronthaul = Matrix(n_ops, sc.n_cells);
  for (std::size_t o = 0; o < n_ops; ++o)
    res.cloud[o] = grand > 0.0 ? cloud_cap_bips * op_total[o] / grand
                               : cloud_cap_bips / static_cast<double>(n_ops);
  for (std::size_t k = 0; k < sc.n_cells; ++k) {
    double col = 0.0;
    for (std::size_t o = 0; o < n_ops; ++o) col += shannon(o, k);
    for (std::size_t o = 0; o < n_ops; ++o)
      res.fronthaul(o, k) = col > 0.0
                                ? fronthaul_cap_bps[k] * shannon(o, k) / col
                                : fronthaul_cap_bps[k] / static_cast<double>(n_ops);
  }

  res.total_rate = 0.0;
  res.alloc.resize(n_ops);
  for (std::size_t o = 0; o < n_ops; ++o) {
    Matrix rate(sc.n_cells, sc.n_prbs);
    Matrix bits(sc.n_cells, sc.n_prbs);
    bool degraded = false;
    for (std::size_t k = 0; k < sc.n_cells; ++k) {
      const auto& prbs = sc.op_prbs[o][k];
      if (prbs.empty()) continue;
      const double budget = res.fronthaul(o, k) / (2.0 * sc.n_re);
      // Capacity waterfill: equalize the capacity slope, drop PRBs whose
      // peak slope is below the level, then floor to integers.
      std::vector<double> width(prbs.size(), 0.0);
      if (budget / static_cast<double>(prbs.size()) >= kMaxBits) {
        width.assign(prbs.size(), kMaxBits);
      } else if (budget > 0.0) {
        double nu_hi = 0.0;
        for (std::size_t j = 0; j < prbs.size(); ++j) {
          const double d = sc.direct(k, prbs[j]), i = sc.interf(k, prbs[j]);
          nu_hi = std::max(nu_hi,
                           capacity_slope(d, i, min_bits_real_raw(d, i)));
        }
        auto root = [&](std::size_t j, double nu) {
          const double d = sc.direct(k, prbs[j]), i = sc.interf(k, prbs[j]);
          const double peak = min_bits_real_raw(d, i);
          if (capacity_slope(d, i, peak) <= nu) return 0.0;
          double len = 1.0;
          while (peak + len < kMaxBits && capacity_slope(d, i, peak + len) > nu)
            len *= 2.0;
          double lo = peak + (len > 1.0 ? len / 2.0 : 0.0);
          double hi = std::min(peak + len, kMaxBits);
          for (int n = 0; n < 48; ++n) {
            const double mid = 0.5 * (lo + hi);
            (capacity_slope(d, i, mid) > nu ? lo : hi) = mid;
          }
          return 0.5 * (lo + hi);
        };
        double nu_lo = 0.0;
        for (int n = 0; n < 60; ++n) {
          const double nu = 0.5 * (nu_lo + nu_hi);
          double sum = 0.0;
          for (std::size_t j = 0; j < prbs.size(); ++j)
            sum += (width[j] = root(j, nu));
          (sum > budget ? nu_lo : nu_hi) = nu;
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < prbs.size(); ++j)
          sum += (width[j] = root(j, nu_hi));
      }
      for (std::size_t j = 0; j < prbs.size(); ++j) {
        const std::size_t s = prbs[j];
        bits(k, s) = std::floor(width[j]);
        const double t =
            capacity_raw(sc.direct(k, s), sc.interf(k, s), bits(k, s));
        double top = 0.0;
        for (double entry : sc.rates)
          if (entry < t * (1.0 - 1e-9)) top = entry;
        rate(k, s) = top;
        if (top == 0.0) {
          bits(k, s) = 0.0;
          degraded = true;
        }
      }
    }
    trim_effort(sc, model, o, res.cloud[o] / sc.n_re, rate, bits, degraded);
    std::vector<double> fh_o(sc.n_cells);
    for (std::size_t k = 0; k < sc.n_cells; ++k) fh_o[k] = res.fronthaul(o, k);
    res.alloc[o] = finish_discrete(sc, model, o, res.cloud[o], fh_o,
                                   std::move(rate), std::move(bits), degraded);
    res.total_rate += res.alloc[o].sum_rate;
  }
  return res;
}

ProfitReport profits(const EconomicModel& econ, const std::vector<double>& cloud,
                     const Matrix& fronthaul, const std::vector<double>& sum_rate,
                     double n_re) {
  const std::size_t n_ops = cloud.size();
  if (econ.psi.size() != n_ops || econ.rho.size() != n_ops ||
      econ.weight_op.size() != n_ops || sum_rate.size() != n_ops ||
      fronthaul.rows != n_ops || econ.beta.rows != n_ops ||
      econ.beta.cols != fronthaul.cols)
    throw std::invalid_argument("economic model dimensions mismatch");
  if (!(n_re > 0.0)) throw std::invalid_argument("n_re must be positive");
  ProfitReport rep;
  rep.payment.assign(n_ops, 0.0);
  rep.op_profit.assign(n_ops, 0.0);
  for (std::size_t o = 0; o < n_ops; ++o) {
    double pay = econ.psi[o] * cloud[o];
    for (std::size_t k = 0; k < fronthaul.cols; ++k)
      pay += econ.beta(o, k) * fronthaul(o, k);
    rep.payment[o] = pay;
    rep.op_profit[o] = econ.rho[o] * n_re * sum_rate[o] - pay;
    rep.inp_profit += pay;
    rep.objective += econ.weight_op[o] * rep.op_profit[o];
  }
  rep.objective += econ.weight_inp * rep.inp_profit;
  return rep;
}

double satisfaction_index(double achieved, double maximum) {
  if (!(maximum > 0.0))
    throw std::invalid_argument("profit ceiling must be positive");
  return achieved / maximum;
}

RulResult solve_rul(const CranScenario& sc, const ComplexityModel& model,
                    const EconomicModel& econ, double cloud_cap_bips,
                    const std::vector<double>& fronthaul_cap_bps,
                    const RulOptions& opts) {
  validate_scenario(sc);
  const std::size_t n_ops = sc.n_ops();
  const std::size_t n_cells = sc.n_cells;
  if (econ.psi.size() != n_ops || econ.rho.size() != n_ops ||
      econ.weight_op.size() != n_ops || econ.beta.rows != n_ops ||
      econ.beta.cols != n_cells)
    throw std::invalid_argument("economic model dimensions mismatch");
  if (!(cloud_cap_bips > 0.0)) throw std::invalid_argument("empty cloud pool");
  if (fronthaul_cap_bps.size() != n_cells)
    throw std::invalid_argument("one fronthaul pool per cell required");
  const std::size_t max_iter = std::max<std::size_t>(1, opts.max_iter);

  // Normalized slice shares; the projection caps each pool at its size.
  std::vector<double> x_cloud(n_ops, 1.0 / static_cast<double>(n_ops));
  Matrix x_fh(n_ops, n_cells, 1.0 / static_cast<double>(n_ops));

  // Warm-starting each operator's solves at its last effort price makes the
  // many finite-difference evaluations cheap: the price bracket is found in
  // a step or two instead of a cold subgradient climb.
  std::vector<double> warm_lambda(n_ops, 0.0);
  auto rate_of = [&](std::size_t o, double cloud_abs,
                     const std::vector<double>& fh_abs, bool keep_warm) {
    EngineInput ein;
    ein.sc = &sc;
    ein.m = &model;
    ein.op = o;
    ein.cloud_bips = cloud_abs;
    ein.fh_bps = &fh_abs;
    ein.warm_lambda = warm_lambda[o];
    ein.record_trace = false;
    ein.tol = opts.rll_tol;
    const auto eng = run_rll_engine(ein);
    // A slice below the width floors means this operator cannot run on it.
    if (eng.floors_infeasible || !eng.feasible) return 0.0;
    if (keep_warm) warm_lambda[o] = eng.lambda;
    return eng.sum_rate;
  };

  std::vector<double> trace;
  std::vector<std::vector<double>> rate_rows;
  struct BestSlices {
    double objective = -kInfVal;
    std::vector<double> cloud;
    Matrix fronthaul;
    std::vector<double> rates;
  } best;

  const double d_cloud = 1e-3 * cloud_cap_bips / static_cast<double>(n_ops);
  for (std::size_t n = 1; n <= max_iter; ++n) {
    std::vector<double> cloud_abs(n_ops);
    Matrix fh_abs(n_ops, n_cells);
    for (std::size_t o = 0; o < n_ops; ++o) {
      cloud_abs[o] = x_cloud[o] * cloud_cap_bips;
      for (std::size_t k = 0; k < n_cells; ++k)
        fh_abs(o, k) = x_fh(o, k) * fronthaul_cap_bps[k];
    }
    std::vector<double> rates(n_ops);
    for (std::size_t o = 0; o < n_ops; ++o) {
      std::vector<double> fh_o(n_cells);
      for (std::size_t k = 0; k < n_cells; ++k) fh_o[k] = fh_abs(o, k);
      rates[o] = rate_of(o, cloud_abs[o], fh_o, true);
    }
    const auto rep = profits(econ, cloud_abs, fh_abs, rates, sc.n_re);
    trace.push_back(rep.objective);
    rate_rows.push_back(rates);
    if (rep.objective > best.objective) {
      best.objective = rep.objective;
      best.cloud = cloud_abs;
      best.fronthaul = fh_abs;
      best.rates = rates;
    }

    // Forward-difference profit gradient in normalized coordinates.
    std::vector<double> g_cloud(n_ops, 0.0);
    Matrix g_fh(n_ops, n_cells);
    double gnorm = 0.0;
    for (std::size_t o = 0; o < n_ops; ++o) {
      std::vector<double> fh_o(n_cells);
      for (std::size_t k = 0; k < n_cells; ++k) fh_o[k] = fh_abs(o, k);
      const double bumped = rate_of(o, cloud_abs[o] + d_cloud, fh_o, false);
      const double dr_dc = (bumped - rates[o]) / d_cloud;
      g_cloud[o] = ((econ.weight_inp - econ.weight_op[o]) * econ.psi[o] +
                    econ.weight_op[o] * econ.rho[o] * sc.n_re * dr_dc) *
                   cloud_cap_bips;
      gnorm = std::max(gnorm, std::fabs(g_cloud[o]));
      for (std::size_t k = 0; k < n_cells; ++k) {
        const double d_fh = 1e-3 * fronthaul_cap_bps[k] / static_cast<double>(n_ops);
        fh_o[k] += d_fh;
        const double r2 = rate_of(o, cloud_abs[o], fh_o, false);
        fh_o[k] -= d_fh;
        const double dr_df = (r2 - rates[o]) / d_fh;
        g_fh(o, k) = ((econ.weight_inp - econ.weight_op[o]) * econ.beta(o, k) +
                      econ.weight_op[o] * econ.rho[o] * sc.n_re * dr_df) *
                     fronthaul_cap_bps[k];
        gnorm = std::max(gnorm, std::fabs(g_fh(o, k)));
      }
    }
    if (gnorm <= 0.0) break;

    const double step = opts.step / std::sqrt(static_cast<double>(n)) / gnorm;
    double moved = 0.0;
    std::vector<double> xc(n_ops);
    for (std::size_t o = 0; o < n_ops; ++o)
      xc[o] = x_cloud[o] + step * g_cloud[o];
    xc = project_capped_simplex(xc, 1.0);
    for (std::size_t o = 0; o < n_ops; ++o) {
      moved = std::max(moved, std::fabs(xc[o] - x_cloud[o]));
      x_cloud[o] = xc[o];
    }
    for (std::size_t k = 0; k < n_cells; ++k) {
      std::vector<double> col(n_ops);
      for (std::size_t o = 0; o < n_ops; ++o)
        col[o] = x_fh(o, k) + step * g_fh(o, k);
      col = project_capped_simplex(col, 1.0);
      for (std::size_t o = 0; o < n_ops; ++o) {
        moved = std::max(moved, std::fabs(col[o] - x_fh(o, k)));
        x_fh(o, k) = col[o];
      }
    }
    if (moved <= opts.tol) break;
  }

  RulResult res;
  res.cloud = best.cloud;
  res.fronthaul = best.fronthaul;
  res.sum_rate = best.rates;
  res.objective = best.objective;
  res.trace = trace;
  res.iterations = trace.size();
  res.rate_trace = Matrix(trace.size(), n_ops);
  for (std::size_t r = 0; r < rate_rows.size(); ++r)
    for (std::size_t o = 0; o < n_ops; ++o)
      res.rate_trace(r, o) = rate_rows[r][o];
  return res;
}

CranScenario build_cran_scenario(const Scenario& s,
                                 const std::vector<Matrix>& channel,
                                 const std::vector<std::size_t>& prbs_per_op,
                                 double tx_power_w) {
  if (channel.empty()) throw std::invalid_argument("empty channel tensor");
  if (!(tx_power_w > 0.0))
    throw std::invalid_argument("transmit power must be positive");
  if (prbs_per_op.empty())
    throw std::invalid_argument("at least one operator required");
  const std::size_t n_cells = s.n_bs();
  const std::size_t n_prbs = channel.size();
  std::size_t claimed = 0;
  for (std::size_t c : prbs_per_op) claimed += c;
  if (claimed != n_prbs)
    throw std::invalid_argument("operator PRB counts must cover the band");
  for (const auto& slice : channel)
    if (slice.rows != n_cells || slice.cols != s.n_users())
      throw std::invalid_argument("channel tensor dimensions mismatch");

  std::vector<std::vector<std::size_t>> home(n_cells);
  for (std::size_t u = 0; u < s.n_users(); ++u) home[s.serving_bs[u]].push_back(u);
  for (std::size_t k = 0; k < n_cells; ++k)
    if (home[k].empty())
      throw std::invalid_argument("every cell needs at least one user");

  CranScenario sc;
  sc.n_cells = n_cells;
  sc.n_prbs = n_prbs;
  sc.direct = Matrix(n_cells, n_prbs);
  sc.interf = Matrix(n_cells, n_prbs);
  for (std::size_t k = 0; k < n_cells; ++k)
    for (std::size_t p = 0; p < n_prbs; ++p) {
      const std::size_t tx = home[k][p % home[k].size()];
      sc.direct(k, p) = channel[p](k, tx) * tx_power_w;
      double interf = s.noise[k];
      for (std::size_t j = 0; j < n_cells; ++j) {
        if (j == k) continue;
        interf += channel[p](k, home[j][p % home[j].size()]) * tx_power_w;
      }
      sc.interf(k, p) = interf;
    }

  // Deterministic per-cell partition of the PRBs across operators.
  const Rng base(s.rng_seed);
  sc.op_prbs.assign(prbs_per_op.size(), {});
  for (auto& per_cell : sc.op_prbs) per_cell.assign(n_cells, {});
  for (std::size_t k = 0; k < n_cells; ++k) {
    std::vector<std::size_t> ids(n_prbs);
    for (std::size_t p = 0; p < n_prbs; ++p) ids[p] = p;
    Rng rng = base.substream("cran-prb-" + std::to_string(k));
    for (std::size_t p = n_prbs; p > 1; --p)
      std::swap(ids[p - 1], ids[rng.next_u64() % p]);
    std::size_t cursor = 0;
    for (std::size_t o = 0; o < prbs_per_op.size(); ++o) {
      auto& mine = sc.op_prbs[o][k];
      mine.assign(ids.begin() + cursor, ids.begin() + cursor + prbs_per_op[o]);
      std::sort(mine.begin(), mine.end());
      cursor += prbs_per_op[o];
    }
  }
  return sc;
}

}  // namespace ranopt
