// Rate and quantization-bit allocation for virtualized uplink C-RAN: RRHs
// quantize received baseband samples and forward them over capacity-limited
// fronthaul links to a cloud whose decoding effort is also budgeted. Several
// operators lease slices of both pools from the infrastructure provider.
//
// The engine solves the per-operator sum-rate problem in a continuous
// relaxation (dual subgradient over the complexity price, closed-form rate
// and bit steps per cell), slices the two pools by projected subgradient on
// the weighted profit, and restores discrete rates and integer bit widths by
// two rounding schemes plus a greedy baseline.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "linalg.hpp"
#include "scenario.hpp"

namespace ranopt {

// Data rates (bits per channel use) of the 27 turbo-coded LTE transport
// formats for a single resource block: transport block size times 1000
// frames per second over the 168000 resource elements one PRB carries per
// second. Ascending; front() and back() bound the continuous relaxation.
std::vector<double> default_rate_set();

// Per-PRB uplink powers at each RRH and the operator partition of every
// cell's PRBs. interf includes thermal noise, so received power is
// direct + interf exactly.
struct CranScenario {
  std::size_t n_cells = 0;
  std::size_t n_prbs = 0;  // PRBs per cell
  Matrix direct;           // n_cells x n_prbs, W
  Matrix interf;           // n_cells x n_prbs, W, noise included
  // op_prbs[o][k] lists the PRB indices operator o owns in cell k; together
  // the lists partition {0, ..., n_prbs-1} in every cell.
  std::vector<std::vector<std::vector<std::size_t>>> op_prbs;
  double n_re = 168000.0;  // resource elements per second per PRB
  std::vector<double> rates = default_rate_set();  // ascending, bits pcu

  std::size_t n_ops() const { return op_prbs.size(); }
  double received(std::size_t k, std::size_t s) const {
    return direct(k, s) + interf(k, s);
  }
  double r_min() const { return rates.front(); }
  double r_max() const { return rates.back(); }
};

// Wires a generated RRH topology into per-PRB powers: every slice of the
// channel tensor is one PRB, direct power comes from the serving link and
// interference aggregates the co-PRB users of all other cells plus noise.
// prbs_per_op sets each operator's PRB count per cell (must sum to the
// tensor size); the partition is drawn per cell from the scenario seed, so
// equal seeds give equal partitions. Cells with several users spread their
// PRBs round-robin over the home users.
CranScenario build_cran_scenario(const Scenario& s,
                                 const std::vector<Matrix>& channel,
                                 const std::vector<std::size_t>& prbs_per_op,
                                 double tx_power_w);

// Turbo-decoder effort model: effort per information bit grows as the chosen
// rate approaches capacity. zeta reflects decoder connectivity, t_prime
// scales iterations, eps_ch is the tolerated computational-outage share.
struct ComplexityModel {
  double t_prime = 0.2;
  double zeta = 6.0;
  double eps_ch = 0.1;

  double a() const;  // 1/log2(zeta - 1)
  double b() const;  // log2((zeta - 2) / (zeta * T)), T = -t_prime/log10(eps_ch)
};

// Leasing prices and profit weights. beta is n_ops x n_cells; psi, rho and
// weight_op have one entry per operator.
struct EconomicModel {
  std::vector<double> psi;  // cents per bit-iteration/s of cloud effort
  Matrix beta;              // cents per bit/s of fronthaul, per operator and cell
  std::vector<double> rho;  // cents per bit/s of served user rate
  double weight_inp = 1.0;
  std::vector<double> weight_op;
};

// Quantization noise power of a Gaussian sample quantized with `bits` bits
// per real dimension: sqrt(3)*pi*received / 2^(2 bits + 1). Throws
// std::invalid_argument when bits < 0 or received <= 0.
double quant_noise(double bits, double received_w);

// Post-quantization SINR direct / (interf + quant_noise). Throws when either
// power is not positive or bits < 0.
double sinr_with_quant(double direct_w, double interf_w, double bits);

// Shannon capacity log2(1 + sinr_with_quant) in bits per channel use.
double quant_capacity(double direct_w, double interf_w, double bits);

// Bit width at which quantization noise equals the geometric mean of
// received and interference power; above it the SINR is within
// sqrt(gbar+1)-1 of the unquantized bound gbar. min_quant_bits returns the
// integer ceiling used as the per-PRB floor.
double min_quant_bits_real(double direct_w, double interf_w);
unsigned min_quant_bits(double direct_w, double interf_w);

// Bit-iterations per channel use to decode rate `rate` on a link quantized
// with `bits` bits: a*rate*(b - 2 log2(capacity - rate)). Throws
// std::invalid_argument when rate >= capacity (effort diverges) or rate < 0.
double decode_complexity(const ComplexityModel& model, double rate,
                         double bits, double direct_w, double interf_w);

// Maximizer of (1 - lambda*a*b_coef + 2 lambda a log2 t) * r
//             + 2 lambda a r log2(1 - r/t)  over [r_min, min(t, r_max)],
// with t the capacity at `bits`. The interior stationary point is found by
// bisection on the derivative; without an interior root the better endpoint
// wins. lambda must be >= 0.
double optimal_rate_given_bits(const ComplexityModel& model, double lambda,
                               double bits, double direct_w, double interf_w,
                               double r_min, double r_max);

// Bit widths maximizing the complexity-price Lagrangian for fixed rates in
// one cell: per-PRB floors max(ceil of min bits, bits needed to carry the
// rate), then waterfilling with weights rates[s] until the fronthaul budget
// fronthaul_bps/(2 n_re) is spent exactly. Throws std::runtime_error when
// the floors alone exceed the budget and std::invalid_argument when a rate
// is unreachable at any bit width.
std::vector<double> optimal_bits_given_rates(const ComplexityModel& model,
                                             const std::vector<double>& rates,
                                             const std::vector<double>& direct_w,
                                             const std::vector<double>& interf_w,
                                             double fronthaul_bps, double n_re);

// One alternation step of the relaxed per-operator problem, recorded for
// convergence inspection: phi is the Lagrangian value after the step.
struct RllTraceRow {
  std::size_t outer = 0;  // dual iteration
  std::size_t cell = 0;
  double phi = 0.0;
};

struct RllResult {
  Matrix rate;            // n_cells x n_prbs, zero outside the operator's PRBs
  Matrix bits;
  double lambda = 0.0;    // complexity price at exit
  double sum_rate = 0.0;  // relaxed optimum, bits per channel use
  std::size_t iterations = 0;  // dual iterations run
  bool feasible = true;   // complexity within tolerance of the budget
  std::vector<RllTraceRow> trace;
};

// Relaxed sum-rate maximization for one operator under a cloud-effort budget
// (bit-iterations per second) and per-cell fronthaul budgets (bits per
// second). Dual subgradient on the complexity price with step 1/sqrt(l);
// each dual iterate alternates the closed-form bit and rate steps per cell.
// Returns the best feasible primal; when the subgradient exits infeasible a
// price bisection restores the budget to tolerance, and if even the minimum
// rates overrun the budget the result carries feasible = false. Throws
// std::runtime_error when the bit floors alone exceed a fronthaul budget.
RllResult solve_rll(const CranScenario& sc, const ComplexityModel& model,
                    std::size_t op, double cloud_bips,
                    const std::vector<double>& fronthaul_bps,
                    double tol = 1e-4);

struct RulOptions {
  std::size_t max_iter = 100;
  double tol = 1e-4;       // exit when the normalized slice update is smaller
  double rll_tol = 1e-4;
  double step = 0.1;       // initial step, fraction of each pool
};

struct RulResult {
  std::vector<double> cloud;     // per-operator cloud slice, bips
  Matrix fronthaul;              // n_ops x n_cells, bps
  std::vector<double> sum_rate;  // per-operator relaxed rate at the best slices
  double objective = 0.0;        // weighted profit at the best slices
  std::vector<double> trace;     // weighted profit per iteration
  Matrix rate_trace;             // iterations x n_ops relaxed rates
  std::size_t iterations = 0;
};

// Profit-maximizing split of the cloud and fronthaul pools across operators
// by projected subgradient: slice gradients use forward differences of the
// relaxed sum rate (steps 1e-3 of pool/ops), the projection clips each pool
// to a capped simplex, and the step follows 1/sqrt(n). Non-monotone, so the
// best iterate by objective is returned.
RulResult solve_rul(const CranScenario& sc, const ComplexityModel& model,
                    const EconomicModel& econ, double cloud_cap_bips,
                    const std::vector<double>& fronthaul_cap_bps,
                    const RulOptions& opts = {});

struct DiscreteAlloc {
  Matrix rate;            // entries in the rate set, or 0 for a disabled PRB
  Matrix bits;            // integers at or above the per-PRB floors
  double sum_rate = 0.0;
  bool feasible = true;
  bool degraded = false;  // some PRB was disabled to restore feasibility
};

// Iterative rounding: pin the free variable closest to its grid (rates to
// the rate set, bits to integers), re-solve the reduced relaxed problem over
// the remaining free variables, repeat. A pin that breaks feasibility is
// retried rounding down. Slices stay fixed throughout.
DiscreteAlloc round_ir(const CranScenario& sc, const ComplexityModel& model,
                       std::size_t op, double cloud_bips,
                       const std::vector<double>& fronthaul_bps,
                       const RllResult& relaxed);

// One-shot rounding to the nearest grid values, then while a constraint is
// violated the variable contributing most to it is stepped down (rates for
// the effort budget, bits for fronthaul); a rate pushed below the smallest
// format disables its PRB.
DiscreteAlloc round_ra(const CranScenario& sc, const ComplexityModel& model,
                       std::size_t op, double cloud_bips,
                       const std::vector<double>& fronthaul_bps,
                       const RllResult& relaxed);

struct GreedyResult {
  std::vector<double> cloud;         // slice per operator, bips
  Matrix fronthaul;                  // n_ops x n_cells, bps
  std::vector<DiscreteAlloc> alloc;  // per operator
  double total_rate = 0.0;
};

// Baseline: slice both pools proportionally to each operator's unquantized
// Shannon rate share, waterfill bits against capacity alone, floor them,
// pick the largest format under capacity, then repeatedly step down the
// costliest PRB while the effort budget is exceeded.
GreedyResult greedy_alloc(const CranScenario& sc, const ComplexityModel& model,
                          double cloud_cap_bips,
                          const std::vector<double>& fronthaul_cap_bps);

struct ProfitReport {
  std::vector<double> payment;    // operator -> provider, cents
  std::vector<double> op_profit;  // per operator, cents
  double inp_profit = 0.0;        // sum of payments
  double objective = 0.0;         // weighted sum of all profits
};

// Accounting for given slices and served rates: each operator pays
// psi*cloud + sum_k beta_k*fronthaul_k and earns rho*n_re*sum_rate.
ProfitReport profits(const EconomicModel& econ, const std::vector<double>& cloud,
                     const Matrix& fronthaul, const std::vector<double>& sum_rate,
                     double n_re);

// Achieved share of a profit ceiling; maximum must be positive.
double satisfaction_index(double achieved, double maximum);

}  // namespace ranopt
