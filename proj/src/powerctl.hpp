#pragma once

#include <cstddef>
#include <vector>

#include "scenario.hpp"

namespace ranopt {

enum class PufKind { tpc, opc, hpc };

// Parameters of the per-user power-update function. The hybrid rule blends
// the target-tracking update (weight 1) with the opportunistic update
// (weight alpha); alpha = 0 recovers pure target tracking and alpha -> inf
// approaches the opportunistic rule.
struct PufParams {
  PufKind kind = PufKind::hpc;
  std::vector<double> alpha;   // >= 0 per user; 0 marks a voice user
  std::vector<double> xi;      // > 0 per user
  double x_exponent = 0.5;     // in (0, 1/2]
  std::vector<double> target;  // linear SINR target per user
  std::vector<double> p_max;   // W per user
};

// xi such that the opportunistic update at the threshold interference
// p_max/target returns exactly p_max.
double derive_xi(double p_max, double target, double x_exponent);
void auto_derive_xi(PufParams& params);

struct PowerState {
  std::vector<double> powers;            // W per user
  std::vector<std::size_t> association;  // serving BS per user
  std::size_t iteration = 0;
  bool converged = true;
};

// Interference seen by `user` at `bs`, normalized by the direct-link gain and
// spread by the processing gain: (sum_{j != user} h[bs][j] p_j + noise_bs)
// / (G h[bs][user]).
double effective_interference(const Scenario& s, const PowerState& st,
                              std::size_t user, std::size_t bs);

// SINR of the user at its serving BS: p_user / effective interference.
double sinr_of(const Scenario& s, const PowerState& st, std::size_t user);

// One application of the power-update function at interference level r.
double puf_apply(const PufParams& params, std::size_t user, double r);

// Candidate serving sets: the fixed association from the scenario, or the
// open-access variant where macro users may attach to any BS while femto
// users stay with their own femto BS.
std::vector<std::vector<std::size_t>> fixed_association(const Scenario& s);
std::vector<std::vector<std::size_t>> open_access_candidates(const Scenario& s);

struct TraceRow {
  std::size_t iteration = 0;
  std::size_t user = 0;
  double power = 0.0;
  double sinr = 0.0;
  std::size_t bs = 0;
  bool supported = false;
};

// Synchronous best-BS-selection + power-update map: every user picks the
// candidate BS with the least effective interference (ties to the lowest BS
// id) and then applies the puf at that interference level.
std::vector<double> power_update(
    const Scenario& s, const PufParams& params,
    const std::vector<std::vector<std::size_t>>& candidates,
    const std::vector<double>& p, std::vector<std::size_t>* chosen_bs = nullptr);

// Iterates power_update from p0 (all zeros when omitted) until the power
// vector moves less than tol in the max norm or max_iter is reached;
// converged reports which. Appends one row per user per iteration to trace
// when given.
PowerState bsa_pc_iterate(const Scenario& s, const PufParams& params,
                          const std::vector<std::vector<std::size_t>>& candidates,
                          double tol, std::size_t max_iter,
                          const std::vector<double>* p0 = nullptr,
                          std::vector<TraceRow>* trace = nullptr);

struct SupportSplit {
  std::vector<std::size_t> supported;
  std::vector<std::size_t> non_supported;
};

// A user is supported when its effective interference at the converged state
// is at most the threshold p_max/target (equivalently, SINR >= target).
SupportSplit classify_supported(const PowerState& st, const PufParams& params,
                                const Scenario& s);

struct AdaptationOptions {
  double scaling = 16.0;        // warning-driven alpha divisor, > 1
  std::size_t inner_cap = 5;    // power updates per outer iteration
  double tol = 1e-8;            // power convergence tolerance
  std::size_t outer_cap = 500;  // outer iteration guard
  std::size_t final_max_iter = 20000;
};

struct AdaptationState {
  std::vector<std::size_t> supported;      // of the final state
  std::vector<std::size_t> non_supported;  // of the final state
  std::size_t best_supported = 0;          // best count seen during the loop
  std::vector<double> best_alpha;          // params achieving that count
  double scaling = 16.0;
  std::size_t inner_cap = 5;
  std::vector<double> terminal_alpha;  // params when the loop settled
  PowerState terminal_state;           // equilibrium before the best reload
  std::size_t outer_iterations = 0;
  bool outer_converged = true;
};

struct AdaptationResult {
  PowerState state;  // better of the terminal and best-reload equilibria
  PufParams final_params;  // params in effect for that final run
  AdaptationState adapt;
  std::vector<TraceRow> trace;  // one row per user per outer iteration
};

// Two-time-scale adaptation: repeatedly equilibrate the hybrid update, then
// lower the opportunistic weights of supported users (within each cell via
// the expected-power rule, across cells via warning-driven scaling) until no
// parameter changes; finally reload the best-seen parameters and converge.
AdaptationResult hpc_adaptation(
    const Scenario& s, const PufParams& init,
    const std::vector<std::vector<std::size_t>>& candidates,
    const AdaptationOptions& opt = {});

// Two-phase target schedule for a femto user under hybrid access.
struct TargetSchedule {
  std::size_t user = 0;
  double low = 0.0;
  double high = 0.0;
};

TargetSchedule hybrid_access_targets(std::size_t user, double low, double high);

struct HybridResult {
  AdaptationResult phase1;
  bool phase2_run = false;
  AdaptationResult phase2;
};

// Runs adaptation with femto users at their low targets; when every femto
// user is supported, rebuilds xi and thresholds at the high targets and runs
// adaptation again.
HybridResult hybrid_access_run(
    const Scenario& s, const PufParams& base,
    const std::vector<std::vector<std::size_t>>& candidates,
    const std::vector<std::size_t>& femto_users, double low, double high,
    const AdaptationOptions& opt = {});

}  // namespace ranopt
