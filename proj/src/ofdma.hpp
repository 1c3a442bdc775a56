// Joint subchannel assignment and power allocation for two-tier OFDMA
// networks. Covers QAM target SINRs, per-subchannel feasibility with
// Pareto-minimal powers, the weight-driven distributed algorithm with
// Hungarian matching (fixed-rate, adaptive-rate, hybrid-access, and downlink
// variants), an exhaustive optimum for small instances, and Jain's fairness
// index.
#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "linalg.hpp"
#include "scenario.hpp"

namespace ranopt {

// Sentinel used by the downlink weight rule: an assignment this expensive is
// treated as forbidden. Finite so matching code never sees inf.
inline constexpr double kInfiniteWeight = 1e30;

// Square-constellation sizes supported for adaptive rate selection.
std::vector<unsigned> default_constellations();  // {4, 16, 64, 256, 1024}

bool is_power_of_four(unsigned s);

// SINR (linear) required to hit the target bit error rate with square s-QAM
// and Gray mapping. Throws std::invalid_argument when s is not a power of
// four or ber is outside (0, 0.5).
double qam_target_sinr(unsigned s, double ber);

struct SubchannelPlan {
  Matrix assign;                 // users x subchannels, entries 0 or 1
  Matrix power;                  // users x subchannels, watts
  std::vector<std::size_t> tau;  // per BS: subchannels per served FUE
  std::size_t iterations = 0;
  bool converged = true;
};

struct FeasibilityResult {
  bool feasible = false;
  Matrix power;  // Pareto-minimal powers when feasible, empty otherwise
};

// Per-user, per-subchannel target SINR table with one value per tier.
Matrix uniform_targets(const Scenario& s, std::size_t n_subchannels,
                       double gamma_macro, double gamma_femto);

// Fixed-assignment feasibility: on every subchannel the co-channel coupling
// must have spectral radius below one, and the resulting Pareto-minimal
// powers must respect every user's total power cap. `serving` overrides the
// scenario association when given (hybrid access moves users).
FeasibilityResult check_sa_feasible(
    const Scenario& s, const std::vector<Matrix>& channel, const Matrix& assign,
    const Matrix& targets, const std::vector<std::size_t>* serving = nullptr);

// Effective interference seen by `user` if received at `bs` on `subchannel`,
// normalized by the direct gain; the user's own signal is excluded. With
// `downlink` set the interferers are the serving base stations of co-channel
// users and noise is taken at the receiving user.
double subchannel_interference(const Scenario& s,
                               const std::vector<Matrix>& channel,
                               const std::vector<std::size_t>& serving,
                               const Matrix& assign, const Matrix& power,
                               std::size_t user, std::size_t bs,
                               std::size_t subchannel, bool downlink = false);

// SINR of a user on one subchannel under the given plan; zero when the
// subchannel is not assigned to the user.
double link_sinr(const Scenario& s, const std::vector<Matrix>& channel,
                 const std::vector<std::size_t>& serving, const Matrix& assign,
                 const Matrix& power, std::size_t user, std::size_t subchannel,
                 bool downlink = false);

// Multiplicative weight scaling state. alpha grows when an assignment keeps
// hurting protected users, theta when it overdraws the per-subchannel power
// share; the third weight branch multiplies theta by mu (set to the
// subchannel count).
struct WeightState {
  Matrix alpha;  // users x subchannels, >= 1
  Matrix theta;  // users x subchannels, >= 1
  double mu = 0.0;
};

// Assignment weight table for the served FUEs of one femtocell: rows follow
// the cell's users in increasing user id, columns are subchannels, entries
// are chi * p_min with the three-branch scaling rule against P_max/tau and
// P_max. Throws std::invalid_argument when tau is zero.
Matrix assignment_weights(const Scenario& s, const std::vector<Matrix>& channel,
                          const Matrix& assign, const Matrix& power,
                          const WeightState& ws, std::size_t cell,
                          std::size_t tau, double gamma);

struct OfdmaParams {
  unsigned qam_macro = 4;
  unsigned qam_femto = 16;
  double target_ber = 1e-3;
  double weight_threshold = 10.0;  // V: matching cost that triggers a downgrade
  std::size_t max_iter = 400;
  double tol = 1e-10;  // power fixed-point stop threshold
  std::vector<unsigned> constellations = default_constellations();
  std::vector<double> bs_power_cap;  // downlink caps; empty = sum of user caps
};

struct RateChoice {
  unsigned qam = 0;
  std::size_t tau = 0;
};

// Candidate (QAM size, tau) pairs for a cell serving n_fues users, sorted by
// decreasing per-FUE rate log2(s)/N * tau with the larger constellation first
// among rate ties, ending with a single zero-allocation sentinel.
std::vector<RateChoice> rate_pair_list(
    const std::vector<unsigned>& constellations, std::size_t n_subchannels,
    std::size_t n_fues);

struct OfdmaTraceRow {
  std::size_t iteration = 0;
  std::size_t cell = 0;
  unsigned qam = 0;
  std::size_t tau = 0;
  double match_weight = 0.0;  // Hungarian total, 0 when no rematch ran
  double min_rate = 0.0;      // worst FUE of the cell, bit/s/Hz
  bool rematched = false;
  std::size_t hosted = 0;  // guest users held at the end of the iteration
  bool advanced = false;   // rate pair (or tau) downgraded this iteration
};

struct AllocResult {
  SubchannelPlan plan;
  Matrix targets;                    // per-user per-subchannel SINR targets
  std::vector<RateChoice> choice;    // per BS; entry 0 reports the macro QAM
  std::vector<std::size_t> serving;  // final association (hybrid moves MUEs)
  std::vector<OfdmaTraceRow> trace;
  double objective = 0.0;  // sum over femtocells of the minimum FUE rate
};

// Fixed-rate uplink allocation: Foschini-Miljanic power updates for MUEs with
// cap scaling and alpha doubling against the worst interferer, per-femtocell
// Hungarian rematching over duplicated virtual FUEs, and tau decrements when
// the matching cost exceeds weight_threshold times the cell's power budget.
AllocResult distributed_uplink_alloc(const Scenario& s,
                                     const std::vector<Matrix>& channel,
                                     const Matrix& macro_assign,
                                     const OfdmaParams& params);

// Adaptive-rate variant: each femtocell walks a list of (QAM size, tau)
// pairs sorted by decreasing per-FUE rate, advancing to the next entry (and
// resetting theta) when the matching cost exceeds the threshold.
AllocResult adaptive_rate_alloc(const Scenario& s,
                                const std::vector<Matrix>& channel,
                                const Matrix& macro_assign,
                                const OfdmaParams& params);

// Adaptive-rate variant with hybrid access: per iteration at most one
// macro-attached MUE moves to the femtocell that can host its fixed
// subchannels at the lowest total power; hosted MUEs return to the macro
// when the host advances its rate pair.
AllocResult hybrid_access_alloc(const Scenario& s,
                                const std::vector<Matrix>& channel,
                                const Matrix& macro_assign,
                                const OfdmaParams& params);

// Downlink allocation: per-BS total power caps replace per-user caps and the
// weight rule has two branches, with kInfiniteWeight marking subchannels
// whose minimum power alone exceeds the serving BS budget.
AllocResult downlink_alloc(const Scenario& s,
                           const std::vector<Matrix>& channel,
                           const Matrix& macro_assign,
                           const OfdmaParams& params);

// Number of equal-share assignments the exhaustive search would visit.
double exhaustive_plan_count(const Scenario& s, std::size_t n_subchannels);

// Exhaustive optimum over all equal-share femtocell assignments, visited in
// decreasing order of total assigned subchannels; returns the first feasible
// plan (which maximizes the fixed-rate objective) and its objective value.
// Throws std::runtime_error when the enumeration would exceed 1e6 plans.
std::pair<SubchannelPlan, double> exhaustive_optimal(
    const Scenario& s, const std::vector<Matrix>& channel,
    const Matrix& macro_assign, const OfdmaParams& params);

// Spectral efficiency per user: rate_unit credited for every assigned
// subchannel whose SINR reaches the target (within a 1e-9 relative slack).
std::vector<double> plan_rates(const Scenario& s,
                               const std::vector<Matrix>& channel,
                               const Matrix& assign, const Matrix& power,
                               const Matrix& targets,
                               const std::vector<double>& rate_unit,
                               const std::vector<std::size_t>& serving,
                               bool downlink = false);

// Jain's index (sum r)^2 / (M * sum r^2) in (0, 1]; throws
// std::invalid_argument when every rate is zero (or the list is empty).
double fairness_index(const std::vector<double>& rates);

// Block macro assignment: MUE j holds subchannels [j*q, (j+1)*q) with
// q = floor(N / #MUEs), matching the evaluation setup.
Matrix spread_macro_assign(const Scenario& s, std::size_t n_subchannels);

}  // namespace ranopt
