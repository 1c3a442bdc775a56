// Weight-driven subchannel assignment and power allocation for two-tier
// OFDMA networks. The distributed allocators share one iteration engine:
// macro users run fixed-assignment power updates with cap scaling and
// interferer penalties, femtocells rematch their users with a Hungarian
// solver over multiplicatively scaled minimum-power weights, and overweight
// matchings push a cell down its rate candidate list.
#include "ofdma.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ranopt {

namespace {

// Ceiling for the multiplicative weight scalers (2^60); doublings stop here
// so hopeless instances cannot overflow while they keep failing honestly.
constexpr double kScaleCap = 1152921504606846976.0;

enum class Mode { fixed, adaptive, hybrid, downlink };

bool macro_tier(const Scenario& s, std::size_t bs) {
  return s.tiers[bs] == Tier::macro_bs;
}

// Users grouped per BS by home association, ascending user id.
std::vector<std::vector<std::size_t>> home_users(const Scenario& s) {
  std::vector<std::vector<std::size_t>> by(s.n_bs());
  for (std::size_t u = 0; u < s.n_users(); ++u)
    by[s.serving_bs[u]].push_back(u);
  return by;
}

double eff_interference(const Scenario& s, const std::vector<Matrix>& channel,
                        const std::vector<std::size_t>& serving,
                        const Matrix& assign, const Matrix& power,
                        std::size_t user, std::size_t bs, std::size_t n,
                        bool downlink) {
  const Matrix& h = channel[n];
  double direct = h(bs, user);
  if (!(direct > 0.0))
    throw std::invalid_argument("ofdma: direct channel gain must be positive");
  double acc = s.noise[bs];
  for (std::size_t j = 0; j < assign.rows; ++j) {
    if (j == user || assign(j, n) != 1.0 || serving[j] == bs) continue;
    double gain = downlink ? h(serving[j], user) : h(bs, j);
    acc += power(j, n) * gain;
  }
  return acc / direct;
}

void check_net(const Scenario& s, const std::vector<Matrix>& channel,
               const Matrix& macro_assign) {
  if (s.n_users() == 0 || s.n_bs() == 0)
    throw std::invalid_argument("ofdma: scenario has no users or stations");
  if (channel.empty())
    throw std::invalid_argument("ofdma: channel tensor is empty");
  for (const Matrix& m : channel)
    if (m.rows != s.n_bs() || m.cols != s.n_users())
      throw std::invalid_argument(
          "ofdma: channel slice dimensions do not match the scenario");
  if (macro_assign.rows != s.n_users() || macro_assign.cols != channel.size())
    throw std::invalid_argument(
        "ofdma: fixed assignment dimensions do not match");
  for (std::size_t u = 0; u < s.n_users(); ++u) {
    bool protected_user = macro_tier(s, s.serving_bs[u]);
    for (std::size_t n = 0; n < macro_assign.cols; ++n) {
      double a = macro_assign(u, n);
      if (a != 0.0 && a != 1.0)
        throw std::invalid_argument(
            "ofdma: fixed assignment entries must be 0 or 1");
      if (!protected_user && a != 0.0)
        throw std::invalid_argument(
            "ofdma: fixed assignment rows belong to macro users only");
    }
  }
  for (std::size_t b = 0; b < s.n_bs(); ++b) {
    if (!macro_tier(s, b)) continue;
    for (std::size_t n = 0; n < macro_assign.cols; ++n) {
      int used = 0;
      for (std::size_t u = 0; u < s.n_users(); ++u)
        if (s.serving_bs[u] == b && macro_assign(u, n) == 1.0) ++used;
      if (used > 1)
        throw std::invalid_argument(
            "ofdma: two users of one macro cell share a subchannel");
    }
  }
  for (std::size_t u = 0; u < s.n_users(); ++u)
    if (!(s.max_power[u] > 0.0))
      throw std::invalid_argument("ofdma: user power caps must be positive");
}

// Three-branch uplink weight table for the listed users of one cell: the
// scaler is alpha alone while the estimated power fits the per-subchannel
// share, alpha*theta while it fits the budget, and alpha*mu*theta beyond it.
Matrix weight_table(const Scenario& s, const std::vector<Matrix>& channel,
                    const std::vector<std::size_t>& serving,
                    const Matrix& assign, const Matrix& power,
                    const WeightState& ws, std::size_t cell,
                    const std::vector<std::size_t>& users, std::size_t tau,
                    double gamma) {
  std::size_t n_sub = channel.size();
  Matrix w(users.size(), n_sub);
  for (std::size_t r = 0; r < users.size(); ++r) {
    std::size_t i = users[r];
    double cap = s.max_power[i];
    double share = cap / static_cast<double>(tau);
    for (std::size_t n = 0; n < n_sub; ++n) {
      double pmin = gamma * eff_interference(s, channel, serving, assign,
                                             power, i, cell, n, false);
      double chi = ws.alpha(i, n);
      if (pmin > cap)
        chi *= ws.mu * ws.theta(i, n);
      else if (pmin > share)
        chi *= ws.theta(i, n);
      w(r, n) = chi * pmin;
    }
  }
  return w;
}

// Downlink weight table: subchannels whose minimum power alone exceeds the
// cell budget are priced out with the finite infinity sentinel.
Matrix weight_table_downlink(const Scenario& s,
                             const std::vector<Matrix>& channel,
                             const std::vector<std::size_t>& serving,
                             const Matrix& assign, const Matrix& power,
                             const WeightState& ws, std::size_t cell,
                             const std::vector<std::size_t>& users,
                             double gamma, double cell_cap) {
  std::size_t n_sub = channel.size();
  Matrix w(users.size(), n_sub);
  for (std::size_t r = 0; r < users.size(); ++r) {
    std::size_t i = users[r];
    for (std::size_t n = 0; n < n_sub; ++n) {
      double pmin = gamma * eff_interference(s, channel, serving, assign,
                                             power, i, cell, n, true);
      w(r, n) = pmin > cell_cap ? kInfiniteWeight : ws.alpha(i, n) * pmin;
    }
  }
  return w;
}

struct MatchOutcome {
  double total = 0.0;
  std::vector<std::vector<std::size_t>> rows;  // per user, sorted subchannels
};

// Equal-share matching: each user appears tau times as a virtual agent, so
// the Hungarian solver hands every user exactly tau distinct subchannels.
MatchOutcome match_cell(const Matrix& w, const std::vector<std::size_t>& avail,
                        std::size_t tau) {
  std::size_t m = w.rows;
  AssignmentProblem prob;
  prob.cost = Matrix(m * tau, avail.size());
  for (std::size_t f = 0; f < m; ++f)
    for (std::size_t c = 0; c < tau; ++c)
      for (std::size_t t = 0; t < avail.size(); ++t)
        prob.cost(f * tau + c, t) = w(f, avail[t]);
  AssignmentResult res = hungarian_min_assign(prob);
  MatchOutcome out;
  out.total = res.total_cost;
  out.rows.assign(m, {});
  for (std::size_t a = 0; a < m * tau; ++a)
    out.rows[a / tau].push_back(avail[res.task_of_agent[a]]);
  for (auto& r : out.rows) std::sort(r.begin(), r.end());
  return out;
}

struct CellState {
  std::vector<RateChoice> pairs;        // rate walk; empty for macro cells
  std::size_t idx = 0;                  // current candidate
  char settled = 0;                     // 1 while no rematch is pending
  std::vector<std::size_t> hosted;      // guest users, admission order
  std::size_t room = 0;                 // subchannels available to guests
};

// Co-channel powers that hit every target exactly satisfy a linear system
// per subchannel. Solving it directly removes the geometric tail the
// iterative update leaves behind, which matters when the coupling spectral
// radius is close to one. Returns false when the system is infeasible or
// the solution breaks a budget, in which case the caller keeps the
// iterated powers.
bool exact_power_solution(const Scenario& s, const std::vector<Matrix>& channel,
                          const Matrix& assign, const Matrix& targets,
                          const std::vector<std::size_t>& serving,
                          bool downlink, const std::vector<double>& bs_cap,
                          Matrix* out) {
  Matrix power(assign.rows, assign.cols);
  for (std::size_t n = 0; n < assign.cols; ++n) {
    std::vector<std::size_t> on;
    for (std::size_t u = 0; u < assign.rows; ++u)
      if (assign(u, n) == 1.0) on.push_back(u);
    if (on.empty()) continue;
    const Matrix& h = channel[n];
    std::size_t c = on.size();
    Matrix coupling(c, c);
    std::vector<double> g(c);
    for (std::size_t a = 0; a < c; ++a) {
      std::size_t bs = serving[on[a]];
      double direct = h(bs, on[a]);
      if (!(direct > 0.0)) return false;
      for (std::size_t b = 0; b < c; ++b) {
        if (a == b || serving[on[b]] == bs) {
          coupling(a, b) = 0.0;
        } else {
          double cross = downlink ? h(serving[on[b]], on[a]) : h(bs, on[b]);
          coupling(a, b) = targets(on[a], n) * cross / direct;
        }
      }
      g[a] = targets(on[a], n) * s.noise[bs] / direct;
    }
    if (spectral_radius(coupling) >= 1.0) return false;
    Matrix sys(c, c);
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b)
        sys(a, b) = (a == b ? 1.0 : 0.0) - coupling(a, b);
    std::vector<double> p;
    try {
      p = solve_linear(sys, g);
    } catch (const singular_matrix_error&) {
      return false;
    }
    for (std::size_t a = 0; a < c; ++a) {
      if (p[a] < 0.0) return false;
      power(on[a], n) = p[a];
    }
  }
  if (downlink) {
    std::vector<double> totals(s.n_bs(), 0.0);
    for (std::size_t u = 0; u < assign.rows; ++u)
      for (std::size_t n = 0; n < assign.cols; ++n)
        totals[serving[u]] += power(u, n);
    for (std::size_t b = 0; b < s.n_bs(); ++b)
      if (totals[b] > bs_cap[b] * (1.0 + 1e-9)) return false;
  } else {
    for (std::size_t u = 0; u < assign.rows; ++u) {
      double total = 0.0;
      for (std::size_t n = 0; n < assign.cols; ++n) total += power(u, n);
      if (total > s.max_power[u] * (1.0 + 1e-9)) return false;
    }
  }
  *out = power;
  return true;
}

AllocResult run_alloc(const Scenario& s, const std::vector<Matrix>& channel,
                      const Matrix& macro_assign, const OfdmaParams& params,
                      Mode mode) {
  check_net(s, channel, macro_assign);
  if (params.max_iter == 0)
    throw std::invalid_argument("ofdma: max_iter must be positive");
  if (!(params.tol > 0.0))
    throw std::invalid_argument("ofdma: tol must be positive");
  if (!(params.weight_threshold > 0.0))
    throw std::invalid_argument("ofdma: weight threshold must be positive");

  const std::size_t n_sub = channel.size();
  const std::size_t n_user = s.n_users();
  const std::size_t n_bs = s.n_bs();
  const bool downlink = (mode == Mode::downlink);
  const bool adaptive = (mode == Mode::adaptive || mode == Mode::hybrid);

  const double gamma_macro =
      qam_target_sinr(params.qam_macro, params.target_ber);
  if (!adaptive) (void)qam_target_sinr(params.qam_femto, params.target_ber);
  if (adaptive) {
    if (params.constellations.empty())
      throw std::invalid_argument("ofdma: constellation list is empty");
    for (unsigned q : params.constellations)
      (void)qam_target_sinr(q, params.target_ber);
  }

  std::vector<double> bs_cap;
  if (downlink) {
    if (params.bs_power_cap.empty()) {
      bs_cap.assign(n_bs, 0.0);
      for (std::size_t u = 0; u < n_user; ++u)
        bs_cap[s.serving_bs[u]] += s.max_power[u];
    } else if (params.bs_power_cap.size() == n_bs) {
      bs_cap = params.bs_power_cap;
      for (double c : bs_cap)
        if (!(c > 0.0))
          throw std::invalid_argument("ofdma: BS power caps must be positive");
    } else {
      throw std::invalid_argument("ofdma: BS power cap list length mismatch");
    }
  }

  auto homes = home_users(s);

  std::vector<CellState> cell(n_bs);
  for (std::size_t k = 0; k < n_bs; ++k) {
    if (macro_tier(s, k) || homes[k].empty()) continue;
    std::size_t m = homes[k].size();
    if (adaptive) {
      cell[k].pairs = rate_pair_list(params.constellations, n_sub, m);
    } else {
      for (std::size_t t = n_sub / m; t >= 1; --t)
        cell[k].pairs.push_back({params.qam_femto, t});
      cell[k].pairs.push_back({params.qam_femto, 0});
    }
  }

  auto pair_gamma = [&](std::size_t k) {
    return qam_target_sinr(cell[k].pairs[cell[k].idx].qam, params.target_ber);
  };

  Matrix assign(n_user, n_sub);
  Matrix power(n_user, n_sub);
  for (std::size_t u = 0; u < n_user; ++u)
    if (macro_tier(s, s.serving_bs[u]))
      for (std::size_t n = 0; n < n_sub; ++n) assign(u, n) = macro_assign(u, n);

  std::vector<std::size_t> serving = s.serving_bs;
  WeightState ws;
  ws.alpha = Matrix(n_user, n_sub, 1.0);
  ws.theta = Matrix(n_user, n_sub, 1.0);
  ws.mu = static_cast<double>(n_sub);

  AllocResult out;
  bool converged = false;
  std::size_t iterations = params.max_iter;

  for (std::size_t it = 1; it <= params.max_iter; ++it) {
    const Matrix prev_assign = assign;
    const Matrix prev_power = power;
    const std::vector<std::size_t> prev_serving = serving;
    bool structural = false;
    bool violation = false;

    // Hybrid admission: at most one macro user moves per iteration, to the
    // femtocell that can host its fixed subchannels at the lowest power.
    if (mode == Mode::hybrid) {
      std::size_t best_k = n_bs, best_i = n_user;
      double best_need = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n_bs; ++k) {
        if (macro_tier(s, k) || cell[k].room == 0) continue;
        std::vector<char> used(n_sub, 0);
        for (std::size_t j = 0; j < n_user; ++j)
          if (prev_serving[j] == k)
            for (std::size_t n = 0; n < n_sub; ++n)
              if (prev_assign(j, n) == 1.0) used[n] = 1;
        for (std::size_t i = 0; i < n_user; ++i) {
          std::size_t home = s.serving_bs[i];
          if (!macro_tier(s, home) || prev_serving[i] != home) continue;
          std::size_t width = 0;
          bool fits = true;
          for (std::size_t n = 0; n < n_sub; ++n) {
            if (macro_assign(i, n) != 1.0) continue;
            ++width;
            if (used[n]) fits = false;
          }
          if (width == 0 || !fits || width > cell[k].room) continue;
          double need_k = 0.0, need_home = 0.0;
          for (std::size_t n = 0; n < n_sub; ++n) {
            if (macro_assign(i, n) != 1.0) continue;
            need_k += gamma_macro *
                      eff_interference(s, channel, prev_serving, prev_assign,
                                       prev_power, i, k, n, false);
            need_home += gamma_macro *
                         eff_interference(s, channel, prev_serving, prev_assign,
                                          prev_power, i, home, n, false);
          }
          if (need_k < std::min(need_home, s.max_power[i]) &&
              need_k < best_need) {
            best_need = need_k;
            best_k = k;
            best_i = i;
          }
        }
      }
      if (best_k < n_bs) {
        serving[best_i] = best_k;
        cell[best_k].hosted.push_back(best_i);
        std::size_t width = 0;
        for (std::size_t n = 0; n < n_sub; ++n)
          if (macro_assign(best_i, n) == 1.0) ++width;
        cell[best_k].room -= width;
        cell[best_k].settled = 0;
        structural = true;
      }
    }

    // Interference bookkeeping for this whole iteration classifies cells by
    // the post-admission association and reads the iteration-start plan.
    const std::vector<std::size_t> snap = serving;

    // Macro-tier power updates toward the protected target.
    if (!downlink) {
      for (std::size_t i = 0; i < n_user; ++i) {
        if (!macro_tier(s, s.serving_bs[i])) continue;
        std::size_t bs = serving[i];
        std::vector<std::size_t> mine;
        std::vector<double> pmin;
        double total = 0.0;
        for (std::size_t n = 0; n < n_sub; ++n) {
          if (assign(i, n) != 1.0) continue;
          double p = gamma_macro *
                     eff_interference(s, channel, snap, prev_assign, prev_power,
                                      i, bs, n, false);
          mine.push_back(n);
          pmin.push_back(p);
          total += p;
        }
        if (mine.empty()) continue;
        double beta = total / s.max_power[i];
        double scale = beta > 1.0 ? 1.0 / beta : 1.0;
        for (std::size_t t = 0; t < mine.size(); ++t)
          power(i, mine[t]) = pmin[t] * scale;
        if (beta <= 1.0) continue;
        violation = true;
        // Penalize the loudest femto-tier interferer on the costliest of this
        // user's co-channel subchannels; its cell must then rematch.
        std::size_t pick = n_sub;
        double top = -1.0;
        for (std::size_t t = 0; t < mine.size(); ++t) {
          std::size_t n = mine[t];
          bool shared = false;
          for (std::size_t j = 0; j < n_user && !shared; ++j)
            shared = j != i && !macro_tier(s, s.serving_bs[j]) &&
                     prev_assign(j, n) == 1.0 && snap[j] != bs;
          if (shared && pmin[t] > top) {
            top = pmin[t];
            pick = n;
          }
        }
        if (pick == n_sub) continue;
        std::size_t worst = n_user;
        double level = -1.0;
        for (std::size_t j = 0; j < n_user; ++j) {
          if (j == i || macro_tier(s, s.serving_bs[j]) ||
              prev_assign(j, pick) != 1.0 || snap[j] == bs)
            continue;
          double lv = prev_power(j, pick) * channel[pick](bs, j);
          if (lv > level) {
            level = lv;
            worst = j;
          }
        }
        if (worst < n_user && ws.alpha(worst, pick) * 2.0 <= kScaleCap) {
          ws.alpha(worst, pick) *= 2.0;
          cell[snap[worst]].settled = 0;
          structural = true;
        }
      }
    } else {
      // Downlink: one transmit budget per macro BS across all of its users.
      for (std::size_t b = 0; b < n_bs; ++b) {
        if (!macro_tier(s, b)) continue;
        std::vector<std::size_t> who, where;
        std::vector<double> pmin;
        double total = 0.0;
        for (std::size_t i : homes[b]) {
          for (std::size_t n = 0; n < n_sub; ++n) {
            if (assign(i, n) != 1.0) continue;
            double p = gamma_macro *
                       eff_interference(s, channel, snap, prev_assign,
                                        prev_power, i, b, n, true);
            who.push_back(i);
            where.push_back(n);
            pmin.push_back(p);
            total += p;
          }
        }
        if (who.empty()) continue;
        double beta = total / bs_cap[b];
        double scale = beta > 1.0 ? 1.0 / beta : 1.0;
        for (std::size_t t = 0; t < who.size(); ++t)
          power(who[t], where[t]) = pmin[t] * scale;
        if (beta <= 1.0) continue;
        violation = true;
        std::size_t pick = who.size();
        double top = -1.0;
        for (std::size_t t = 0; t < who.size(); ++t) {
          bool shared = false;
          for (std::size_t j = 0; j < n_user && !shared; ++j)
            shared = j != who[t] && !macro_tier(s, s.serving_bs[j]) &&
                     prev_assign(j, where[t]) == 1.0 && snap[j] != b;
          if (shared && pmin[t] > top) {
            top = pmin[t];
            pick = t;
          }
        }
        if (pick == who.size()) continue;
        std::size_t victim_user = who[pick], victim_sub = where[pick];
        std::size_t worst = n_user;
        double level = -1.0;
        for (std::size_t j = 0; j < n_user; ++j) {
          if (j == victim_user || macro_tier(s, s.serving_bs[j]) ||
              prev_assign(j, victim_sub) != 1.0 || snap[j] == b)
            continue;
          double lv =
              prev_power(j, victim_sub) * channel[victim_sub](snap[j], victim_user);
          if (lv > level) {
            level = lv;
            worst = j;
          }
        }
        if (worst < n_user && ws.alpha(worst, victim_sub) * 2.0 <= kScaleCap) {
          ws.alpha(worst, victim_sub) *= 2.0;
          cell[snap[worst]].settled = 0;
          structural = true;
        }
      }
    }

    // Femtocell steps: optional rematch or downgrade, then power updates.
    for (std::size_t k = 0; k < n_bs; ++k) {
      if (macro_tier(s, k) || cell[k].pairs.empty()) continue;
      CellState& st = cell[k];
      const std::vector<std::size_t>& fues = homes[k];
      RateChoice cur = st.pairs[st.idx];
      const bool acted = (st.settled == 0);
      bool advanced_now = false;
      bool rematched = false;
      double wtotal = 0.0;

      if (st.settled == 0) {
        if (cur.tau == 0) {
          for (std::size_t i : fues)
            for (std::size_t n = 0; n < n_sub; ++n) {
              if (assign(i, n) != 0.0) structural = true;
              assign(i, n) = 0.0;
              power(i, n) = 0.0;
            }
          st.settled = 1;
        } else {
          std::vector<char> blocked(n_sub, 0);
          for (std::size_t g : st.hosted)
            for (std::size_t n = 0; n < n_sub; ++n)
              if (macro_assign(g, n) == 1.0) blocked[n] = 1;
          std::vector<std::size_t> avail;
          for (std::size_t n = 0; n < n_sub; ++n)
            if (!blocked[n]) avail.push_back(n);

          bool overloaded = avail.size() < fues.size() * cur.tau;
          MatchOutcome mo;
          if (!overloaded) {
            double g_k = pair_gamma(k);
            Matrix w = downlink
                           ? weight_table_downlink(s, channel, snap,
                                                   prev_assign, prev_power, ws,
                                                   k, fues, g_k, bs_cap[k])
                           : weight_table(s, channel, snap, prev_assign,
                                          prev_power, ws, k, fues, cur.tau,
                                          g_k);
            mo = match_cell(w, avail, cur.tau);
            wtotal = mo.total;
          }
          double budget = 0.0;
          if (downlink) {
            budget = bs_cap[k];
          } else {
            for (std::size_t i : fues) budget += s.max_power[i];
          }

          if (overloaded || wtotal > params.weight_threshold * budget) {
            if (st.idx + 1 < st.pairs.size()) st.idx += 1;
            cur = st.pairs[st.idx];
            advanced_now = true;
            structural = true;
            if (adaptive)
              for (std::size_t i : fues)
                for (std::size_t n = 0; n < n_sub; ++n) ws.theta(i, n) = 1.0;
            if (!st.hosted.empty()) {
              for (std::size_t g : st.hosted) serving[g] = s.serving_bs[g];
              st.hosted.clear();
            }
            if (cur.tau == 0) {
              for (std::size_t i : fues)
                for (std::size_t n = 0; n < n_sub; ++n) {
                  assign(i, n) = 0.0;
                  power(i, n) = 0.0;
                }
              st.settled = 1;
            }
            std::size_t need = cur.tau * fues.size();
            st.room = n_sub > need ? n_sub - need : 0;
          } else {
            rematched = true;
            for (std::size_t r = 0; r < fues.size(); ++r) {
              std::size_t i = fues[r];
              std::vector<char> want(n_sub, 0);
              for (std::size_t n : mo.rows[r]) want[n] = 1;
              for (std::size_t n = 0; n < n_sub; ++n) {
                double a = want[n] ? 1.0 : 0.0;
                if (assign(i, n) != a) structural = true;
                assign(i, n) = a;
                if (a == 0.0) power(i, n) = 0.0;
              }
            }
          }
        }
      }

      // Power updates run every iteration the cell has a live plan.
      if (!advanced_now && cur.tau >= 1) {
        double g_k = pair_gamma(k);
        if (!downlink) {
          char all_fit = 1;
          for (std::size_t i : fues) {
            std::vector<std::size_t> mine;
            std::vector<double> pmin;
            double total = 0.0;
            for (std::size_t n = 0; n < n_sub; ++n) {
              if (assign(i, n) != 1.0) continue;
              double p = g_k * eff_interference(s, channel, snap, prev_assign,
                                                prev_power, i, k, n, false);
              mine.push_back(n);
              pmin.push_back(p);
              total += p;
            }
            if (mine.empty()) continue;
            double beta = total / s.max_power[i];
            double scale = beta > 1.0 ? 1.0 / beta : 1.0;
            for (std::size_t t = 0; t < mine.size(); ++t)
              power(i, mine[t]) = pmin[t] * scale;
            if (beta <= 1.0) continue;
            violation = true;
            all_fit = 0;
            std::size_t pick = 0;
            for (std::size_t t = 1; t < mine.size(); ++t)
              if (pmin[t] > pmin[pick]) pick = t;
            if (ws.theta(i, mine[pick]) * 2.0 <= kScaleCap) {
              ws.theta(i, mine[pick]) *= 2.0;
              structural = true;
            }
          }
          st.settled = all_fit;
        } else {
          std::vector<std::size_t> who, where;
          std::vector<double> pmin;
          double total = 0.0;
          for (std::size_t i : fues) {
            for (std::size_t n = 0; n < n_sub; ++n) {
              if (assign(i, n) != 1.0) continue;
              double p = g_k * eff_interference(s, channel, snap, prev_assign,
                                                prev_power, i, k, n, true);
              who.push_back(i);
              where.push_back(n);
              pmin.push_back(p);
              total += p;
            }
          }
          if (!who.empty()) {
            double beta = total / bs_cap[k];
            double scale = beta > 1.0 ? 1.0 / beta : 1.0;
            for (std::size_t t = 0; t < who.size(); ++t)
              power(who[t], where[t]) = pmin[t] * scale;
            if (beta > 1.0) {
              violation = true;
              st.settled = 0;
              std::size_t pick = 0;
              for (std::size_t t = 1; t < who.size(); ++t)
                if (pmin[t] > pmin[pick]) pick = t;
              if (ws.theta(who[pick], where[pick]) * 2.0 <= kScaleCap) {
                ws.theta(who[pick], where[pick]) *= 2.0;
                structural = true;
              }
            } else {
              st.settled = 1;
            }
          }
        }
      }

      // Guest room for the next iteration (hybrid bookkeeping is harmless in
      // the other modes because admission never runs there).
      if (!advanced_now) {
        std::size_t taken = 0;
        for (std::size_t g : st.hosted)
          for (std::size_t n = 0; n < n_sub; ++n)
            if (macro_assign(g, n) == 1.0) ++taken;
        st.room = n_sub > taken ? n_sub - taken : 0;
      }

      if (acted || advanced_now) {
        OfdmaTraceRow row;
        row.iteration = it;
        row.cell = k;
        row.qam = cur.qam;
        row.tau = cur.tau;
        row.match_weight = wtotal;
        row.rematched = rematched;
        row.advanced = advanced_now;
        row.hosted = st.hosted.size();
        if (cur.tau > 0) {
          double unit =
              std::log2(static_cast<double>(cur.qam)) / static_cast<double>(n_sub);
          double g_k = pair_gamma(k);
          double worst = std::numeric_limits<double>::infinity();
          for (std::size_t i : fues) {
            double r = 0.0;
            for (std::size_t n = 0; n < n_sub; ++n)
              if (assign(i, n) == 1.0 &&
                  link_sinr(s, channel, serving, assign, power, i, n,
                            downlink) >= g_k * (1.0 - 1e-9))
                r += unit;
            worst = std::min(worst, r);
          }
          row.min_rate = worst;
        }
        out.trace.push_back(row);
      }
    }

    double maxdiff = 0.0, maxmag = 0.0;
    for (std::size_t u = 0; u < n_user; ++u)
      for (std::size_t n = 0; n < n_sub; ++n) {
        maxdiff = std::max(maxdiff, std::abs(power(u, n) - prev_power(u, n)));
        maxmag = std::max(maxmag, std::abs(power(u, n)));
      }
    if (!structural && !violation &&
        maxdiff <= params.tol * std::max(1.0, maxmag)) {
      converged = true;
      iterations = it;
      break;
    }
  }

  out.plan.assign = assign;
  out.plan.power = power;
  out.plan.iterations = iterations;
  out.plan.converged = converged;
  out.plan.tau.assign(n_bs, 0);
  out.choice.assign(n_bs, RateChoice{0, 0});
  out.serving = serving;

  for (std::size_t k = 0; k < n_bs; ++k) {
    if (macro_tier(s, k)) {
      out.choice[k] = RateChoice{params.qam_macro, 0};
    } else if (!cell[k].pairs.empty()) {
      out.choice[k] = cell[k].pairs[cell[k].idx];
      out.plan.tau[k] = out.choice[k].tau;
    }
  }

  out.targets = Matrix(n_user, n_sub);
  std::vector<double> unit(n_user, 0.0);
  for (std::size_t u = 0; u < n_user; ++u) {
    std::size_t home = s.serving_bs[u];
    double g = macro_tier(s, home) ? gamma_macro : pair_gamma(home);
    for (std::size_t n = 0; n < n_sub; ++n) out.targets(u, n) = g;
    unsigned q = macro_tier(s, home) ? params.qam_macro : out.choice[home].qam;
    unit[u] =
        std::log2(static_cast<double>(q)) / static_cast<double>(n_sub);
  }

  if (converged) {
    Matrix exact;
    if (exact_power_solution(s, channel, assign, out.targets, serving,
                             downlink, bs_cap, &exact)) {
      power = exact;
      out.plan.power = power;
    }
  }

  std::vector<double> rates = plan_rates(s, channel, assign, power,
                                         out.targets, unit, serving, downlink);
  out.objective = 0.0;
  for (std::size_t k = 0; k < n_bs; ++k) {
    if (macro_tier(s, k) || homes[k].empty()) continue;
    if (out.choice[k].tau == 0) continue;
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i : homes[k]) worst = std::min(worst, rates[i]);
    out.objective += worst;
  }
  return out;
}

double choose(std::size_t n, std::size_t k) {
  long double r = 1.0L;
  for (std::size_t t = 1; t <= k; ++t)
    r = r * static_cast<long double>(n - k + t) / static_cast<long double>(t);
  return static_cast<double>(r);
}

// All equal-share assignments of one cell at a given tau: every user in turn
// picks a tau-subset of the still-free subchannels.
void enumerate_cell(std::size_t n_sub, const std::vector<std::size_t>& users,
                    std::size_t tau, std::size_t next,
                    std::vector<char>& free_sub,
                    std::vector<std::vector<std::size_t>>& current,
                    std::vector<std::vector<std::vector<std::size_t>>>& out) {
  if (next == users.size()) {
    out.push_back(current);
    return;
  }
  std::vector<std::size_t> pool;
  for (std::size_t n = 0; n < n_sub; ++n)
    if (free_sub[n]) pool.push_back(n);
  if (pool.size() < tau) return;
  std::vector<std::size_t> pickidx(tau);
  for (std::size_t t = 0; t < tau; ++t) pickidx[t] = t;
  while (true) {
    std::vector<std::size_t> subset(tau);
    for (std::size_t t = 0; t < tau; ++t) subset[t] = pool[pickidx[t]];
    for (std::size_t n : subset) free_sub[n] = 0;
    current[next] = subset;
    enumerate_cell(n_sub, users, tau, next + 1, free_sub, current, out);
    for (std::size_t n : subset) free_sub[n] = 1;
    // advance the combination
    std::size_t t = tau;
    while (t > 0 && pickidx[t - 1] == pool.size() - tau + (t - 1)) --t;
    if (t == 0) break;
    ++pickidx[t - 1];
    for (std::size_t u = t; u < tau; ++u) pickidx[u] = pickidx[u - 1] + 1;
  }
}

}  // namespace

std::vector<unsigned> default_constellations() { return {4, 16, 64, 256, 1024}; }

bool is_power_of_four(unsigned s) {
  if (s < 4) return false;
  while (s % 4 == 0) s /= 4;
  return s == 1;
}

double qam_target_sinr(unsigned s, double ber) {
  if (!is_power_of_four(s))
    throw std::invalid_argument(
        "ofdma: constellation size must be a power of four");
  if (!(ber > 0.0) || ber >= 0.5)
    throw std::invalid_argument("ofdma: bit error rate must lie in (0, 0.5)");
  double sd = static_cast<double>(s);
  double xs = 2.0 * (1.0 - 1.0 / std::sqrt(sd)) / std::log2(sd);
  double ys = 3.0 / (2.0 * (sd - 1.0));
  double q = inverse_q(ber / xs);
  return q * q / ys;
}

Matrix uniform_targets(const Scenario& s, std::size_t n_subchannels,
                       double gamma_macro, double gamma_femto) {
  Matrix t(s.n_users(), n_subchannels);
  for (std::size_t u = 0; u < s.n_users(); ++u) {
    double g = macro_tier(s, s.serving_bs[u]) ? gamma_macro : gamma_femto;
    for (std::size_t n = 0; n < n_subchannels; ++n) t(u, n) = g;
  }
  return t;
}

FeasibilityResult check_sa_feasible(const Scenario& s,
                                    const std::vector<Matrix>& channel,
                                    const Matrix& assign, const Matrix& targets,
                                    const std::vector<std::size_t>* serving) {
  if (channel.empty())
    throw std::invalid_argument("ofdma: channel tensor is empty");
  if (assign.rows != s.n_users() || assign.cols != channel.size() ||
      targets.rows != assign.rows || targets.cols != assign.cols)
    throw std::invalid_argument("ofdma: assignment or target dimensions");
  const std::vector<std::size_t>& who = serving ? *serving : s.serving_bs;

  FeasibilityResult res;
  res.power = Matrix(assign.rows, assign.cols);
  res.feasible =
      exact_power_solution(s, channel, assign, targets, who, false, {},
                           &res.power);
  return res;
}

double subchannel_interference(const Scenario& s,
                               const std::vector<Matrix>& channel,
                               const std::vector<std::size_t>& serving,
                               const Matrix& assign, const Matrix& power,
                               std::size_t user, std::size_t bs,
                               std::size_t subchannel, bool downlink) {
  return eff_interference(s, channel, serving, assign, power, user, bs,
                          subchannel, downlink);
}

double link_sinr(const Scenario& s, const std::vector<Matrix>& channel,
                 const std::vector<std::size_t>& serving, const Matrix& assign,
                 const Matrix& power, std::size_t user, std::size_t subchannel,
                 bool downlink) {
  if (assign(user, subchannel) != 1.0) return 0.0;
  double ieff = eff_interference(s, channel, serving, assign, power, user,
                                 serving[user], subchannel, downlink);
  return power(user, subchannel) / ieff;
}

Matrix assignment_weights(const Scenario& s, const std::vector<Matrix>& channel,
                          const Matrix& assign, const Matrix& power,
                          const WeightState& ws, std::size_t cell,
                          std::size_t tau, double gamma) {
  if (cell >= s.n_bs())
    throw std::invalid_argument("ofdma: cell index out of range");
  std::vector<std::size_t> users;
  for (std::size_t u = 0; u < s.n_users(); ++u)
    if (s.serving_bs[u] == cell) users.push_back(u);
  if (tau == 0 || tau * users.size() > channel.size())
    throw std::invalid_argument(
        "ofdma: per-user share must be at least one subchannel and fit the band");
  return weight_table(s, channel, s.serving_bs, assign, power, ws, cell, users,
                      tau, gamma);
}

std::vector<RateChoice> rate_pair_list(
    const std::vector<unsigned>& constellations, std::size_t n_subchannels,
    std::size_t n_fues) {
  if (constellations.empty())
    throw std::invalid_argument("ofdma: constellation list is empty");
  unsigned smallest = constellations.front();
  for (unsigned q : constellations) {
    if (!is_power_of_four(q))
      throw std::invalid_argument(
          "ofdma: constellation size must be a power of four");
    smallest = std::min(smallest, q);
  }
  std::vector<RateChoice> list;
  if (n_fues > 0) {
    std::size_t tau_max = n_subchannels / n_fues;
    for (unsigned q : constellations)
      for (std::size_t t = 1; t <= tau_max; ++t) list.push_back({q, t});
  }
  std::sort(list.begin(), list.end(), [](const RateChoice& a,
                                         const RateChoice& b) {
    double ra = std::log2(static_cast<double>(a.qam)) * static_cast<double>(a.tau);
    double rb = std::log2(static_cast<double>(b.qam)) * static_cast<double>(b.tau);
    if (ra != rb) return ra > rb;
    if (a.qam != b.qam) return a.qam > b.qam;
    return a.tau < b.tau;
  });
  list.push_back({smallest, 0});
  return list;
}

AllocResult distributed_uplink_alloc(const Scenario& s,
                                     const std::vector<Matrix>& channel,
                                     const Matrix& macro_assign,
                                     const OfdmaParams& params) {
  return run_alloc(s, channel, macro_assign, params, Mode::fixed);
}

AllocResult adaptive_rate_alloc(const Scenario& s,
                                const std::vector<Matrix>& channel,
                                const Matrix& macro_assign,
                                const OfdmaParams& params) {
  return run_alloc(s, channel, macro_assign, params, Mode::adaptive);
}

AllocResult hybrid_access_alloc(const Scenario& s,
                                const std::vector<Matrix>& channel,
                                const Matrix& macro_assign,
                                const OfdmaParams& params) {
  return run_alloc(s, channel, macro_assign, params, Mode::hybrid);
}

AllocResult downlink_alloc(const Scenario& s,
                           const std::vector<Matrix>& channel,
                           const Matrix& macro_assign,
                           const OfdmaParams& params) {
  return run_alloc(s, channel, macro_assign, params, Mode::downlink);
}

double exhaustive_plan_count(const Scenario& s, std::size_t n_subchannels) {
  auto homes = home_users(s);
  long double total = 1.0L;
  for (std::size_t k = 0; k < s.n_bs(); ++k) {
    if (macro_tier(s, k) || homes[k].empty()) continue;
    std::size_t m = homes[k].size();
    long double per = 0.0L;
    for (std::size_t tau = 0; tau * m <= n_subchannels; ++tau) {
      long double ways = 1.0L;
      std::size_t left = n_subchannels;
      for (std::size_t f = 0; f < m; ++f) {
        ways *= static_cast<long double>(choose(left, tau));
        left -= tau;
      }
      per += ways;
    }
    total *= per;
    if (total > 1e300L) return std::numeric_limits<double>::infinity();
  }
  return static_cast<double>(total);
}

std::pair<SubchannelPlan, double> exhaustive_optimal(
    const Scenario& s, const std::vector<Matrix>& channel,
    const Matrix& macro_assign, const OfdmaParams& params) {
  check_net(s, channel, macro_assign);
  const std::size_t n_sub = channel.size();
  double count = exhaustive_plan_count(s, n_sub);
  if (!(count <= 1e6))
    throw std::runtime_error(
        "ofdma: exhaustive search would exceed the plan budget");

  const double gm = qam_target_sinr(params.qam_macro, params.target_ber);
  const double gf = qam_target_sinr(params.qam_femto, params.target_ber);
  const double r_unit =
      std::log2(static_cast<double>(params.qam_femto)) /
      static_cast<double>(n_sub);
  Matrix targets = uniform_targets(s, n_sub, gm, gf);

  auto homes = home_users(s);
  std::vector<std::size_t> cells;
  for (std::size_t k = 0; k < s.n_bs(); ++k)
    if (!macro_tier(s, k) && !homes[k].empty()) cells.push_back(k);

  // Per cell and per tau: every way to hand each user that many subchannels.
  std::vector<std::vector<std::vector<std::vector<std::vector<std::size_t>>>>>
      options(cells.size());
  std::vector<std::size_t> tau_max(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& users = homes[cells[c]];
    tau_max[c] = n_sub / users.size();
    options[c].resize(tau_max[c] + 1);
    for (std::size_t tau = 0; tau <= tau_max[c]; ++tau) {
      if (tau == 0) {
        options[c][0].push_back(
            std::vector<std::vector<std::size_t>>(users.size()));
        continue;
      }
      std::vector<char> free_sub(n_sub, 1);
      std::vector<std::vector<std::size_t>> current(users.size());
      enumerate_cell(n_sub, users, tau, 0, free_sub, current, options[c][tau]);
    }
  }

  // Visit tau tuples by decreasing total share.
  std::vector<std::vector<std::size_t>> tuples{{}};
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& t : tuples)
      for (std::size_t tau = 0; tau <= tau_max[c]; ++tau) {
        auto ext = t;
        ext.push_back(tau);
        next.push_back(std::move(ext));
      }
    tuples = std::move(next);
  }
  std::sort(tuples.begin(), tuples.end(),
            [](const std::vector<std::size_t>& a,
               const std::vector<std::size_t>& b) {
              std::size_t sa = 0, sb = 0;
              for (std::size_t v : a) sa += v;
              for (std::size_t v : b) sb += v;
              if (sa != sb) return sa > sb;
              return a > b;
            });

  SubchannelPlan plan;
  plan.assign = Matrix(s.n_users(), n_sub);
  plan.power = Matrix(s.n_users(), n_sub);
  plan.tau.assign(s.n_bs(), 0);
  for (std::size_t u = 0; u < s.n_users(); ++u)
    if (macro_tier(s, s.serving_bs[u]))
      for (std::size_t n = 0; n < n_sub; ++n)
        plan.assign(u, n) = macro_assign(u, n);

  Matrix assign = plan.assign;
  for (const auto& tuple : tuples) {
    std::vector<std::size_t> pick(cells.size(), 0);
    bool more = true;
    while (more) {
      // build the candidate assignment
      Matrix cand = assign;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& users = homes[cells[c]];
        const auto& rows = options[c][tuple[c]][pick[c]];
        for (std::size_t r = 0; r < users.size(); ++r)
          for (std::size_t n : rows[r]) cand(users[r], n) = 1.0;
      }
      FeasibilityResult feas = check_sa_feasible(s, channel, cand, targets);
      if (feas.feasible) {
        plan.assign = cand;
        plan.power = feas.power;
        double objective = 0.0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
          plan.tau[cells[c]] = tuple[c];
          objective += r_unit * static_cast<double>(tuple[c]);
        }
        plan.converged = true;
        return {plan, objective};
      }
      // next combination of per-cell options
      std::size_t c = 0;
      while (c < cells.size()) {
        if (++pick[c] < options[c][tuple[c]].size()) break;
        pick[c] = 0;
        ++c;
      }
      more = c < cells.size();
    }
  }
  plan.converged = false;
  return {plan, 0.0};
}

std::vector<double> plan_rates(const Scenario& s,
                               const std::vector<Matrix>& channel,
                               const Matrix& assign, const Matrix& power,
                               const Matrix& targets,
                               const std::vector<double>& rate_unit,
                               const std::vector<std::size_t>& serving,
                               bool downlink) {
  if (rate_unit.size() != s.n_users() || serving.size() != s.n_users())
    throw std::invalid_argument("ofdma: per-user vector length mismatch");
  std::vector<double> rates(s.n_users(), 0.0);
  for (std::size_t u = 0; u < s.n_users(); ++u)
    for (std::size_t n = 0; n < assign.cols; ++n)
      if (assign(u, n) == 1.0 &&
          link_sinr(s, channel, serving, assign, power, u, n, downlink) >=
              targets(u, n) * (1.0 - 1e-9))
        rates[u] += rate_unit[u];
  return rates;
}

double fairness_index(const std::vector<double>& rates) {
  double sum = 0.0, sumsq = 0.0;
  for (double r : rates) {
    sum += r;
    sumsq += r * r;
  }
  if (rates.empty() || sumsq == 0.0)
    throw std::invalid_argument(
        "ofdma: fairness index needs at least one nonzero rate");
  return sum * sum / (static_cast<double>(rates.size()) * sumsq);
}

Matrix spread_macro_assign(const Scenario& s, std::size_t n_subchannels) {
  Matrix a(s.n_users(), n_subchannels);
  for (std::size_t b = 0; b < s.n_bs(); ++b) {
    if (!macro_tier(s, b)) continue;
    std::vector<std::size_t> users;
    for (std::size_t u = 0; u < s.n_users(); ++u)
      if (s.serving_bs[u] == b) users.push_back(u);
    if (users.empty()) continue;
    std::size_t q = n_subchannels / users.size();
    for (std::size_t j = 0; j < users.size(); ++j)
      for (std::size_t n = j * q; n < (j + 1) * q; ++n) a(users[j], n) = 1.0;
  }
  return a;
}

}  // namespace ranopt
