#include "powerctl.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ranopt {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_params(const PufParams& p, std::size_t n_users) {
  require(p.alpha.size() == n_users && p.xi.size() == n_users &&
              p.target.size() == n_users && p.p_max.size() == n_users,
          "puf params: per-user vectors must match the user count");
  require(p.x_exponent > 0.0 && p.x_exponent <= 0.5,
          "puf params: exponent must lie in (0, 1/2]");
  for (std::size_t i = 0; i < n_users; ++i) {
    require(std::isfinite(p.alpha[i]) && p.alpha[i] >= 0.0,
            "puf params: alpha must be finite and non-negative");
    require(p.xi[i] > 0.0, "puf params: xi must be positive");
    require(p.target[i] > 0.0, "puf params: target must be positive");
    require(p.p_max[i] > 0.0, "puf params: p_max must be positive");
  }
}

void check_candidates(const std::vector<std::vector<std::size_t>>& cands,
                      std::size_t n_users, std::size_t n_bs) {
  require(cands.size() == n_users, "candidates: one set per user required");
  for (const auto& set : cands) {
    require(!set.empty(), "candidates: sets must be non-empty");
    for (std::size_t k : set)
      require(k < n_bs, "candidates: BS id out of range");
  }
}

// Weights below this are indistinguishable from zero at the solver tolerance;
// snapping lets the adaptation loop settle in finitely many steps.
constexpr double kAlphaFloor = 1e-12;

}  // namespace

double derive_xi(double p_max, double target, double x_exponent) {
  require(p_max > 0.0 && target > 0.0, "derive_xi: p_max and target positive");
  require(x_exponent > 0.0 && x_exponent <= 0.5,
          "derive_xi: exponent must lie in (0, 1/2]");
  return std::pow(p_max / std::pow(target, x_exponent),
                  1.0 / (1.0 - x_exponent));
}

void auto_derive_xi(PufParams& params) {
  params.xi.resize(params.p_max.size());
  for (std::size_t i = 0; i < params.p_max.size(); ++i)
    params.xi[i] = derive_xi(params.p_max[i], params.target[i], params.x_exponent);
}

double effective_interference(const Scenario& s, const PowerState& st,
                              std::size_t user, std::size_t bs) {
  if (user >= s.n_users()) throw std::out_of_range("unknown user id");
  if (bs >= s.n_bs()) throw std::out_of_range("unknown BS id");
  double acc = s.noise[bs];
  for (std::size_t j = 0; j < s.n_users(); ++j)
    if (j != user) acc += s.gains(bs, j) * st.powers[j];
  return acc / (s.processing_gain * s.gains(bs, user));
}

double sinr_of(const Scenario& s, const PowerState& st, std::size_t user) {
  return st.powers[user] /
         effective_interference(s, st, user, st.association[user]);
}

double puf_apply(const PufParams& params, std::size_t user, double r) {
  if (user >= params.target.size()) throw std::out_of_range("unknown user id");
  require(r > 0.0, "puf_apply: effective interference must be positive");
  const double p_max = params.p_max[user];
  const double tracking = params.target[user] * r;
  if (params.kind == PufKind::tpc) return std::min(p_max, tracking);
  const double x = params.x_exponent;
  const double opportunistic =
      params.xi[user] * std::pow(r, x / (x - 1.0));
  if (params.kind == PufKind::opc) return std::min(p_max, opportunistic);
  const double a = params.alpha[user];
  return std::min(p_max, (a * opportunistic + tracking) / (a + 1.0));
}

std::vector<std::vector<std::size_t>> fixed_association(const Scenario& s) {
  std::vector<std::vector<std::size_t>> out(s.n_users());
  for (std::size_t i = 0; i < s.n_users(); ++i) out[i] = {s.serving_bs[i]};
  return out;
}

std::vector<std::vector<std::size_t>> open_access_candidates(const Scenario& s) {
  std::vector<std::size_t> all(s.n_bs());
  for (std::size_t k = 0; k < s.n_bs(); ++k) all[k] = k;
  std::vector<std::vector<std::size_t>> out(s.n_users());
  for (std::size_t i = 0; i < s.n_users(); ++i) {
    const std::size_t home = s.serving_bs[i];
    if (home < s.tiers.size() && s.tiers[home] == Tier::femto)
      out[i] = {home};  // femto users stay put
    else
      out[i] = all;
  }
  return out;
}

std::vector<double> power_update(
    const Scenario& s, const PufParams& params,
    const std::vector<std::vector<std::size_t>>& candidates,
    const std::vector<double>& p, std::vector<std::size_t>* chosen_bs) {
  const std::size_t n = s.n_users(), n_bs = s.n_bs();
  check_params(params, n);
  check_candidates(candidates, n, n_bs);
  require(p.size() == n, "power_update: power vector size mismatch");

  // Total received power per BS; a user's own contribution is removed below.
  std::vector<double> load(n_bs);
  for (std::size_t k = 0; k < n_bs; ++k) {
    double acc = s.noise[k];
    for (std::size_t j = 0; j < n; ++j) acc += s.gains(k, j) * p[j];
    load[k] = acc;
  }
  if (chosen_bs) chosen_bs->assign(n, 0);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best_r = 0.0;
    std::size_t best_k = 0;
    bool first = true;
    for (std::size_t k : candidates[i]) {
      const double direct = s.gains(k, i);
      const double r = (load[k] - direct * p[i] + 0.0) /
                       (s.processing_gain * direct);
      if (first || r < best_r || (r == best_r && k < best_k)) {
        best_r = r;
        best_k = k;
        first = false;
      }
    }
    out[i] = puf_apply(params, i, best_r);
    if (chosen_bs) (*chosen_bs)[i] = best_k;
  }
  return out;
}

PowerState bsa_pc_iterate(const Scenario& s, const PufParams& params,
                          const std::vector<std::vector<std::size_t>>& candidates,
                          double tol, std::size_t max_iter,
                          const std::vector<double>* p0,
                          std::vector<TraceRow>* trace) {
  require(tol > 0.0, "bsa_pc_iterate: tol must be positive");
  PowerState st;
  st.powers = p0 ? *p0 : std::vector<double>(s.n_users(), 0.0);
  require(st.powers.size() == s.n_users(), "bsa_pc_iterate: bad initial powers");
  st.association = s.serving_bs;
  st.converged = false;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    const auto next = power_update(s, params, candidates, st.powers,
                                   &st.association);
    double delta = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i)
      delta = std::max(delta, std::abs(next[i] - st.powers[i]));
    st.powers = next;
    st.iteration = it;
    if (trace) {
      const auto split = classify_supported(st, params, s);
      std::vector<bool> ok(s.n_users(), false);
      for (std::size_t i : split.supported) ok[i] = true;
      for (std::size_t i = 0; i < s.n_users(); ++i)
        trace->push_back({it, i, st.powers[i], sinr_of(s, st, i),
                          st.association[i], ok[i]});
    }
    if (delta <= tol) {
      st.converged = true;
      break;
    }
  }
  return st;
}

SupportSplit classify_supported(const PowerState& st, const PufParams& params,
                                const Scenario& s) {
  check_params(params, s.n_users());
  SupportSplit split;
  for (std::size_t i = 0; i < s.n_users(); ++i) {
    const double r = effective_interference(s, st, i, st.association[i]);
    const double r_th = params.p_max[i] / params.target[i];
    // Boundary counts as supported; the relative slack absorbs the rounding
    // of the two divisions.
    if (r <= r_th * (1.0 + 1e-9))
      split.supported.push_back(i);
    else
      split.non_supported.push_back(i);
  }
  return split;
}

AdaptationResult hpc_adaptation(
    const Scenario& s, const PufParams& init,
    const std::vector<std::vector<std::size_t>>& candidates,
    const AdaptationOptions& opt) {
  const std::size_t n = s.n_users();
  check_params(init, n);
  check_candidates(candidates, n, s.n_bs());
  require(opt.scaling > 1.0, "adaptation: scaling factor must exceed 1");
  require(opt.inner_cap >= 1, "adaptation: inner cap must be at least 1");

  PufParams params = init;
  params.kind = PufKind::hpc;

  AdaptationResult res;
  res.adapt.scaling = opt.scaling;
  res.adapt.inner_cap = opt.inner_cap;
  res.adapt.best_supported = 0;
  res.adapt.best_alpha = params.alpha;

  PowerState cur;
  cur.powers.assign(n, 0.0);
  cur.association = s.serving_bs;
  std::vector<double> best_powers = cur.powers;

  bool settled = false;
  std::size_t outer = 0;
  while (outer < opt.outer_cap && !settled) {
    ++outer;
    // Small time scale: a bounded number of power updates.
    bool inner_converged = false;
    for (std::size_t t = 0; t < opt.inner_cap; ++t) {
      const auto next =
          power_update(s, params, candidates, cur.powers, &cur.association);
      double delta = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        delta = std::max(delta, std::abs(next[i] - cur.powers[i]));
      cur.powers = next;
      ++cur.iteration;
      if (delta <= opt.tol) {
        inner_converged = true;
        break;
      }
    }
    if (inner_converged) {
      // One small step does not certify a fixed point: a best-BS switch makes
      // the update map discontinuous, so the iteration can crawl through a
      // plateau and then jump. Run it out fully before classifying, so every
      // exit decision is taken at a genuine equilibrium.
      PowerState full = bsa_pc_iterate(s, params, candidates, opt.tol,
                                       opt.final_max_iter, &cur.powers);
      full.iteration += cur.iteration;
      cur = full;
      inner_converged = full.converged;
    }
    const auto split = classify_supported(cur, params, s);
    std::vector<bool> ok(n, false);
    for (std::size_t i : split.supported) ok[i] = true;
    for (std::size_t i = 0; i < n; ++i)
      res.trace.push_back({outer, i, cur.powers[i], sinr_of(s, cur, i),
                           cur.association[i], ok[i]});
    if (split.supported.size() > res.adapt.best_supported) {
      res.adapt.best_supported = split.supported.size();
      res.adapt.best_alpha = params.alpha;
      best_powers = cur.powers;
    }
    // Exit decisions are made at true equilibria only; a capped-out inner
    // loop keeps converging across further outer rounds.
    if (inner_converged &&
        (split.supported.empty() || split.non_supported.empty())) {
      settled = true;
      break;
    }

    // Updating process: per-cell weight reduction plus warning-driven
    // global scaling.
    std::vector<double> r_i(n), r_th(n);
    for (std::size_t i = 0; i < n; ++i) {
      r_i[i] = effective_interference(s, cur, i, cur.association[i]);
      r_th[i] = params.p_max[i] / params.target[i];
    }
    std::vector<std::vector<std::size_t>> cell(s.n_bs());
    for (std::size_t i = 0; i < n; ++i) cell[cur.association[i]].push_back(i);

    // A cell with unsupported users and no weight left to give asks the rest
    // of the network for help.
    bool warning = false;
    for (std::size_t k = 0; k < s.n_bs() && !warning; ++k) {
      bool has_weak = false, has_weight = false;
      for (std::size_t i : cell[k]) {
        if (!ok[i]) has_weak = true;
        if (ok[i] && params.alpha[i] > 0.0) has_weight = true;
      }
      if (has_weak && !has_weight) warning = true;
    }

    std::vector<double> next_alpha = params.alpha;
    const double x = params.x_exponent;
    for (std::size_t k = 0; k < s.n_bs(); ++k) {
      bool has_weak = false;
      double beta_max = 0.0;
      for (std::size_t i : cell[k])
        if (!ok[i]) {
          has_weak = true;
          beta_max = std::max(beta_max, (r_i[i] - r_th[i]) / r_i[i]);
        }
      for (std::size_t i : cell[k]) {
        if (!ok[i] || params.alpha[i] == 0.0) continue;  // keep weak and voice
        double updated;
        if (has_weak) {
          const double floor_p = r_i[i] * params.target[i];
          const double p_exp =
              std::max(cur.powers[i] * (1.0 - beta_max), floor_p);
          const double denom =
              params.xi[i] * std::pow(r_i[i], x / (x - 1.0)) - p_exp;
          updated = denom > 0.0 ? (p_exp - floor_p) / denom : params.alpha[i];
          updated = std::min(updated, params.alpha[i]);
          if (warning) updated /= opt.scaling;
        } else {
          updated = warning ? params.alpha[i] / opt.scaling : params.alpha[i];
        }
        if (updated <= kAlphaFloor) updated = 0.0;
        next_alpha[i] = updated;
      }
    }
    const bool changed = next_alpha != params.alpha;
    params.alpha = next_alpha;
    if (!changed && inner_converged) settled = true;
  }

  res.adapt.outer_iterations = outer;
  res.adapt.outer_converged = settled;
  res.adapt.terminal_alpha = params.alpha;
  res.adapt.terminal_state = cur;

  // Reload the best-seen weights and run the power iteration out from the
  // state they were recorded at: restarting elsewhere could settle in a
  // different equilibrium than the one the best count was observed in. The
  // best may still have been a transient, so keep the terminal equilibrium
  // instead when it supports more users.
  PufParams best_params = params;
  best_params.alpha = res.adapt.best_alpha;
  const PowerState best_state = bsa_pc_iterate(
      s, best_params, candidates, opt.tol, opt.final_max_iter, &best_powers);
  const auto best_split = classify_supported(best_state, best_params, s);
  const auto term_split = classify_supported(cur, params, s);
  if (best_split.supported.size() >= term_split.supported.size()) {
    res.state = best_state;
    res.final_params = best_params;
  } else {
    res.state = cur;
    res.final_params = params;
  }
  const auto split = classify_supported(res.state, res.final_params, s);
  res.adapt.supported = split.supported;
  res.adapt.non_supported = split.non_supported;
  std::vector<bool> ok(n, false);
  for (std::size_t i : split.supported) ok[i] = true;
  for (std::size_t i = 0; i < n; ++i)
    res.trace.push_back({outer + 1, i, res.state.powers[i],
                         sinr_of(s, res.state, i), res.state.association[i],
                         ok[i]});
  return res;
}

TargetSchedule hybrid_access_targets(std::size_t user, double low, double high) {
  require(low > 0.0, "hybrid targets: low target must be positive");
  require(low < high, "hybrid targets: need low < high");
  return {user, low, high};
}

HybridResult hybrid_access_run(
    const Scenario& s, const PufParams& base,
    const std::vector<std::vector<std::size_t>>& candidates,
    const std::vector<std::size_t>& femto_users, double low, double high,
    const AdaptationOptions& opt) {
  check_params(base, s.n_users());
  for (std::size_t u : femto_users)
    require(u < s.n_users(), "hybrid access: unknown femto user id");
  require(low > 0.0 && low < high, "hybrid access: need 0 < low < high");

  HybridResult res;
  PufParams phase = base;
  for (std::size_t u : femto_users) phase.target[u] = low;
  auto_derive_xi(phase);
  res.phase1 = hpc_adaptation(s, phase, candidates, opt);

  const auto split =
      classify_supported(res.phase1.state, res.phase1.final_params, s);
  std::vector<bool> ok(s.n_users(), false);
  for (std::size_t i : split.supported) ok[i] = true;
  for (std::size_t u : femto_users)
    if (!ok[u]) return res;  // phase one failed: stay at the low target

  res.phase2_run = true;
  phase = base;
  for (std::size_t u : femto_users) phase.target[u] = high;
  auto_derive_xi(phase);
  res.phase2 = hpc_adaptation(s, phase, candidates, opt);
  return res;
}

}  // namespace ranopt
