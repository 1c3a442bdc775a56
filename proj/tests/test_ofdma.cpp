#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "ofdma.hpp"
#include "scenario.hpp"

namespace {

using namespace ranopt;

// Independent target-SINR computation straight from the tail inverse.
double sinr_oracle(unsigned s, double ber) {
  double bits = std::log2(static_cast<double>(s));
  double xs = 2.0 * (1.0 - 1.0 / std::sqrt(static_cast<double>(s))) / bits;
  double ys = 3.0 / (2.0 * (static_cast<double>(s) - 1.0));
  double q = inverse_q(ber / xs);
  return q * q / ys;
}

// One macro BS plus a femtocell per entry of `fues`, with every serving link
// at gain `direct` and every other link at `cross`. Positions are filler;
// the explicit gain table is what the tests rely on.
Scenario grid_net(std::size_t n_mues, const std::vector<std::size_t>& fues,
                  double direct, double cross, double max_power = 0.01,
                  double noise = 1e-13) {
  Scenario s;
  s.bs_positions.push_back({0.0, 0.0});
  s.tiers.push_back(Tier::macro_bs);
  s.noise.push_back(noise);
  for (std::size_t k = 0; k < fues.size(); ++k) {
    s.bs_positions.push_back({200.0 * static_cast<double>(k + 1), 0.0});
    s.tiers.push_back(Tier::femto);
    s.noise.push_back(noise);
  }
  for (std::size_t u = 0; u < n_mues; ++u) {
    s.user_positions.push_back({1.0 + static_cast<double>(u), 2.0});
    s.serving_bs.push_back(0);
    s.max_power.push_back(max_power);
  }
  for (std::size_t k = 0; k < fues.size(); ++k) {
    for (std::size_t j = 0; j < fues[k]; ++j) {
      s.user_positions.push_back(
          {200.0 * static_cast<double>(k + 1), 1.0 + static_cast<double>(j)});
      s.serving_bs.push_back(k + 1);
      s.max_power.push_back(max_power);
    }
  }
  s.gains = Matrix(s.n_bs(), s.n_users());
  for (std::size_t b = 0; b < s.n_bs(); ++b)
    for (std::size_t u = 0; u < s.n_users(); ++u)
      s.gains(b, u) = (s.serving_bs[u] == b) ? direct : cross;
  s.processing_gain = 1.0;
  s.femto_radius = 0.0;
  s.rng_seed = 0;
  return s;
}

std::vector<Matrix> flat_channel(const Scenario& s, std::size_t n) {
  return std::vector<Matrix>(n, s.gains);
}

// Compact two-tier disk where both tiers can reach their targets: macro
// users sit close enough to the macro BS that protection is attainable,
// while cross-tier interference still dominates the noise floor.
ScenarioConfig ch4_cfg(std::uint64_t seed, std::size_t n_mues,
                       std::size_t n_femtos, std::size_t fue_lo,
                       std::size_t fue_hi) {
  ScenarioConfig c;
  c.layout = Layout::hetnet_disks;
  c.seed = seed;
  c.r1 = 60.0;
  c.r2 = 20.0;
  c.n_mues = n_mues;
  c.n_femtos = n_femtos;
  c.fue_min = fue_lo;
  c.fue_max = fue_hi;
  c.noise_w = 1e-15;
  c.max_power_w = 0.01;
  c.wall_db = 5.0;
  c.macro_a = 36.0;
  c.macro_b = 40.0;
  c.femto_a = 25.0;
  c.femto_b = 45.0;
  return c;
}

std::vector<std::vector<std::size_t>> users_by_cell(const Scenario& s) {
  std::vector<std::vector<std::size_t>> by(s.n_bs());
  for (std::size_t u = 0; u < s.n_users(); ++u) by[s.serving_bs[u]].push_back(u);
  return by;
}

void check_exclusive(const Scenario& s, const Matrix& assign,
                     const std::vector<std::size_t>& serving) {
  for (std::size_t b = 0; b < s.n_bs(); ++b) {
    for (std::size_t n = 0; n < assign.cols; ++n) {
      int used = 0;
      for (std::size_t u = 0; u < s.n_users(); ++u) {
        double a = assign(u, n);
        REQUIRE((a == 0.0 || a == 1.0));
        if (serving[u] == b && a == 1.0) ++used;
      }
      CHECK(used <= 1);
    }
  }
}

std::vector<double> unit_table(const Scenario& s,
                               const std::vector<RateChoice>& choice,
                               std::size_t n) {
  std::vector<double> unit(s.n_users(), 0.0);
  for (std::size_t u = 0; u < s.n_users(); ++u) {
    unsigned q = choice[s.serving_bs[u]].qam;
    unit[u] = q ? std::log2(static_cast<double>(q)) / static_cast<double>(n) : 0.0;
  }
  return unit;
}

// Per-subchannel Pareto powers recomputed from scratch for a finished plan.
bool pareto_reference(const Scenario& s, const std::vector<Matrix>& ch,
                      const Matrix& assign, const Matrix& targets,
                      Matrix* out) {
  *out = Matrix(assign.rows, assign.cols);
  for (std::size_t n = 0; n < assign.cols; ++n) {
    std::vector<std::size_t> on;
    for (std::size_t u = 0; u < assign.rows; ++u)
      if (assign(u, n) == 1.0) on.push_back(u);
    if (on.empty()) continue;
    std::size_t c = on.size();
    Matrix sys(c, c);
    std::vector<double> g(c);
    for (std::size_t i = 0; i < c; ++i) {
      std::size_t bi = s.serving_bs[on[i]];
      double hd = ch[n](bi, on[i]);
      for (std::size_t j = 0; j < c; ++j)
        sys(i, j) = (i == j) ? 1.0
                             : -targets(on[i], n) * ch[n](bi, on[j]) / hd;
      g[i] = targets(on[i], n) * s.noise[bi] / hd;
    }
    std::vector<double> p;
    try {
      p = solve_linear(sys, g);
    } catch (const singular_matrix_error&) {
      return false;
    }
    for (std::size_t i = 0; i < c; ++i) {
      if (p[i] < 0.0) return false;
      (*out)(on[i], n) = p[i];
    }
  }
  return true;
}

}  // namespace

TEST_CASE("qam target SINR matches the tail-inverse oracle") {
  double g4 = qam_target_sinr(4, 1e-3);
  CHECK(g4 == doctest::Approx(sinr_oracle(4, 1e-3)).epsilon(1e-12));
  CHECK(g4 == doctest::Approx(16.57).epsilon(5e-3));
  double g16 = qam_target_sinr(16, 1e-3);
  CHECK(g16 == doctest::Approx(sinr_oracle(16, 1e-3)).epsilon(1e-12));
  CHECK(g16 == doctest::Approx(77.6).epsilon(1e-2));

  auto sizes = default_constellations();
  REQUIRE(sizes == std::vector<unsigned>{4, 16, 64, 256, 1024});
  double prev = 0.0;
  for (unsigned s : sizes) {
    double g = qam_target_sinr(s, 1e-3);
    CHECK(g > prev);
    CHECK(g == doctest::Approx(sinr_oracle(s, 1e-3)).epsilon(1e-12));
    prev = g;
  }

  CHECK(is_power_of_four(4));
  CHECK(is_power_of_four(1024));
  CHECK_FALSE(is_power_of_four(8));
  CHECK_FALSE(is_power_of_four(2));
  CHECK_FALSE(is_power_of_four(0));
  CHECK_THROWS_AS(qam_target_sinr(8, 1e-3), std::invalid_argument);
  CHECK_THROWS_AS(qam_target_sinr(4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(qam_target_sinr(4, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(qam_target_sinr(4, -0.1), std::invalid_argument);
}

TEST_CASE("rate pair candidates are sorted by decreasing per-user rate") {
  auto list = rate_pair_list({4, 16, 64, 256, 1024}, 8, 2);
  REQUIRE(!list.empty());
  auto rate = [](const RateChoice& c) {
    return c.qam ? std::log2(static_cast<double>(c.qam)) * static_cast<double>(c.tau) : 0.0;
  };
  for (std::size_t i = 0; i + 1 < list.size(); ++i)
    CHECK(rate(list[i]) >= rate(list[i + 1]) - 1e-12);

  CHECK(list.front().qam == 1024);
  CHECK(list.front().tau == 4);
  CHECK(list.back().tau == 0);
  std::size_t zeros = 0;
  for (const auto& c : list) {
    if (c.tau == 0) ++zeros;
    CHECK(c.tau <= 4);
  }
  CHECK(zeros == 1);

  auto pos = [&](unsigned q, std::size_t t) {
    for (std::size_t i = 0; i < list.size(); ++i)
      if (list[i].qam == q && list[i].tau == t) return i;
    return list.size();
  };
  // Equal-rate entries (8 bits each) keep the larger constellation first.
  REQUIRE(pos(256, 1) < list.size());
  REQUIRE(pos(16, 2) < list.size());
  REQUIRE(pos(4, 4) < list.size());
  CHECK(pos(256, 1) < pos(16, 2));
  CHECK(pos(16, 2) < pos(4, 4));
}

TEST_CASE("target table and block macro assignment") {
  Scenario s = grid_net(2, {1, 2}, 1e-8, 1e-11);
  Matrix t = uniform_targets(s, 4, 10.0, 20.0);
  REQUIRE(t.rows == s.n_users());
  REQUIRE(t.cols == 4);
  for (std::size_t u = 0; u < s.n_users(); ++u)
    for (std::size_t n = 0; n < 4; ++n)
      CHECK(t(u, n) == (s.serving_bs[u] == 0 ? 10.0 : 20.0));

  Matrix a6 = spread_macro_assign(s, 6);
  for (std::size_t n = 0; n < 6; ++n) {
    CHECK(a6(0, n) == (n < 3 ? 1.0 : 0.0));
    CHECK(a6(1, n) == (n >= 3 ? 1.0 : 0.0));
    for (std::size_t u = 2; u < s.n_users(); ++u) CHECK(a6(u, n) == 0.0);
  }
  Matrix a5 = spread_macro_assign(s, 5);
  CHECK(a5(0, 0) == 1.0);
  CHECK(a5(0, 1) == 1.0);
  CHECK(a5(1, 2) == 1.0);
  CHECK(a5(1, 3) == 1.0);
  CHECK(a5(0, 4) == 0.0);
  CHECK(a5(1, 4) == 0.0);
}

TEST_CASE("feasibility check on dedicated subchannels") {
  Scenario s = grid_net(1, {1, 1}, 1e-8, 1e-10);
  auto ch = flat_channel(s, 3);
  Matrix assign(3, 3);
  assign(0, 0) = 1.0;
  assign(1, 1) = 1.0;
  assign(2, 2) = 1.0;
  Matrix targets = uniform_targets(s, 3, 5.0, 7.0);

  auto res = check_sa_feasible(s, ch, assign, targets);
  REQUIRE(res.feasible);
  CHECK(res.power(0, 0) == doctest::Approx(5.0 * 1e-13 / 1e-8).epsilon(1e-12));
  CHECK(res.power(1, 1) == doctest::Approx(7.0 * 1e-13 / 1e-8).epsilon(1e-12));
  CHECK(res.power(2, 2) == doctest::Approx(7.0 * 1e-13 / 1e-8).epsilon(1e-12));
  CHECK(res.power(0, 1) == 0.0);

  // Shrinking one user's budget below its needed power flips the verdict.
  s.max_power[1] = 0.5 * 7.0 * 1e-13 / 1e-8;
  auto res2 = check_sa_feasible(s, ch, assign, targets);
  CHECK_FALSE(res2.feasible);
}

TEST_CASE("feasibility check on a symmetric co-channel pair") {
  // Cross gain is half the direct gain in both directions.
  Scenario s = grid_net(1, {1}, 2e-8, 1e-8);
  auto ch = flat_channel(s, 1);
  Matrix assign(2, 1);
  assign(0, 0) = 1.0;
  assign(1, 0) = 1.0;

  SUBCASE("unit targets give the closed-form powers") {
    Matrix targets = uniform_targets(s, 1, 1.0, 1.0);
    auto res = check_sa_feasible(s, ch, assign, targets);
    REQUIRE(res.feasible);
    // (I - GH) p = g with coupling 0.5 and g = 5e-6: p = 1e-5 for both.
    CHECK(res.power(0, 0) == doctest::Approx(1e-5).epsilon(1e-10));
    CHECK(res.power(1, 0) == doctest::Approx(1e-5).epsilon(1e-10));
    // Cross-check against a direct linear solve.
    Matrix sys(2, 2);
    sys(0, 0) = 1.0;
    sys(0, 1) = -0.5;
    sys(1, 0) = -0.5;
    sys(1, 1) = 1.0;
    auto p = solve_linear(sys, {5e-6, 5e-6});
    CHECK(res.power(0, 0) == doctest::Approx(p[0]).epsilon(1e-12));
    // Achieved SINR sits exactly on the target.
    std::vector<std::size_t> serving = s.serving_bs;
    CHECK(link_sinr(s, ch, serving, assign, res.power, 0, 0) ==
          doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("coupling at or above one is infeasible") {
    Matrix t2 = uniform_targets(s, 1, 2.0, 2.0);
    CHECK_FALSE(check_sa_feasible(s, ch, assign, t2).feasible);
    Matrix t3 = uniform_targets(s, 1, 3.0, 3.0);
    CHECK_FALSE(check_sa_feasible(s, ch, assign, t3).feasible);
  }
}

TEST_CASE("feasible power matrices dominate the Pareto solution") {
  Scenario s = grid_net(1, {1}, 2e-8, 1e-8);
  auto ch = flat_channel(s, 1);
  Matrix assign(2, 1);
  assign(0, 0) = 1.0;
  assign(1, 0) = 1.0;
  Matrix targets = uniform_targets(s, 1, 1.0, 1.0);
  auto base = check_sa_feasible(s, ch, assign, targets);
  REQUIRE(base.feasible);

  Rng rng(99);
  std::size_t feasible_count = 0, infeasible_count = 0;
  for (int rep = 0; rep < 300; ++rep) {
    Matrix cand = base.power;
    cand(0, 0) *= 0.7 + 0.9 * rng.uniform();
    cand(1, 0) *= 0.7 + 0.9 * rng.uniform();
    bool ok = true;
    for (std::size_t u = 0; u < 2; ++u)
      ok = ok && link_sinr(s, ch, s.serving_bs, assign, cand, u, 0) >=
                     1.0 * (1.0 - 1e-12);
    if (ok) {
      ++feasible_count;
      CHECK(cand(0, 0) >= base.power(0, 0) * (1.0 - 1e-9));
      CHECK(cand(1, 0) >= base.power(1, 0) * (1.0 - 1e-9));
    } else {
      ++infeasible_count;
    }
  }
  // Uniform up-scaling always stays feasible.
  for (int rep = 0; rep < 20; ++rep) {
    double c = 1.0 + rng.uniform();
    Matrix cand = base.power;
    cand(0, 0) *= c;
    cand(1, 0) *= c;
    for (std::size_t u = 0; u < 2; ++u)
      CHECK(link_sinr(s, ch, s.serving_bs, assign, cand, u, 0) >= 1.0 - 1e-12);
  }
  CHECK(feasible_count > 10);
  CHECK(infeasible_count > 10);
}

TEST_CASE("assignment weights pick the scaling branch from the power estimate") {
  // Exact binary gains and noise make the minimum power and the branch
  // boundaries exact: pmin = 8 * 2^-43 / 2^-26 = 2^-14.
  const double direct = std::ldexp(1.0, -26);
  const double noise = std::ldexp(1.0, -43);
  Scenario s = grid_net(1, {1}, direct, 0.0, 0.01, noise);
  auto ch = flat_channel(s, 2);
  Matrix assign(2, 2);
  Matrix power(2, 2);
  WeightState ws;
  ws.alpha = Matrix(2, 2, 3.0);
  ws.theta = Matrix(2, 2, 5.0);
  ws.mu = 2.0;
  const double gamma = 8.0;
  const double pmin = std::ldexp(1.0, -14);

  SUBCASE("below the per-subchannel share") {
    s.max_power[1] = 0.01;
    Matrix w = assignment_weights(s, ch, assign, power, ws, 1, 1, gamma);
    REQUIRE(w.rows == 1);
    REQUIRE(w.cols == 2);
    CHECK(w(0, 0) == 3.0 * pmin);
    CHECK(w(0, 1) == 3.0 * pmin);
  }
  SUBCASE("exactly at the share boundary stays in the first branch") {
    s.max_power[1] = std::ldexp(1.0, -13);  // share = 2^-14 with tau = 2
    Matrix w = assignment_weights(s, ch, assign, power, ws, 1, 2, gamma);
    CHECK(w(0, 0) == 3.0 * pmin);
  }
  SUBCASE("between the share and the budget") {
    s.max_power[1] = std::ldexp(1.0, -14);  // share = 2^-15, budget hit exactly
    Matrix w = assignment_weights(s, ch, assign, power, ws, 1, 2, gamma);
    CHECK(w(0, 0) == 3.0 * 5.0 * pmin);
  }
  SUBCASE("beyond the budget multiplies in mu") {
    s.max_power[1] = std::ldexp(1.0, -15);
    Matrix w = assignment_weights(s, ch, assign, power, ws, 1, 1, gamma);
    CHECK(w(0, 0) == 3.0 * 2.0 * 5.0 * pmin);
  }
  SUBCASE("invalid share counts throw") {
    CHECK_THROWS_AS(assignment_weights(s, ch, assign, power, ws, 1, 0, gamma),
                    std::invalid_argument);
    CHECK_THROWS_AS(assignment_weights(s, ch, assign, power, ws, 1, 3, gamma),
                    std::invalid_argument);
  }
}

TEST_CASE("isolated cells settle at the full share and minimum power") {
  Scenario s = grid_net(1, {1, 2}, 1e-8, 0.0);
  auto ch = flat_channel(s, 4);
  Matrix a1 = spread_macro_assign(s, 4);
  OfdmaParams params;
  params.qam_macro = 4;
  params.qam_femto = 16;

  auto res = distributed_uplink_alloc(s, ch, a1, params);
  CHECK(res.plan.converged);
  CHECK(res.plan.tau[1] == 4);
  CHECK(res.plan.tau[2] == 2);
  CHECK(res.choice[1].qam == 16);

  double gf = qam_target_sinr(16, 1e-3);
  double want = gf * 1e-13 / 1e-8;
  auto by = users_by_cell(s);
  for (std::size_t k = 1; k < s.n_bs(); ++k) {
    for (std::size_t u : by[k]) {
      std::size_t count = 0;
      for (std::size_t n = 0; n < 4; ++n) {
        if (res.plan.assign(u, n) == 1.0) {
          ++count;
          CHECK(res.plan.power(u, n) == doctest::Approx(want).epsilon(1e-9));
        } else {
          CHECK(res.plan.power(u, n) == 0.0);
        }
      }
      CHECK(count == res.plan.tau[k]);
    }
  }

  // log2(16)/4 = 1 bit/s/Hz per satisfied subchannel.
  CHECK(res.objective == doctest::Approx(4.0 + 2.0).epsilon(1e-12));
  auto rates = plan_rates(s, ch, res.plan.assign, res.plan.power, res.targets,
                          unit_table(s, res.choice, 4), res.serving);
  CHECK(rates[0] == doctest::Approx(0.5 * 4.0).epsilon(1e-12));  // macro user

  auto feas = check_sa_feasible(s, ch, res.plan.assign, res.targets);
  CHECK(feas.feasible);
}

TEST_CASE("uplink allocation meets protection, caps, and exclusivity") {
  for (std::uint64_t seed : {11ull, 12ull, 34ull}) {
    CAPTURE(seed);
    Scenario s = generate_topology(ch4_cfg(seed, 3, 2, 1, 2));
    auto ch = build_channel_tensor(s, 6, true, seed + 1000);
    Matrix a1 = spread_macro_assign(s, 6);
    OfdmaParams params;
    params.qam_macro = 4;
    params.qam_femto = 16;
    params.max_iter = 800;
    params.tol = 1e-12;

    auto res = distributed_uplink_alloc(s, ch, a1, params);
    CHECK(res.plan.converged);
    check_exclusive(s, res.plan.assign, res.serving);

    for (std::size_t u = 0; u < s.n_users(); ++u) {
      double total = 0.0;
      for (std::size_t n = 0; n < 6; ++n) total += res.plan.power(u, n);
      CHECK(total <= s.max_power[u] * (1.0 + 1e-9));
    }

    // Downgrades only ever shrink the share.
    std::vector<std::size_t> last(s.n_bs(), SIZE_MAX);
    for (const auto& row : res.trace) {
      if (last[row.cell] != SIZE_MAX) CHECK(row.tau <= last[row.cell]);
      last[row.cell] = row.tau;
    }

    if (res.plan.converged) {
      double gm = qam_target_sinr(4, 1e-3);
      for (std::size_t u = 0; u < s.n_users(); ++u) {
        if (s.serving_bs[u] != 0) continue;
        for (std::size_t n = 0; n < 6; ++n)
          if (res.plan.assign(u, n) == 1.0)
            CHECK(link_sinr(s, ch, res.serving, res.plan.assign,
                            res.plan.power, u, n) >= gm * (1.0 - 1e-9));
      }
      auto feas = check_sa_feasible(s, ch, res.plan.assign, res.targets);
      CHECK(feas.feasible);

      Matrix ref;
      REQUIRE(pareto_reference(s, ch, res.plan.assign, res.targets, &ref));
      for (std::size_t u = 0; u < s.n_users(); ++u)
        for (std::size_t n = 0; n < 6; ++n)
          CHECK(std::abs(res.plan.power(u, n) - ref(u, n)) <=
                1e-8 + 1e-6 * ref(u, n));
    }
  }
}

TEST_CASE("exhaustive enumeration count") {
  Scenario one = grid_net(1, {1}, 1e-8, 1e-10);
  CHECK(exhaustive_plan_count(one, 2) == 4.0);
  Scenario two = grid_net(1, {1, 1}, 1e-8, 1e-10);
  CHECK(exhaustive_plan_count(two, 3) == 64.0);
  Scenario wide = grid_net(1, {2}, 1e-8, 1e-10);
  CHECK(exhaustive_plan_count(wide, 4) == 19.0);
}

TEST_CASE("exhaustive optimum on zero interference equals the full share") {
  Scenario s = grid_net(1, {1, 2}, 1e-8, 0.0);
  auto ch = flat_channel(s, 4);
  Matrix a1 = spread_macro_assign(s, 4);
  OfdmaParams params;
  params.qam_macro = 4;
  params.qam_femto = 16;
  auto [plan, objective] = exhaustive_optimal(s, ch, a1, params);
  CHECK(objective == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(plan.tau[1] == 4);
  CHECK(plan.tau[2] == 2);
}

TEST_CASE("exhaustive guard trips on oversized instances") {
  Scenario s = grid_net(1, {3, 3, 3}, 1e-8, 1e-10);
  auto ch = flat_channel(s, 12);
  Matrix a1 = spread_macro_assign(s, 12);
  OfdmaParams params;
  CHECK(exhaustive_plan_count(s, 12) > 1e6);
  CHECK_THROWS_AS(exhaustive_optimal(s, ch, a1, params), std::runtime_error);
}

TEST_CASE("distributed allocation tracks the exhaustive optimum") {
  for (std::uint64_t seed : {10ull, 31ull, 33ull}) {
    CAPTURE(seed);
    Scenario s = generate_topology(ch4_cfg(seed, 2, 2, 1, 1));
    auto ch = build_channel_tensor(s, 4, true, seed);
    Matrix a1 = spread_macro_assign(s, 4);
    OfdmaParams params;
    params.qam_macro = 4;
    params.qam_femto = 4;
    params.max_iter = 800;

    auto [best, opt] = exhaustive_optimal(s, ch, a1, params);
    auto res = distributed_uplink_alloc(s, ch, a1, params);
    CHECK(res.plan.converged);
    CHECK(res.objective <= opt + 1e-9);
    CHECK(res.objective >= 0.95 * opt - 1e-12);
  }
}

TEST_CASE("adaptive rate settles at the top pair when unconstrained") {
  // A 1 W budget keeps even 1024-QAM affordable on every subchannel.
  Scenario s = grid_net(1, {1, 2}, 1e-8, 0.0, 1.0);
  auto ch = flat_channel(s, 4);
  Matrix a1 = spread_macro_assign(s, 4);
  OfdmaParams params;
  params.qam_macro = 4;

  auto res = adaptive_rate_alloc(s, ch, a1, params);
  CHECK(res.plan.converged);
  CHECK(res.choice[1].qam == 1024);
  CHECK(res.choice[1].tau == 4);
  CHECK(res.choice[2].qam == 1024);
  CHECK(res.choice[2].tau == 2);
  // log2(1024)/4 = 2.5 bit/s/Hz per subchannel.
  CHECK(res.objective == doctest::Approx(2.5 * 4 + 2.5 * 2).epsilon(1e-12));
}

TEST_CASE("adaptive rate dominates the fixed maximum constellation") {
  for (std::uint64_t seed : {12ull, 24ull, 26ull}) {
    CAPTURE(seed);
    Scenario s = generate_topology(ch4_cfg(seed, 2, 2, 1, 2));
    auto ch = build_channel_tensor(s, 4, true, seed + 7);
    Matrix a1 = spread_macro_assign(s, 4);
    OfdmaParams params;
    params.qam_macro = 4;
    params.max_iter = 800;

    OfdmaParams fixed = params;
    fixed.qam_femto = 1024;
    auto top = distributed_uplink_alloc(s, ch, a1, fixed);
    auto ada = adaptive_rate_alloc(s, ch, a1, params);
    CHECK(top.plan.converged);
    CHECK(ada.plan.converged);
    CHECK(ada.objective >= top.objective - 1e-9);
  }
}

TEST_CASE("starved cells walk down to the zero sentinel") {
  Scenario s = grid_net(1, {1}, 1e-8, 0.0);
  // Make the femto link hopeless: required power far beyond the budget.
  s.gains(1, 1) = 1e-13;
  auto ch = flat_channel(s, 2);
  Matrix a1 = spread_macro_assign(s, 2);
  OfdmaParams params;
  params.qam_macro = 4;
  params.constellations = {4, 16};

  auto res = adaptive_rate_alloc(s, ch, a1, params);
  CHECK(res.plan.converged);
  CHECK(res.choice[1].tau == 0);
  CHECK(res.objective == 0.0);
  for (std::size_t n = 0; n < 2; ++n) {
    CHECK(res.plan.assign(1, n) == 0.0);
    CHECK(res.plan.power(1, n) == 0.0);
  }
}

TEST_CASE("hybrid access is inert when no femtocell has room") {
  Scenario s = grid_net(1, {1}, 1e-8, 1e-12);
  auto ch = flat_channel(s, 2);
  Matrix a1 = spread_macro_assign(s, 2);
  OfdmaParams params;
  params.qam_macro = 4;
  params.constellations = {4, 16};

  auto cl = adaptive_rate_alloc(s, ch, a1, params);
  auto hy = hybrid_access_alloc(s, ch, a1, params);
  CHECK(cl.plan.converged);
  CHECK(hy.plan.converged);
  CHECK(hy.serving == s.serving_bs);
  CHECK(hy.choice[1].qam == cl.choice[1].qam);
  CHECK(hy.choice[1].tau == cl.choice[1].tau);
  CHECK(hy.objective == doctest::Approx(cl.objective).epsilon(1e-12));
  for (std::size_t u = 0; u < s.n_users(); ++u)
    for (std::size_t n = 0; n < 2; ++n) {
      CHECK(hy.plan.assign(u, n) == cl.plan.assign(u, n));
      CHECK(hy.plan.power(u, n) ==
            doctest::Approx(cl.plan.power(u, n)).epsilon(1e-12));
    }
}

TEST_CASE("hybrid access admits, evicts on downgrades, and re-admits") {
  // One macro, one femto. The macro user sits next to the femto with a dire
  // macro link, and holds subchannel 1. The femto user's second subchannel
  // is three times weaker, and its budget supports 4-QAM but not 16-QAM.
  Scenario s;
  s.bs_positions = {{0.0, 0.0}, {50.0, 0.0}};
  s.tiers = {Tier::macro_bs, Tier::femto};
  s.noise = {1e-13, 1e-13};
  s.user_positions = {{49.0, 0.0}, {50.0, 1.0}};
  s.serving_bs = {0, 1};
  s.max_power = {0.01, 4e-4};
  s.gains = Matrix(2, 2);
  s.gains(0, 0) = 1e-12;  // macro to its own user: nearly dead
  s.gains(1, 0) = 1e-7;   // femto hears the macro user loud and clear
  s.gains(0, 1) = 1e-12;
  s.gains(1, 1) = 1e-8;
  s.processing_gain = 1.0;
  s.femto_radius = 0.0;

  auto ch = flat_channel(s, 2);
  ch[1](1, 1) /= 3.0;

  Matrix a1(2, 2);
  a1(0, 1) = 1.0;

  OfdmaParams params;
  params.qam_macro = 4;
  params.constellations = {4, 16};
  params.max_iter = 80;
  params.tol = 1e-11;

  auto hy = hybrid_access_alloc(s, ch, a1, params);
  CHECK(hy.plan.converged);
  CHECK(hy.serving[0] == 1);
  CHECK(hy.choice[1].qam == 4);
  CHECK(hy.choice[1].tau == 1);
  CHECK(hy.objective == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(hy.plan.assign(1, 0) == 1.0);
  CHECK(hy.plan.assign(1, 1) == 0.0);
  CHECK(hy.plan.assign(0, 1) == 1.0);

  double gm = qam_target_sinr(4, 1e-3);
  CHECK(link_sinr(s, ch, hy.serving, hy.plan.assign, hy.plan.power, 0, 1) >=
        gm * (1.0 - 1e-9));

  bool hosted_seen = false;
  bool evict_after_host = false;
  std::size_t first_host = SIZE_MAX;
  for (const auto& row : hy.trace) {
    if (row.cell != 1) continue;
    if (row.hosted > 0) {
      hosted_seen = true;
      first_host = std::min(first_host, row.iteration);
    }
    if (row.advanced) {
      CHECK(row.hosted == 0);
      if (row.iteration > first_host) evict_after_host = true;
    }
  }
  CHECK(hosted_seen);
  CHECK(evict_after_host);

  // Closed access leaves the macro user starved and never settles.
  auto cl = adaptive_rate_alloc(s, ch, a1, params);
  CHECK_FALSE(cl.plan.converged);
  CHECK(cl.serving[0] == 0);
  CHECK(hy.objective >= cl.objective - 1e-12);

  auto hy_rates = plan_rates(s, ch, hy.plan.assign, hy.plan.power, hy.targets,
                             unit_table(s, hy.choice, 2), hy.serving);
  auto cl_rates = plan_rates(s, ch, cl.plan.assign, cl.plan.power, cl.targets,
                             unit_table(s, cl.choice, 2), cl.serving);
  CHECK(hy_rates[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(cl_rates[0] == 0.0);
}

TEST_CASE("downlink excludes subchannels beyond the budget") {
  Scenario s = grid_net(1, {1}, 1e-8, 0.0);
  auto ch = flat_channel(s, 2);
  ch[0](1, 1) = 1e-14;  // minimum power on subchannel 0 dwarfs the cell budget
  Matrix a1 = spread_macro_assign(s, 2);
  OfdmaParams params;
  params.qam_macro = 4;
  params.qam_femto = 16;
  params.bs_power_cap = {0.02, 0.01};

  auto res = downlink_alloc(s, ch, a1, params);
  CHECK(res.plan.converged);
  CHECK(res.plan.tau[1] == 1);
  CHECK(res.plan.assign(1, 0) == 0.0);
  CHECK(res.plan.assign(1, 1) == 1.0);
  double gf = qam_target_sinr(16, 1e-3);
  CHECK(res.plan.power(1, 1) == doctest::Approx(gf * 1e-13 / 1e-8).epsilon(1e-9));
}

TEST_CASE("downlink equals uplink when cells are isolated") {
  Scenario s = grid_net(1, {1, 2}, 1e-8, 0.0);
  auto ch = flat_channel(s, 4);
  Matrix a1 = spread_macro_assign(s, 4);
  OfdmaParams params;
  params.qam_macro = 4;
  params.qam_femto = 16;

  auto up = distributed_uplink_alloc(s, ch, a1, params);
  auto down = downlink_alloc(s, ch, a1, params);
  CHECK(up.plan.converged);
  CHECK(down.plan.converged);
  CHECK(down.plan.tau == up.plan.tau);
  for (std::size_t u = 0; u < s.n_users(); ++u)
    for (std::size_t n = 0; n < 4; ++n) {
      CHECK(down.plan.assign(u, n) == up.plan.assign(u, n));
      CHECK(down.plan.power(u, n) ==
            doctest::Approx(up.plan.power(u, n)).epsilon(1e-12));
    }
}

TEST_CASE("downlink respects per-BS budgets") {
  for (std::uint64_t seed : {26ull, 35ull}) {
    CAPTURE(seed);
    Scenario s = generate_topology(ch4_cfg(seed, 2, 2, 1, 2));
    auto ch = build_channel_tensor(s, 4, true, seed + 40);
    Matrix a1 = spread_macro_assign(s, 4);
    OfdmaParams params;
    params.qam_macro = 4;
    params.qam_femto = 16;
    params.max_iter = 600;
    params.bs_power_cap.assign(s.n_bs(), 0.05);
    params.bs_power_cap[0] = 0.2;

    auto res = downlink_alloc(s, ch, a1, params);
    CHECK(res.plan.converged);
    check_exclusive(s, res.plan.assign, res.serving);
    for (std::size_t b = 0; b < s.n_bs(); ++b) {
      double total = 0.0;
      for (std::size_t u = 0; u < s.n_users(); ++u)
        if (s.serving_bs[u] == b)
          for (std::size_t n = 0; n < 4; ++n) total += res.plan.power(u, n);
      CHECK(total <= params.bs_power_cap[b] * (1.0 + 1e-9));
    }
    if (res.plan.converged) {
      double gm = qam_target_sinr(4, 1e-3);
      for (std::size_t u = 0; u < s.n_users(); ++u) {
        if (s.serving_bs[u] != 0) continue;
        for (std::size_t n = 0; n < 4; ++n)
          if (res.plan.assign(u, n) == 1.0)
            CHECK(link_sinr(s, ch, res.serving, res.plan.assign,
                            res.plan.power, u, n, true) >= gm * (1.0 - 1e-9));
      }
    }
  }
}

TEST_CASE("fairness index") {
  CHECK(fairness_index({2.0, 2.0, 2.0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fairness_index({5.0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fairness_index({1.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(fairness_index({0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(fairness_index({}), std::invalid_argument);

  // A converged equal-share plan is perfectly fair within each cell.
  Scenario s = grid_net(1, {2}, 1e-8, 0.0);
  auto ch = flat_channel(s, 4);
  OfdmaParams params;
  params.qam_macro = 4;
  params.qam_femto = 16;
  auto res = distributed_uplink_alloc(s, ch, spread_macro_assign(s, 4), params);
  REQUIRE(res.plan.converged);
  auto rates = plan_rates(s, ch, res.plan.assign, res.plan.power, res.targets,
                          unit_table(s, res.choice, 4), res.serving);
  std::vector<double> cell_rates;
  for (std::size_t u = 0; u < s.n_users(); ++u)
    if (s.serving_bs[u] == 1) cell_rates.push_back(rates[u]);
  CHECK(fairness_index(cell_rates) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("driver input validation") {
  Scenario s = grid_net(1, {1}, 1e-8, 1e-11);
  auto ch = flat_channel(s, 2);
  OfdmaParams params;

  Matrix bad_rows(2, 2);
  bad_rows(1, 0) = 1.0;  // femto user in the fixed table
  CHECK_THROWS_AS(distributed_uplink_alloc(s, ch, bad_rows, params),
                  std::invalid_argument);

  Matrix bad_dim(1, 2);
  CHECK_THROWS_AS(distributed_uplink_alloc(s, ch, bad_dim, params),
                  std::invalid_argument);

  Scenario two = grid_net(2, {1}, 1e-8, 1e-11);
  auto ch2 = flat_channel(two, 2);
  Matrix clash(3, 2);
  clash(0, 0) = 1.0;
  clash(1, 0) = 1.0;  // both macro users on one subchannel
  CHECK_THROWS_AS(distributed_uplink_alloc(two, ch2, clash, params),
                  std::invalid_argument);

  OfdmaParams bad_qam = params;
  bad_qam.qam_femto = 8;
  Matrix a1 = spread_macro_assign(s, 2);
  CHECK_THROWS_AS(distributed_uplink_alloc(s, ch, a1, bad_qam),
                  std::invalid_argument);

  CHECK_THROWS_AS(distributed_uplink_alloc(s, {}, a1, params),
                  std::invalid_argument);
}
