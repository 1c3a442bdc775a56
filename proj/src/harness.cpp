#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <thread>

#include "cran.hpp"
#include "csv.hpp"
#include "ofdma.hpp"
#include "powerctl.hpp"
#include "scenario.hpp"

namespace ranopt {

namespace {

ScenarioConfig scenario_config_from(const Config& cfg, Layout fallback) {
  ScenarioConfig sc;
  const std::string layout = cfg.get_string(
      "layout", fallback == Layout::hetnet_disks ? "hetnet_disks" : "cran_hex");
  if (layout == "hetnet_disks")
    sc.layout = Layout::hetnet_disks;
  else if (layout == "cran_hex")
    sc.layout = Layout::cran_hex;
  else
    throw std::invalid_argument("config key 'layout': unknown layout '" +
                                layout + "'");
  sc.seed = cfg.get_u64("seed", sc.seed);
  sc.r1 = cfg.get_double("r1", sc.r1);
  sc.r2 = cfg.get_double("r2", sc.r2);
  sc.n_mues = cfg.get_size("n_mues", sc.n_mues);
  sc.n_femtos = cfg.get_size("n_femtos", sc.n_femtos);
  sc.fue_min = cfg.get_size("fue_min", sc.fue_min);
  sc.fue_max = cfg.get_size("fue_max", sc.fue_max);
  sc.n_cells = cfg.get_size("n_cells", sc.n_cells);
  sc.inter_site = cfg.get_double("inter_site", sc.inter_site);
  sc.users_per_cell = cfg.get_size("users_per_cell", sc.users_per_cell);
  sc.user_distance = cfg.get_double("user_distance", sc.user_distance);
  sc.noise_w = cfg.get_double("noise_w", sc.noise_w);
  sc.max_power_w = cfg.get_double("max_power_w", sc.max_power_w);
  sc.processing_gain = cfg.get_double("processing_gain", sc.processing_gain);
  sc.fc_ghz = cfg.get_double("fc_ghz", sc.fc_ghz);
  sc.wall_db = cfg.get_double("wall_db", sc.wall_db);
  sc.macro_a = cfg.get_double("macro_a", sc.macro_a);
  sc.macro_b = cfg.get_double("macro_b", sc.macro_b);
  sc.femto_a = cfg.get_double("femto_a", sc.femto_a);
  sc.femto_b = cfg.get_double("femto_b", sc.femto_b);
  sc.rrh_a = cfg.get_double("rrh_a", sc.rrh_a);
  sc.rrh_b = cfg.get_double("rrh_b", sc.rrh_b);
  return sc;
}

std::string trace_table(const std::vector<TraceRow>& trace) {
  std::string out = "iteration,user,power,sinr,bs,supported\n";
  for (const TraceRow& row : trace) {
    out += join_csv({std::to_string(row.iteration), std::to_string(row.user),
                     g17(row.power), g17(row.sinr), std::to_string(row.bs),
                     row.supported ? "1" : "0"});
    out += '\n';
  }
  return out;
}

ChapterRun run_ch3(const Config& cfg) {
  const Scenario s =
      generate_topology(scenario_config_from(cfg, Layout::hetnet_disks));
  const std::string puf = cfg.get_string("puf", "hpc-adapt");
  const double gamma_db = cfg.get_double("gamma_db", 10.0);
  const double gamma = std::pow(10.0, gamma_db / 10.0);

  PufParams params;
  if (puf == "tpc")
    params.kind = PufKind::tpc;
  else if (puf == "opc")
    params.kind = PufKind::opc;
  else if (puf == "hpc" || puf == "hpc-adapt")
    params.kind = PufKind::hpc;
  else
    throw std::invalid_argument("config key 'puf': unknown kind '" + puf +
                                "'");
  const double alpha0 = cfg.get_double("alpha0", 1.0);
  params.alpha.assign(s.n_users(), params.kind == PufKind::tpc ? 0.0 : alpha0);
  params.x_exponent = cfg.get_double("x_exponent", 0.5);
  params.target.assign(s.n_users(), gamma);
  params.p_max = s.max_power;
  auto_derive_xi(params);

  const std::string assoc = cfg.get_string("association", "open");
  const auto candidates =
      assoc == "fixed" ? fixed_association(s) : open_access_candidates(s);
  const double tol = cfg.get_double("tol", 1e-9);
  const std::size_t max_iter = cfg.get_size("max_iter", 10000);

  ChapterRun run;
  std::vector<TraceRow> trace;
  std::size_t supported = 0, iterations = 0;
  bool converged = false;
  double sum_power = 0.0;
  if (puf == "hpc-adapt") {
    AdaptationOptions opt;
    opt.scaling = cfg.get_double("adapt_scaling", opt.scaling);
    opt.inner_cap = cfg.get_size("adapt_inner_cap", opt.inner_cap);
    opt.tol = tol;
    opt.outer_cap = cfg.get_size("adapt_outer_cap", opt.outer_cap);
    opt.final_max_iter = cfg.get_size("final_max_iter", opt.final_max_iter);
    const AdaptationResult res = hpc_adaptation(s, params, candidates, opt);
    trace = res.trace;
    supported = res.adapt.supported.size();
    iterations = res.adapt.outer_iterations;
    converged = res.adapt.outer_converged;
    for (double p : res.state.powers) sum_power += p;
  } else {
    const PowerState st =
        bsa_pc_iterate(s, params, candidates, tol, max_iter, nullptr, &trace);
    supported = classify_supported(st, params, s).supported.size();
    iterations = st.iteration;
    converged = st.converged;
    for (double p : st.powers) sum_power += p;
  }
  run.metrics = {{"supported", static_cast<double>(supported)},
                 {"sum_power_w", sum_power},
                 {"iterations", static_cast<double>(iterations)},
                 {"converged", converged ? 1.0 : 0.0}};
  run.results_csv = trace_table(trace);
  return run;
}

ChapterRun run_ch4(const Config& cfg) {
  const Scenario s =
      generate_topology(scenario_config_from(cfg, Layout::hetnet_disks));
  const std::size_t n_sub = cfg.get_size("n_subchannels", 4);
  const bool fading = cfg.get_bool("fading", true);
  const auto channel =
      build_channel_tensor(s, n_sub, fading, cfg.get_u64("seed", 1));
  const Matrix macro_assign = spread_macro_assign(s, n_sub);

  OfdmaParams params;
  params.qam_macro = static_cast<unsigned>(cfg.get_u64("qam_macro", 4));
  params.qam_femto = static_cast<unsigned>(cfg.get_u64("qam_femto", 16));
  params.target_ber = cfg.get_double("target_ber", 1e-3);
  params.weight_threshold = cfg.get_double("weight_threshold", 10.0);
  params.max_iter = cfg.get_size("max_iter", 400);
  params.tol = cfg.get_double("tol", 1e-10);
  if (cfg.has("bs_power_cap"))
    params.bs_power_cap = cfg.get_double_list("bs_power_cap");

  const std::string mode = cfg.get_string("mode", "adaptive");
  const bool downlink = mode == "downlink";

  AllocResult res;
  double objective = 0.0;
  if (mode == "fixed")
    res = distributed_uplink_alloc(s, channel, macro_assign, params);
  else if (mode == "adaptive")
    res = adaptive_rate_alloc(s, channel, macro_assign, params);
  else if (mode == "hybrid")
    res = hybrid_access_alloc(s, channel, macro_assign, params);
  else if (mode == "downlink")
    res = downlink_alloc(s, channel, macro_assign, params);
  else if (mode == "optimal") {
    auto [plan, best] = exhaustive_optimal(s, channel, macro_assign, params);
    res.plan = std::move(plan);
    res.targets = uniform_targets(s, n_sub,
                                  qam_target_sinr(params.qam_macro,
                                                  params.target_ber),
                                  qam_target_sinr(params.qam_femto,
                                                  params.target_ber));
    res.serving = s.serving_bs;
    res.choice.assign(s.n_bs(), RateChoice{params.qam_femto, 0});
    res.choice[0].qam = params.qam_macro;
    res.objective = best;
  } else {
    throw std::invalid_argument("config key 'mode': unknown mode '" + mode +
                                "'");
  }
  objective = res.objective;

  std::vector<double> rate_unit(s.n_users(), 0.0);
  for (std::size_t u = 0; u < s.n_users(); ++u) {
    const unsigned qam = res.choice[s.serving_bs[u]].qam;
    rate_unit[u] =
        qam > 1 ? std::log2(static_cast<double>(qam)) /
                      static_cast<double>(n_sub)
                : 0.0;
  }
  const std::vector<double> rates =
      plan_rates(s, channel, res.plan.assign, res.plan.power, res.targets,
                 rate_unit, res.serving, downlink);

  std::string table = "metric,cell,value\n";
  std::vector<double> fue_rates;
  for (std::size_t bs = 1; bs < s.n_bs(); ++bs) {
    double least = 0.0;
    bool any = false;
    for (std::size_t u = 0; u < s.n_users(); ++u)
      if (s.serving_bs[u] == bs) {
        least = any ? std::min(least, rates[u]) : rates[u];
        any = true;
        fue_rates.push_back(rates[u]);
      }
    if (any)
      table += join_csv({"min_rate", std::to_string(bs), g17(least)}) + "\n";
  }
  double fairness = 0.0;
  try {
    fairness = fairness_index(fue_rates);
  } catch (const std::invalid_argument&) {
    // Nothing scheduled anywhere; report zero fairness rather than erroring.
  }
  const double iterations = static_cast<double>(res.plan.iterations);
  const double converged = res.plan.converged ? 1.0 : 0.0;
  table += join_csv({"objective", "", g17(objective)}) + "\n";
  table += join_csv({"fairness", "", g17(fairness)}) + "\n";
  table += join_csv({"iterations", "", g17(iterations)}) + "\n";
  table += join_csv({"converged", "", g17(converged)}) + "\n";

  ChapterRun run;
  run.metrics = {{"objective", objective},
                 {"fairness", fairness},
                 {"iterations", iterations},
                 {"converged", converged}};
  run.results_csv = table;
  return run;
}

std::vector<double> broadcast(std::vector<double> v, std::size_t n,
                              const char* key) {
  if (v.size() == 1) v.assign(n, v[0]);
  if (v.size() != n)
    throw std::invalid_argument(std::string("config key '") + key +
                                "': expected 1 or " + std::to_string(n) +
                                " values");
  return v;
}

ChapterRun run_ch8(const Config& cfg) {
  const Scenario s =
      generate_topology(scenario_config_from(cfg, Layout::cran_hex));
  const std::vector<std::uint64_t> per_op_raw =
      cfg.has("prbs_per_op") ? cfg.get_u64_list("prbs_per_op")
                             : std::vector<std::uint64_t>{1, 1, 1};
  std::vector<std::size_t> prbs_per_op(per_op_raw.begin(), per_op_raw.end());
  std::size_t n_prbs = 0;
  for (std::size_t c : prbs_per_op) n_prbs += c;
  const bool fading = cfg.get_bool("fading", true);
  const auto channel =
      build_channel_tensor(s, n_prbs, fading, cfg.get_u64("seed", 1));
  const CranScenario csc = build_cran_scenario(
      s, channel, prbs_per_op, cfg.get_double("tx_power_w", 0.1));
  const std::size_t n_ops = csc.n_ops();

  ComplexityModel model;
  model.t_prime = cfg.get_double("t_prime", model.t_prime);
  model.zeta = cfg.get_double("zeta", model.zeta);
  model.eps_ch = cfg.get_double("eps_ch", model.eps_ch);

  EconomicModel econ;
  econ.psi = broadcast(cfg.get_double_list("psi", {1.0}), n_ops, "psi");
  econ.rho = broadcast(cfg.get_double_list("rho", {1.0}), n_ops, "rho");
  econ.weight_inp = cfg.get_double("weight_inp", 1.0);
  econ.weight_op =
      broadcast(cfg.get_double_list("weight_op", {1.0}), n_ops, "weight_op");
  const std::vector<double> beta_rows =
      broadcast(cfg.get_double_list("beta", {1.0}), n_ops, "beta");
  econ.beta = Matrix(n_ops, csc.n_cells);
  for (std::size_t o = 0; o < n_ops; ++o)
    for (std::size_t k = 0; k < csc.n_cells; ++k)
      econ.beta(o, k) = beta_rows[o];

  const double cloud_cap = cfg.get_double("cloud_cap_bips", 5e6);
  const std::vector<double> fh_caps =
      broadcast(cfg.get_double_list("fronthaul_cap_bps", {1e7}), csc.n_cells,
                "fronthaul_cap_bps");

  const std::string method = cfg.get_string("method", "relaxed");
  std::vector<double> cloud;
  Matrix fronthaul;
  std::vector<double> sum_rate;
  double iterations = 0.0;
  std::string trace = "iteration,metric,op,value\n";
  if (method == "greedy") {
    const GreedyResult g = greedy_alloc(csc, model, cloud_cap, fh_caps);
    cloud = g.cloud;
    fronthaul = g.fronthaul;
    for (const DiscreteAlloc& alloc : g.alloc)
      sum_rate.push_back(alloc.sum_rate);
  } else if (method == "relaxed" || method == "ir" || method == "ra") {
    RulOptions opts;
    opts.max_iter = cfg.get_size("rul_max_iter", 40);
    opts.tol = cfg.get_double("rul_tol", 1e-3);
    opts.rll_tol = cfg.get_double("rll_tol", 1e-4);
    opts.step = cfg.get_double("rul_step", 0.1);
    const RulResult rul = solve_rul(csc, model, econ, cloud_cap, fh_caps, opts);
    cloud = rul.cloud;
    fronthaul = rul.fronthaul;
    iterations = static_cast<double>(rul.iterations);
    for (std::size_t it = 0; it < rul.trace.size(); ++it) {
      trace += join_csv({std::to_string(it + 1), "objective", "",
                         g17(rul.trace[it])}) +
               "\n";
      for (std::size_t o = 0; o < n_ops; ++o)
        trace += join_csv({std::to_string(it + 1), "rate", std::to_string(o),
                           g17(rul.rate_trace(it, o))}) +
                 "\n";
    }
    if (method == "relaxed") {
      sum_rate = rul.sum_rate;
    } else {
      for (std::size_t o = 0; o < n_ops; ++o) {
        std::vector<double> fh(csc.n_cells);
        for (std::size_t k = 0; k < csc.n_cells; ++k) fh[k] = fronthaul(o, k);
        const RllResult relaxed =
            solve_rll(csc, model, o, cloud[o], fh, opts.rll_tol);
        const DiscreteAlloc disc =
            method == "ir" ? round_ir(csc, model, o, cloud[o], fh, relaxed)
                           : round_ra(csc, model, o, cloud[o], fh, relaxed);
        sum_rate.push_back(disc.sum_rate);
      }
    }
  } else {
    throw std::invalid_argument("config key 'method': unknown method '" +
                                method + "'");
  }

  const ProfitReport rep = profits(econ, cloud, fronthaul, sum_rate, csc.n_re);
  double total_rate = 0.0;
  for (double r : sum_rate) total_rate += r;

  std::string table = "metric,op,cell,value\n";
  for (std::size_t o = 0; o < n_ops; ++o)
    table += join_csv({"cloud_bips", std::to_string(o), "", g17(cloud[o])}) +
             "\n";
  for (std::size_t o = 0; o < n_ops; ++o)
    for (std::size_t k = 0; k < csc.n_cells; ++k)
      table += join_csv({"fronthaul_bps", std::to_string(o), std::to_string(k),
                         g17(fronthaul(o, k))}) +
               "\n";
  for (std::size_t o = 0; o < n_ops; ++o)
    table +=
        join_csv({"sum_rate", std::to_string(o), "", g17(sum_rate[o])}) + "\n";
  for (std::size_t o = 0; o < n_ops; ++o)
    table += join_csv({"profit", std::to_string(o), "",
                       g17(rep.op_profit[o])}) +
             "\n";
  table += join_csv({"objective", "", "", g17(rep.objective)}) + "\n";
  table += join_csv({"iterations", "", "", g17(iterations)}) + "\n";

  ChapterRun run;
  run.metrics = {{"sum_rate", total_rate},
                 {"objective", rep.objective},
                 {"iterations", iterations}};
  run.results_csv = table;
  run.trace_csv = trace;
  return run;
}

}  // namespace

ChapterRun run_chapter(const Config& cfg) {
  const std::string chapter = cfg.get_string("chapter");
  if (chapter == "ch3") return run_ch3(cfg);
  if (chapter == "ch4") return run_ch4(cfg);
  if (chapter == "ch8") return run_ch8(cfg);
  throw std::invalid_argument("config key 'chapter': unknown chapter '" +
                              chapter + "'");
}

std::size_t worker_count() {
  if (const char* env = std::getenv("RANOPT_THREADS")) {
    const std::string raw(env);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(raw, &pos);
    } catch (const std::exception&) {
      pos = raw.size() + 1;
    }
    if (pos != raw.size() || v == 0)
      throw std::invalid_argument(
          "RANOPT_THREADS must be a positive integer, got '" + raw + "'");
    return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

ExperimentSpec ExperimentSpec::from_config(const Config& cfg) {
  ExperimentSpec spec;
  spec.chapter = cfg.get_string("chapter");
  spec.sweep_var = cfg.get_string("sweep_var");
  spec.sweep_values = cfg.get_double_list("sweep_values");
  spec.seeds = cfg.get_u64_list("seeds");
  spec.params = cfg;
  return spec;
}

void validate_spec(const ExperimentSpec& spec) {
  if (spec.chapter != "ch3" && spec.chapter != "ch4" && spec.chapter != "ch8")
    throw std::invalid_argument("experiment chapter must be ch3, ch4, or ch8");
  if (spec.sweep_var.empty())
    throw std::invalid_argument("experiment sweep variable must be named");
  if (spec.sweep_values.empty())
    throw std::invalid_argument("experiment sweep range must be non-empty");
  if (spec.seeds.empty())
    throw std::invalid_argument("experiment needs at least one seed");
  const std::set<std::uint64_t> unique(spec.seeds.begin(), spec.seeds.end());
  if (unique.size() != spec.seeds.size())
    throw std::invalid_argument("experiment seeds must be distinct");
}

ExperimentReport run_experiment(const ExperimentSpec& spec) {
  validate_spec(spec);
  const std::size_t n_sweep = spec.sweep_values.size();
  const std::size_t n_seeds = spec.seeds.size();
  const std::size_t n_tasks = n_sweep * n_seeds;

  std::vector<std::vector<std::pair<std::string, double>>> outcomes(n_tasks);
  std::vector<std::string> errors(n_tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_tasks) return;
      const double value = spec.sweep_values[i / n_seeds];
      const std::uint64_t seed = spec.seeds[i % n_seeds];
      try {
        Config cfg = spec.params;
        cfg.set("chapter", spec.chapter);
        cfg.set(spec.sweep_var, value);
        cfg.set("seed", std::to_string(seed));
        outcomes[i] = run_chapter(cfg).metrics;
      } catch (const std::exception& e) {
        errors[i] = "sweep " + g17(value) + " seed " + std::to_string(seed) +
                    ": " + e.what();
      }
    }
  };
  const std::size_t n_threads = std::min(worker_count(), n_tasks);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t + 1 < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const std::string& err : errors)
    if (!err.empty()) throw std::runtime_error(err);

  ExperimentReport report;
  for (std::size_t i = 0; i < n_tasks; ++i) {
    const double value = spec.sweep_values[i / n_seeds];
    const std::uint64_t seed = spec.seeds[i % n_seeds];
    for (const auto& [metric, v] : outcomes[i])
      report.rows.push_back({value, seed, metric, v});
  }
  for (std::size_t vi = 0; vi < n_sweep; ++vi)
    for (std::size_t m = 0; m < outcomes[vi * n_seeds].size(); ++m) {
      const std::string& metric = outcomes[vi * n_seeds][m].first;
      double mean = 0.0;
      for (std::size_t si = 0; si < n_seeds; ++si)
        mean += outcomes[vi * n_seeds + si][m].second;
      mean /= static_cast<double>(n_seeds);
      report.aggregates.push_back({spec.sweep_values[vi], metric, mean});
    }
  return report;
}

std::string report_to_csv(const ExperimentReport& report) {
  std::string out = "sweep,seed,metric,value\n";
  for (const ExperimentRow& row : report.rows) {
    out += join_csv({g17(row.sweep), std::to_string(row.seed), row.metric,
                     g17(row.value)});
    out += '\n';
  }
  for (const ExperimentAggregate& agg : report.aggregates) {
    out += join_csv({g17(agg.sweep), "mean", agg.metric, g17(agg.value)});
    out += '\n';
  }
  return out;
}

void emit_csv(const ExperimentReport& report, const std::string& path) {
  write_text_file(path, report_to_csv(report));
}

ExperimentReport report_from_csv(const std::string& text) {
  const auto records = parse_csv(text);
  if (records.empty() || records[0] != std::vector<std::string>{
                             "sweep", "seed", "metric", "value"})
    throw std::invalid_argument("report document must start with the header "
                                "sweep,seed,metric,value");
  ExperimentReport report;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.size() != 4)
      throw std::invalid_argument("report record " + std::to_string(i) +
                                  ": expected 4 fields");
    if (rec[1] == "mean") {
      report.aggregates.push_back(
          {parse_double(rec[0]), rec[2], parse_double(rec[3])});
    } else {
      std::size_t pos = 0;
      unsigned long long seed = 0;
      try {
        seed = std::stoull(rec[1], &pos);
      } catch (const std::exception&) {
        pos = rec[1].size() + 1;
      }
      if (pos != rec[1].size())
        throw std::invalid_argument("report record " + std::to_string(i) +
                                    ": seed must be an integer or 'mean'");
      report.rows.push_back(
          {parse_double(rec[0]), seed, rec[2], parse_double(rec[3])});
    }
  }
  return report;
}

void run_sweep_to_dir(const Config& spec_cfg, const std::string& out_dir) {
  const ExperimentSpec spec = ExperimentSpec::from_config(spec_cfg);
  const ExperimentReport report = run_experiment(spec);
  std::filesystem::create_directories(out_dir);
  emit_csv(report, (std::filesystem::path(out_dir) / "report.csv").string());
}

}  // namespace ranopt
