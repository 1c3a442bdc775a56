// Command-line front end. Talks to the solver exclusively through the C API
// so the executable exercises the same boundary external consumers get.
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ranopt/ranopt.h"

namespace {

struct Ctx {
  ranopt_ctx* p = ranopt_create();
  ~Ctx() { ranopt_destroy(p); }
};

int report(ranopt_ctx* ctx, const std::string& doing) {
  std::fprintf(stderr, "ranopt: %s: %s\n", doing.c_str(),
               ranopt_last_error(ctx));
  return 1;
}

// Loads the config file, then applies flag overrides on top so command-line
// values win over file values.
int configure(ranopt_ctx* ctx, const std::string& config_path,
              const std::vector<std::pair<std::string, std::string>>& sets) {
  if (ranopt_load_config_file(ctx, config_path.c_str()) != RANOPT_OK)
    return report(ctx, "loading " + config_path);
  for (const auto& [key, value] : sets)
    if (ranopt_set(ctx, key.c_str(), value.c_str()) != RANOPT_OK)
      return report(ctx, "setting " + key);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resource allocation experiments for cellular networks"};
  app.require_subcommand(1);

  std::string config, out, trace, spec, out_dir;
  std::string puf, mode, method, qam_f, qam_m, cloud, fronthaul;

  auto* ch3 = app.add_subcommand(
      "ch3", "Uplink power control with base-station association");
  ch3->add_option("--config", config, "key=value experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  ch3->add_option("--puf", puf, "power update function")
      ->check(CLI::IsMember({"tpc", "opc", "hpc", "hpc-adapt"}));
  ch3->add_option("--out", out, "iteration trace CSV")->required();

  auto* ch4 = app.add_subcommand(
      "ch4", "Two-tier OFDMA subchannel and power allocation");
  ch4->add_option("--config", config, "key=value experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  ch4->add_option("--mode", mode, "allocation variant")
      ->check(CLI::IsMember(
          {"fixed", "adaptive", "hybrid", "downlink", "optimal"}));
  ch4->add_option("--qam-f", qam_f, "femto constellation size");
  ch4->add_option("--qam-m", qam_m, "macro constellation size");
  ch4->add_option("--out", out, "results CSV")->required();

  auto* ch8 = app.add_subcommand(
      "ch8", "Virtualized uplink decoding resource allocation");
  ch8->add_option("--config", config, "key=value experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  ch8->add_option("--method", method, "solver")
      ->check(CLI::IsMember({"relaxed", "ir", "ra", "greedy"}));
  ch8->add_option("--cloud", cloud, "cloud decoding budget, bit-iterations/s");
  ch8->add_option("--fronthaul", fronthaul, "fronthaul budget per cell, bit/s");
  ch8->add_option("--out", out, "results CSV")->required();
  ch8->add_option("--trace", trace, "convergence trace CSV");

  auto* sweep =
      app.add_subcommand("sweep", "Run a sweep spec across seeds and values");
  sweep->add_option("--spec", spec, "sweep spec config")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir, "output directory for report.csv")
      ->required();

  CLI11_PARSE(app, argc, argv);

  Ctx ctx;
  if (!ctx.p) {
    std::fprintf(stderr, "ranopt: cannot allocate solver context\n");
    return 1;
  }

  if (app.got_subcommand(sweep)) {
    if (ranopt_run_sweep(ctx.p, spec.c_str(), out_dir.c_str()) != RANOPT_OK)
      return report(ctx.p, "sweeping " + spec);
    return 0;
  }

  std::vector<std::pair<std::string, std::string>> sets;
  if (app.got_subcommand(ch3)) {
    sets.emplace_back("chapter", "ch3");
    if (!puf.empty()) sets.emplace_back("puf", puf);
  } else if (app.got_subcommand(ch4)) {
    sets.emplace_back("chapter", "ch4");
    if (!mode.empty()) sets.emplace_back("mode", mode);
    if (!qam_f.empty()) sets.emplace_back("qam_femto", qam_f);
    if (!qam_m.empty()) sets.emplace_back("qam_macro", qam_m);
  } else {
    sets.emplace_back("chapter", "ch8");
    if (!method.empty()) sets.emplace_back("method", method);
    if (!cloud.empty()) sets.emplace_back("cloud_cap_bips", cloud);
    if (!fronthaul.empty()) sets.emplace_back("fronthaul_cap_bps", fronthaul);
  }
  if (configure(ctx.p, config, sets) != 0) return 1;

  const char* trace_path = trace.empty() ? nullptr : trace.c_str();
  if (ranopt_run(ctx.p, out.c_str(), trace_path) != RANOPT_OK)
    return report(ctx.p, "running " + sets.front().second);
  return 0;
}
