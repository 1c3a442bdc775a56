#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "linalg.hpp"

namespace ranopt {

// Deterministic random source. All transforms are written out here instead of
// using std::* distributions, whose outputs vary across standard libraries;
// the mt19937_64 engine itself is specified bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent child stream identified by name. Derivation depends only on
  // the parent seed and the name, never on draw order.
  Rng substream(std::string_view name) const;

  double uniform();                    // [0, 1)
  double exponential(double mean);     // unit-mean when mean = 1
  std::uint64_t next_u64();

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

double dist(const Vec2& a, const Vec2& b);

enum class Tier { macro_bs, femto, rrh };

// Log-distance attenuation L = a*log10(d) + b + c*log10(fc/5) + wall_db*walls,
// all in dB; the linear gain is 10^(-L/10).
struct PathLossModel {
  double a = 36.8;
  double b = 43.8;
  double c = 20.0;
  double fc_ghz = 2.5;
  double wall_db = 0.0;
};

double path_loss_db(const PathLossModel& m, double d, int walls);
double path_loss_gain(const PathLossModel& m, double d, int walls);

enum class Layout { hetnet_disks, cran_hex };

struct ScenarioConfig {
  Layout layout = Layout::hetnet_disks;
  std::uint64_t seed = 1;

  // Two-tier layout: one macro BS at the origin with MUEs inside radius r1,
  // femto BSs inside the same disk, each with FUEs inside radius r2.
  double r1 = 1000.0;
  double r2 = 50.0;
  std::size_t n_mues = 10;
  std::size_t n_femtos = 2;
  std::size_t fue_min = 1;  // FUE count per femtocell drawn uniformly
  std::size_t fue_max = 3;  // from {fue_min, ..., fue_max}

  // Hexagonal RRH grid: cells are placed on rings around the origin with the
  // given inter-site distance; each cell serves users at a fixed distance
  // from its RRH at random angles.
  std::size_t n_cells = 7;
  double inter_site = 400.0;
  std::size_t users_per_cell = 1;
  double user_distance = 50.0;

  // Radio parameters.
  double noise_w = 1e-13;
  double max_power_w = 0.01;
  double processing_gain = 128.0;
  double fc_ghz = 2.5;
  double wall_db = 12.0;
  double macro_a = 36.0, macro_b = 40.0;
  double femto_a = 35.0, femto_b = 35.0;
  double rrh_a = 36.8, rrh_b = 43.8;
};

struct Scenario {
  std::vector<Vec2> bs_positions;
  std::vector<Tier> tiers;
  std::vector<double> noise;  // per BS, W

  std::vector<Vec2> user_positions;
  std::vector<std::size_t> serving_bs;  // per user
  std::vector<double> max_power;        // per user, W

  Matrix gains;  // rows: BS, cols: user; path loss and walls, no fading
  double processing_gain = 1.0;
  double femto_radius = 0.0;  // disk radius used for wall counting
  std::uint64_t rng_seed = 0;

  std::size_t n_bs() const { return bs_positions.size(); }
  std::size_t n_users() const { return user_positions.size(); }
};

Scenario generate_topology(const ScenarioConfig& config);

// Number of femtocell disk boundaries the direct line between a BS and a user
// crosses; each crossed boundary counts as one wall.
int walls_between(const Scenario& s, std::size_t bs, std::size_t user);

// Per-subchannel gain matrices. With fading enabled each (BS, user,
// subchannel) entry is the scenario gain scaled by an independent unit-mean
// exponential draw; otherwise every slice equals the scenario gain matrix.
std::vector<Matrix> build_channel_tensor(const Scenario& s,
                                         std::size_t n_subchannels, bool fading,
                                         std::uint64_t seed);

// Audit dump and its inverse. Round trip preserves every field bit-exactly.
std::string scenario_to_csv(const Scenario& s);
Scenario scenario_from_csv(const std::string& text);

}  // namespace ranopt
