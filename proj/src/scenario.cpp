#include "scenario.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "csv.hpp"

namespace ranopt {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

Rng Rng::substream(std::string_view name) const {
  return Rng(splitmix64(seed_ ^ fnv1a64(name)));
}

std::uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

double Rng::exponential(double mean) { return -mean * std::log1p(-uniform()); }

double dist(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

double path_loss_db(const PathLossModel& m, double d, int walls) {
  require(d > 0.0, "path_loss: distance must be positive");
  return m.a * std::log10(d) + m.b + m.c * std::log10(m.fc_ghz / 5.0) +
         m.wall_db * double(walls);
}

double path_loss_gain(const PathLossModel& m, double d, int walls) {
  return std::pow(10.0, -path_loss_db(m, d, walls) / 10.0);
}

namespace {

Vec2 in_disk(Rng& g, Vec2 center, double radius) {
  const double r = radius * std::sqrt(g.uniform());
  const double ang = 2.0 * kPi * g.uniform();
  return {center.x + r * std::cos(ang), center.y + r * std::sin(ang)};
}

// Distance from point p to the segment ab.
double segment_distance(Vec2 a, Vec2 b, Vec2 p) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 q{a.x + t * dx, a.y + t * dy};
  return dist(q, p);
}

PathLossModel model_for(const ScenarioConfig& cfg, Tier tier) {
  PathLossModel m;
  switch (tier) {
    case Tier::macro_bs:
      m.a = cfg.macro_a;
      m.b = cfg.macro_b;
      break;
    case Tier::femto:
      m.a = cfg.femto_a;
      m.b = cfg.femto_b;
      break;
    case Tier::rrh:
      m.a = cfg.rrh_a;
      m.b = cfg.rrh_b;
      break;
  }
  m.fc_ghz = cfg.fc_ghz;
  m.wall_db = cfg.wall_db;
  return m;
}

void fill_gains(Scenario& s, const ScenarioConfig& cfg) {
  s.gains = Matrix(s.n_bs(), s.n_users());
  for (std::size_t k = 0; k < s.n_bs(); ++k) {
    const PathLossModel m = model_for(cfg, s.tiers[k]);
    for (std::size_t i = 0; i < s.n_users(); ++i) {
      const double d = dist(s.bs_positions[k], s.user_positions[i]);
      s.gains(k, i) = path_loss_gain(m, d, walls_between(s, k, i));
    }
  }
}

void check_radio(const ScenarioConfig& cfg) {
  require(cfg.noise_w > 0.0, "topology: noise must be positive");
  require(cfg.max_power_w > 0.0, "topology: max power must be positive");
  require(cfg.processing_gain > 0.0, "topology: processing gain must be positive");
  require(cfg.fc_ghz > 0.0, "topology: carrier frequency must be positive");
  require(cfg.wall_db >= 0.0, "topology: wall loss must be non-negative");
}

Scenario make_hetnet(const ScenarioConfig& cfg) {
  require(cfg.r1 > cfg.r2 && cfg.r2 > 0.0, "topology: need r1 > r2 > 0");
  require(cfg.n_mues >= 1, "topology: need at least one MUE");
  require(cfg.n_femtos >= 1, "topology: need at least one femtocell");
  require(cfg.fue_min >= 1 && cfg.fue_min <= cfg.fue_max,
          "topology: need 1 <= fue_min <= fue_max");
  check_radio(cfg);

  Rng place = Rng(cfg.seed).substream("placement");
  Scenario s;
  s.rng_seed = cfg.seed;
  s.processing_gain = cfg.processing_gain;
  s.femto_radius = cfg.r2;

  s.bs_positions.push_back({0.0, 0.0});
  s.tiers.push_back(Tier::macro_bs);
  for (std::size_t f = 0; f < cfg.n_femtos; ++f) {
    s.bs_positions.push_back(in_disk(place, {0.0, 0.0}, cfg.r1));
    s.tiers.push_back(Tier::femto);
  }
  s.noise.assign(s.n_bs(), cfg.noise_w);

  for (std::size_t i = 0; i < cfg.n_mues; ++i) {
    s.user_positions.push_back(in_disk(place, {0.0, 0.0}, cfg.r1));
    s.serving_bs.push_back(0);
  }
  const std::size_t span = cfg.fue_max - cfg.fue_min + 1;
  for (std::size_t f = 0; f < cfg.n_femtos; ++f) {
    const std::size_t count =
        std::min(cfg.fue_max,
                 cfg.fue_min + std::size_t(place.uniform() * double(span)));
    for (std::size_t i = 0; i < count; ++i) {
      s.user_positions.push_back(in_disk(place, s.bs_positions[1 + f], cfg.r2));
      s.serving_bs.push_back(1 + f);
    }
  }
  s.max_power.assign(s.n_users(), cfg.max_power_w);
  fill_gains(s, cfg);
  return s;
}

// Axial hex coordinates to the plane; neighboring sites sit exactly
// inter_site apart.
Vec2 hex_to_plane(int q, int r, double d) {
  return {d * (double(q) + 0.5 * double(r)),
          d * (std::sqrt(3.0) / 2.0) * double(r)};
}

Scenario make_hex(const ScenarioConfig& cfg) {
  require(cfg.n_cells >= 1, "topology: need at least one cell");
  require(cfg.inter_site > 0.0, "topology: inter-site distance must be positive");
  require(cfg.users_per_cell >= 1, "topology: need at least one user per cell");
  require(cfg.user_distance > 0.0, "topology: user distance must be positive");
  check_radio(cfg);

  Rng place = Rng(cfg.seed).substream("placement");
  Scenario s;
  s.rng_seed = cfg.seed;
  s.processing_gain = cfg.processing_gain;
  s.femto_radius = 0.0;

  // Spiral outward ring by ring until enough sites exist.
  s.bs_positions.push_back({0.0, 0.0});
  static const int dq[6] = {1, 0, -1, -1, 0, 1};
  static const int dr[6] = {-1, -1, 0, 1, 1, 0};
  for (int ring = 1; s.bs_positions.size() < cfg.n_cells; ++ring) {
    int q = 0, r = ring;  // start at the "south" corner of the ring
    for (int side = 0; side < 6 && s.bs_positions.size() < cfg.n_cells; ++side)
      for (int step = 0; step < ring && s.bs_positions.size() < cfg.n_cells;
           ++step) {
        s.bs_positions.push_back(hex_to_plane(q, r, cfg.inter_site));
        q += dq[side];
        r += dr[side];
      }
  }
  s.tiers.assign(cfg.n_cells, Tier::rrh);
  s.noise.assign(cfg.n_cells, cfg.noise_w);

  for (std::size_t k = 0; k < cfg.n_cells; ++k)
    for (std::size_t u = 0; u < cfg.users_per_cell; ++u) {
      const double ang = 2.0 * kPi * place.uniform();
      s.user_positions.push_back(
          {s.bs_positions[k].x + cfg.user_distance * std::cos(ang),
           s.bs_positions[k].y + cfg.user_distance * std::sin(ang)});
      s.serving_bs.push_back(k);
    }
  s.max_power.assign(s.n_users(), cfg.max_power_w);
  fill_gains(s, cfg);
  return s;
}

}  // namespace

Scenario generate_topology(const ScenarioConfig& cfg) {
  return cfg.layout == Layout::hetnet_disks ? make_hetnet(cfg) : make_hex(cfg);
}

int walls_between(const Scenario& s, std::size_t bs, std::size_t user) {
  if (s.femto_radius <= 0.0) return 0;
  const Vec2 a = s.bs_positions.at(bs);
  const Vec2 b = s.user_positions.at(user);
  int walls = 0;
  for (std::size_t k = 0; k < s.n_bs(); ++k) {
    if (s.tiers[k] != Tier::femto) continue;
    const Vec2 c = s.bs_positions[k];
    const bool a_in = dist(a, c) < s.femto_radius;
    const bool b_in = dist(b, c) < s.femto_radius;
    if (a_in && b_in) continue;  // segment stays inside the disk
    if (a_in != b_in) {
      ++walls;  // one endpoint indoors: exactly one boundary crossing
    } else if (segment_distance(a, b, c) < s.femto_radius) {
      ++walls;  // passes through the disk; counted once
    }
  }
  return walls;
}

std::vector<Matrix> build_channel_tensor(const Scenario& s,
                                         std::size_t n_subchannels, bool fading,
                                         std::uint64_t seed) {
  std::vector<Matrix> tensor(n_subchannels, s.gains);
  if (!fading) return tensor;
  Rng g = Rng(seed).substream("fading");
  for (Matrix& slice : tensor)
    for (double& v : slice.a) v *= g.exponential(1.0);
  return tensor;
}

namespace {

const char* tier_name(Tier t) {
  switch (t) {
    case Tier::macro_bs: return "macro";
    case Tier::femto: return "femto";
    case Tier::rrh: return "rrh";
  }
  return "macro";
}

Tier tier_from(const std::string& s) {
  if (s == "macro") return Tier::macro_bs;
  if (s == "femto") return Tier::femto;
  if (s == "rrh") return Tier::rrh;
  throw std::invalid_argument("scenario: unknown tier '" + s + "'");
}

}  // namespace

std::string scenario_to_csv(const Scenario& s) {
  std::string out;
  out += join_csv({"meta", g17(s.processing_gain), g17(s.femto_radius),
                   std::to_string(s.rng_seed)});
  out += '\n';
  for (std::size_t k = 0; k < s.n_bs(); ++k) {
    out += join_csv({"bs", std::to_string(k), tier_name(s.tiers[k]),
                     g17(s.bs_positions[k].x), g17(s.bs_positions[k].y),
                     g17(s.noise[k])});
    out += '\n';
  }
  for (std::size_t i = 0; i < s.n_users(); ++i) {
    out += join_csv({"user", std::to_string(i), g17(s.user_positions[i].x),
                     g17(s.user_positions[i].y), std::to_string(s.serving_bs[i]),
                     g17(s.max_power[i])});
    out += '\n';
  }
  for (std::size_t k = 0; k < s.n_bs(); ++k)
    for (std::size_t i = 0; i < s.n_users(); ++i) {
      out += join_csv(
          {"gain", std::to_string(k), std::to_string(i), g17(s.gains(k, i))});
      out += '\n';
    }
  return out;
}

Scenario scenario_from_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  Scenario s;
  std::size_t n_bs = 0, n_users = 0;
  for (const auto& row : rows) {
    if (row.empty()) continue;
    if (row[0] == "bs") ++n_bs;
    if (row[0] == "user") ++n_users;
  }
  s.bs_positions.resize(n_bs);
  s.tiers.resize(n_bs);
  s.noise.resize(n_bs);
  s.user_positions.resize(n_users);
  s.serving_bs.resize(n_users);
  s.max_power.resize(n_users);
  s.gains = Matrix(n_bs, n_users);
  for (const auto& row : rows) {
    if (row[0] == "meta") {
      if (row.size() != 4) throw std::invalid_argument("scenario: bad meta row");
      s.processing_gain = parse_double(row[1]);
      s.femto_radius = parse_double(row[2]);
      s.rng_seed = std::stoull(row[3]);
    } else if (row[0] == "bs") {
      if (row.size() != 6) throw std::invalid_argument("scenario: bad bs row");
      const std::size_t k = std::stoul(row[1]);
      if (k >= n_bs) throw std::invalid_argument("scenario: bs id out of range");
      s.tiers[k] = tier_from(row[2]);
      s.bs_positions[k] = {parse_double(row[3]), parse_double(row[4])};
      s.noise[k] = parse_double(row[5]);
    } else if (row[0] == "user") {
      if (row.size() != 6) throw std::invalid_argument("scenario: bad user row");
      const std::size_t i = std::stoul(row[1]);
      if (i >= n_users)
        throw std::invalid_argument("scenario: user id out of range");
      s.user_positions[i] = {parse_double(row[2]), parse_double(row[3])};
      s.serving_bs[i] = std::stoul(row[4]);
      s.max_power[i] = parse_double(row[5]);
    } else if (row[0] == "gain") {
      if (row.size() != 4) throw std::invalid_argument("scenario: bad gain row");
      const std::size_t k = std::stoul(row[1]);
      const std::size_t i = std::stoul(row[2]);
      if (k >= n_bs || i >= n_users)
        throw std::invalid_argument("scenario: gain index out of range");
      s.gains(k, i) = parse_double(row[3]);
    } else {
      throw std::invalid_argument("scenario: unknown row tag '" + row[0] + "'");
    }
  }
  return s;
}

}  // namespace ranopt
