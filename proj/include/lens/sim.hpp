#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lens/concurrency.hpp"
#include "lens/error.hpp"
#include "lens/overlap.hpp"
#include "lens/panel.hpp"
#include "lens/rng.hpp"
#include "lens/stats.hpp"
#include "lens/time.hpp"
#include "lens/transfer.hpp"

namespace lens::sim {

using json = nlohmann::json;

enum class ScheduleMode { weekly, uniform };

struct ChannelSpec {
  std::string id;
  std::string generation;
  double base = 1000.0;
  double streams_per_week = 3.0;
  double streams_per_week_end = 3.0;  // linear ramp across the run
  std::int64_t streams_per_channel = 40;  // uniform mode
  double duration_median_minutes = 120.0;
  double duration_sigma = 0.3;
  std::array<double, 24> start_hour_weights{};
};

// Follower streams start 0..max_lag minutes after each leader stream.
struct Coordination {
  std::string leader;
  std::string follower;
  std::int64_t max_lag_minutes = 5;
};

struct SimConfig {
  std::string name = "scenario";
  Minute start{0};
  std::int64_t duration_days = 30;
  ScheduleMode mode = ScheduleMode::weekly;
  std::int64_t duration_min_minutes = 20;
  std::int64_t duration_max_minutes = 600;
  std::vector<ChannelSpec> channels;
  std::vector<double> shared;    // n x n, symmetric, zero diagonal
  std::vector<double> affinity;  // n x n receiver weights for routed transfers
  std::array<double, 24> hourly_demand{};
  double competition_beta = 0.0;
  double max_pull = 0.9;
  double routing_probability = 0.0;
  double transfer_fraction = 0.5;
  double half_life_minutes = 10.0;
  std::int64_t guard_minutes = 5;
  double ar = 0.0;
  double sigma = 0.0;
  std::int64_t ramp_minutes = 0;
  double ramp_start = 1.0;
  double end_level = 1.0;
  std::vector<Coordination> coordination;
  std::uint64_t seed = 0;

  std::size_t size() const { return channels.size(); }
  double shared_at(std::size_t i, std::size_t j) const { return shared[i * size() + j]; }
  double affinity_at(std::size_t i, std::size_t j) const { return affinity[i * size() + j]; }
  std::optional<std::size_t> channel_index(const std::string& id) const {
    for (std::size_t i = 0; i < channels.size(); ++i)
      if (channels[i].id == id) return i;
    return std::nullopt;
  }

  void validate() const {
    const std::size_t n = size();
    if (n == 0) throw ConfigInvalid("scenario has no channels");
    if (duration_days < 1) throw ConfigInvalid("duration_days must be at least 1");
    if (duration_min_minutes < 1 || duration_max_minutes < duration_min_minutes)
      throw ConfigInvalid("invalid duration bounds");
    if (duration_max_minutes >= duration_days * kMinutesPerDay)
      throw ConfigInvalid("streams may not be longer than the run");
    if (shared.size() != n * n || affinity.size() != n * n) throw ConfigInvalid("matrix size does not match channels");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double v = shared_at(i, j);
        if (i == j && v != 0.0) throw ConfigInvalid("shared_audience diagonal must be zero");
        if (!(v >= 0.0 && v < 1.0)) throw ConfigInvalid("shared_audience entries must lie in [0, 1)");
        if (v != shared_at(j, i)) throw ConfigInvalid("shared_audience must be symmetric");
        if (affinity_at(i, j) < 0.0) throw ConfigInvalid("affinities must be non-negative");
      }
    for (double h : hourly_demand)
      if (!(h > 0.0)) throw ConfigInvalid("hourly_demand multipliers must be positive");
    if (!(ar >= 0.0 && ar < 1.0)) throw ConfigInvalid("AR(1) coefficient must lie in [0, 1)");
    if (!(sigma >= 0.0)) throw ConfigInvalid("noise sigma must be non-negative");
    if (competition_beta < 0.0 || !(max_pull >= 0.0 && max_pull < 1.0)) throw ConfigInvalid("invalid competition settings");
    if (!(routing_probability >= 0.0 && routing_probability <= 1.0)) throw ConfigInvalid("routing_probability must lie in [0, 1]");
    if (transfer_fraction < 0.0 || !(half_life_minutes > 0.0) || guard_minutes < 0)
      throw ConfigInvalid("invalid transfer settings");
    if (ramp_minutes < 0 || !(ramp_start >= 0.0) || !(end_level >= 0.0)) throw ConfigInvalid("invalid stream shape");
    std::vector<std::string> ids;
    for (const auto& c : channels) {
      if (c.id.empty()) throw ConfigInvalid("channel id must not be empty");
      if (!(c.base > 0.0)) throw ConfigInvalid("channel base audience must be positive");
      if (c.streams_per_week < 0.0 || c.streams_per_week_end < 0.0 || c.streams_per_channel < 0)
        throw ConfigInvalid("stream counts must be non-negative");
      if (!(c.duration_median_minutes > 0.0) || c.duration_sigma < 0.0) throw ConfigInvalid("invalid duration model");
      double w = 0.0;
      for (double x : c.start_hour_weights) {
        if (x < 0.0) throw ConfigInvalid("start hour weights must be non-negative");
        w += x;
      }
      if (!(w > 0.0)) throw ConfigInvalid("start hour weights must not all be zero");
      ids.push_back(c.id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ConfigInvalid("duplicate channel id");
    for (const auto& k : coordination) {
      const auto a = channel_index(k.leader), b = channel_index(k.follower);
      if (!a || !b || *a == *b) throw ConfigInvalid("coordination must name two distinct known channels");
      if (k.max_lag_minutes < 0) throw ConfigInvalid("max_lag_minutes must be non-negative");
    }
  }

  static SimConfig from_json(const json& j);

  static SimConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid("cannot open scenario file: " + path);
    try {
      return from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw ConfigInvalid(std::string("scenario file: ") + e.what());
    }
  }
};

namespace detail {

inline std::array<double, 24> hours(const json& j, const char* key, double fill) {
  std::array<double, 24> out;
  out.fill(fill);
  if (!j.contains(key)) return out;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 24) throw ConfigInvalid(std::string(key) + " needs 24 values");
  for (std::size_t h = 0; h < 24; ++h) out[h] = v[h].get<double>();
  return out;
}

inline std::vector<double> matrix(const json& j, std::size_t n, const SimConfig& cfg, double off_diagonal) {
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      if (i != k) m[i * n + k] = off_diagonal;
  if (j.is_null()) return m;
  if (j.is_number()) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k)
        if (i != k) m[i * n + k] = j.get<double>();
    return m;
  }
  if (j.is_array()) {
    if (j.size() != n) throw ConfigInvalid("matrix needs one row per channel");
    for (std::size_t i = 0; i < n; ++i) {
      if (j[i].size() != n) throw ConfigInvalid("matrix needs one column per channel");
      for (std::size_t k = 0; k < n; ++k) m[i * n + k] = j[i][k].get<double>();
    }
    return m;
  }
  if (j.contains("pairs")) {
    for (const auto& p : j.at("pairs")) {
      const auto a = cfg.channel_index(p.at("a").get<std::string>());
      const auto b = cfg.channel_index(p.at("b").get<std::string>());
      if (!a || !b) throw ConfigInvalid("matrix pair names an unknown channel");
      m[*a * n + *b] = m[*b * n + *a] = p.at("value").get<double>();
    }
  }
  if (j.contains("spread")) {
    // Distinct values evenly spaced over [lo, hi], assigned to the unordered
    // pairs in a fixed shuffled order.
    const double lo = j.at("spread").at(0).get<double>(), hi = j.at("spread").at(1).get<double>();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = i + 1; k < n; ++k) pairs.emplace_back(i, k);
    Rng rng(j.value("shuffle_seed", std::uint64_t{1}));
    for (std::size_t i = pairs.size(); i > 1; --i) std::swap(pairs[i - 1], pairs[rng.below(i)]);
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      const double v = pairs.size() == 1 ? lo : lo + (hi - lo) * static_cast<double>(r) / static_cast<double>(pairs.size() - 1);
      m[pairs[r].first * n + pairs[r].second] = m[pairs[r].second * n + pairs[r].first] = v;
    }
  }
  return m;
}

}  // namespace detail

// Scenario file layout (all keys optional unless noted):
//   name, start (timestamp), duration_days, seed
//   channels: [{id, generation, base, ...overrides}] or {count, prefix, base_range, generations}
//   schedule: {mode, streams_per_week, streams_per_week_end, streams_per_channel,
//              duration_median_minutes, duration_sigma, duration_min_minutes,
//              duration_max_minutes, start_hour_weights, coordination: [{leader, follower, max_lag_minutes}]}
//   hourly_demand: [24]
//   shared_audience: number | n x n array | {pairs: [{a, b, value}], spread: [lo, hi]}
//   competition: {beta, max_pull}
//   transfer: {routing_probability, fraction, half_life_minutes, guard_minutes, affinity}
//   noise: {ar, sigma}
//   shape: {ramp_minutes, ramp_start, end_level}
inline SimConfig SimConfig::from_json(const json& j) {
  try {
    SimConfig cfg;
    cfg.name = j.value("name", std::string("scenario"));
    const auto start = parse_timestamp(j.value("start", std::string("2024-01-01T00:00Z")));
    if (!start) throw ConfigInvalid("start is not a timestamp");
    cfg.start = *start;
    cfg.duration_days = j.value("duration_days", std::int64_t{30});
    cfg.seed = j.value("seed", std::uint64_t{0});

    const json sched = j.value("schedule", json::object());
    const std::string mode = sched.value("mode", std::string("weekly"));
    if (mode == "weekly")
      cfg.mode = ScheduleMode::weekly;
    else if (mode == "uniform")
      cfg.mode = ScheduleMode::uniform;
    else
      throw ConfigInvalid("unknown schedule mode '" + mode + "'");
    cfg.duration_min_minutes = sched.value("duration_min_minutes", std::int64_t{20});
    cfg.duration_max_minutes = sched.value("duration_max_minutes", std::int64_t{600});

    ChannelSpec defaults;
    defaults.streams_per_week = sched.value("streams_per_week", 3.0);
    defaults.streams_per_week_end = sched.value("streams_per_week_end", defaults.streams_per_week);
    defaults.streams_per_channel = sched.value("streams_per_channel", std::int64_t{40});
    defaults.duration_median_minutes = sched.value("duration_median_minutes", 120.0);
    defaults.duration_sigma = sched.value("duration_sigma", 0.3);
    defaults.start_hour_weights = detail::hours(sched, "start_hour_weights", 1.0);

    const json channels = j.at("channels");
    if (channels.is_array()) {
      for (const auto& c : channels) {
        ChannelSpec s = defaults;
        s.id = c.at("id").get<std::string>();
        s.generation = c.value("generation", std::string());
        s.base = c.value("base", 1000.0);
        s.streams_per_week = c.value("streams_per_week", defaults.streams_per_week);
        s.streams_per_week_end = c.value("streams_per_week_end", c.contains("streams_per_week")
                                                                      ? s.streams_per_week
                                                                      : defaults.streams_per_week_end);
        s.streams_per_channel = c.value("streams_per_channel", defaults.streams_per_channel);
        s.duration_median_minutes = c.value("duration_median_minutes", defaults.duration_median_minutes);
        s.duration_sigma = c.value("duration_sigma", defaults.duration_sigma);
        if (c.contains("start_hour_weights")) s.start_hour_weights = detail::hours(c, "start_hour_weights", 1.0);
        cfg.channels.push_back(std::move(s));
      }
    } else {
      const auto count = channels.at("count").get<std::size_t>();
      const std::string prefix = channels.value("prefix", std::string("ch"));
      const double lo = channels.contains("base_range") ? channels.at("base_range").at(0).get<double>() : 1000.0;
      const double hi = channels.contains("base_range") ? channels.at("base_range").at(1).get<double>() : lo;
      const auto generations = channels.value("generations", std::size_t{1});
      for (std::size_t i = 0; i < count; ++i) {
        ChannelSpec s = defaults;
        char id[32];
        std::snprintf(id, sizeof id, "%s%02zu", prefix.c_str(), i + 1);
        s.id = id;
        s.generation = "gen" + std::to_string(1 + i * generations / std::max<std::size_t>(count, 1));
        s.base = count > 1 ? lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1) : lo;
        cfg.channels.push_back(std::move(s));
      }
    }
    for (const auto& k : sched.value("coordination", json::array()))
      cfg.coordination.push_back({k.at("leader").get<std::string>(), k.at("follower").get<std::string>(),
                                  k.value("max_lag_minutes", std::int64_t{5})});

    cfg.hourly_demand = detail::hours(j, "hourly_demand", 1.0);
    const std::size_t n = cfg.channels.size();
    cfg.shared = detail::matrix(j.value("shared_audience", json()), n, cfg, 0.0);

    const json comp = j.value("competition", json::object());
    cfg.competition_beta = comp.value("beta", 0.0);
    cfg.max_pull = comp.value("max_pull", 0.9);

    const json tr = j.value("transfer", json::object());
    cfg.routing_probability = tr.value("routing_probability", 0.0);
    cfg.transfer_fraction = tr.value("fraction", 0.5);
    cfg.half_life_minutes = tr.value("half_life_minutes", 10.0);
    cfg.guard_minutes = tr.value("guard_minutes", std::int64_t{5});
    cfg.affinity = detail::matrix(tr.value("affinity", json()), n, cfg, 1.0);

    const json noise = j.value("noise", json::object());
    cfg.ar = noise.value("ar", 0.0);
    cfg.sigma = noise.value("sigma", 0.0);

    const json shape = j.value("shape", json::object());
    cfg.ramp_minutes = shape.value("ramp_minutes", std::int64_t{0});
    cfg.ramp_start = shape.value("ramp_start", 1.0);
    cfg.end_level = shape.value("end_level", 1.0);

    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("scenario: ") + e.what());
  }
}

struct PlantedTransfer {
  std::string source_stream;
  std::string receiving_stream;
  std::string source_channel;
  std::string receiving_channel;
  Minute t_e;
  double final_viewers = 0.0;
  double moved = 0.0;

  friend bool operator==(const PlantedTransfer&, const PlantedTransfer&) = default;
};

struct GroundTruth {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<std::string> channels;
  std::vector<double> shared;  // n x n
  double competition_beta = 0.0;
  std::vector<PlantedTransfer> transfers;
  std::vector<std::pair<std::string, std::string>> coordinated_pairs;
  std::size_t samples = 0;
  std::size_t competed_samples = 0;  // samples whose audience was reduced by a live peer

  double shared_at(std::size_t i, std::size_t j) const { return shared[i * channels.size() + j]; }

  json to_json() const {
    json j;
    j["scenario"] = scenario;
    j["seed"] = seed;
    j["channels"] = channels;
    json rows = json::array();
    for (std::size_t i = 0; i < channels.size(); ++i) {
      json row = json::array();
      for (std::size_t k = 0; k < channels.size(); ++k) row.push_back(shared_at(i, k));
      rows.push_back(row);
    }
    j["shared_audience"] = rows;
    j["competition_beta"] = competition_beta;
    json tr = json::array();
    for (const auto& t : transfers)
      tr.push_back({{"source_stream", t.source_stream},
                    {"receiving_stream", t.receiving_stream},
                    {"source_channel", t.source_channel},
                    {"receiving_channel", t.receiving_channel},
                    {"t_e", format_timestamp(t.t_e)},
                    {"final_viewers", t.final_viewers},
                    {"moved", t.moved}});
    j["transfers"] = tr;
    json co = json::array();
    for (const auto& [a, b] : coordinated_pairs) co.push_back({{"leader", a}, {"follower", b}});
    j["coordinated_pairs"] = co;
    j["samples"] = samples;
    j["competed_samples"] = competed_samples;
    return j;
  }

  static GroundTruth from_json(const json& j) {
    try {
      GroundTruth g;
      g.scenario = j.value("scenario", std::string());
      g.seed = j.value("seed", std::uint64_t{0});
      g.channels = j.at("channels").get<std::vector<std::string>>();
      const std::size_t n = g.channels.size();
      g.shared.assign(n * n, 0.0);
      const auto& rows = j.at("shared_audience");
      if (rows.size() != n) throw ConfigInvalid("truth matrix size does not match channels");
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) g.shared[i * n + k] = rows.at(i).at(k).get<double>();
      g.competition_beta = j.value("competition_beta", 0.0);
      for (const auto& t : j.value("transfers", json::array())) {
        const auto te = parse_timestamp(t.at("t_e").get<std::string>());
        if (!te) throw ConfigInvalid("truth transfer has a bad timestamp");
        g.transfers.push_back({t.at("source_stream").get<std::string>(), t.at("receiving_stream").get<std::string>(),
                               t.value("source_channel", std::string()), t.value("receiving_channel", std::string()),
                               *te, t.value("final_viewers", 0.0), t.value("moved", 0.0)});
      }
      for (const auto& c : j.value("coordinated_pairs", json::array()))
        g.coordinated_pairs.emplace_back(c.at("leader").get<std::string>(), c.at("follower").get<std::string>());
      g.samples = j.value("samples", std::size_t{0});
      g.competed_samples = j.value("competed_samples", std::size_t{0});
      return g;
    } catch (const json::exception& e) {
      throw ConfigInvalid(std::string("truth file: ") + e.what());
    }
  }

  static GroundTruth load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid("cannot open truth file: " + path);
    try {
      return from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw ConfigInvalid(std::string("truth file: ") + e.what());
    }
  }
};

struct Simulation {
  Panel panel;
  GroundTruth truth;
};

namespace detail {

struct Slot {
  std::size_t channel;
  std::int64_t start;  // minutes from the run start
  std::int64_t length;
};

inline std::int64_t draw_duration(Rng& rng, const ChannelSpec& c, const SimConfig& cfg) {
  const double d = c.duration_median_minutes * std::exp(c.duration_sigma * rng.normal());
  return std::clamp<std::int64_t>(std::llround(d), cfg.duration_min_minutes, cfg.duration_max_minutes);
}

inline std::size_t draw_weighted(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0) return i;
  return 0;
}

// Drops streams that would start before the channel's previous stream ended.
inline void drop_self_overlap(std::vector<Slot>& slots) {
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) { return a.start < b.start; });
  std::vector<Slot> kept;
  for (const auto& s : slots)
    if (kept.empty() || s.start > kept.back().start + kept.back().length) kept.push_back(s);
  slots = std::move(kept);
}

inline std::vector<Slot> schedule_channel(const SimConfig& cfg, std::size_t c, Rng& rng) {
  const auto& spec = cfg.channels[c];
  const std::int64_t horizon = cfg.duration_days * kMinutesPerDay;
  std::vector<Slot> out;
  if (cfg.mode == ScheduleMode::uniform) {
    for (std::int64_t k = 0; k < spec.streams_per_channel; ++k) {
      const std::int64_t len = draw_duration(rng, spec, cfg);
      out.push_back({c, rng.between(0, horizon - len), len});
    }
    std::sort(out.begin(), out.end(), [](const Slot& a, const Slot& b) { return a.start < b.start; });
    return out;
  }
  const std::int64_t weeks = (cfg.duration_days + 6) / 7;
  for (std::int64_t w = 0; w < weeks; ++w) {
    const double frac = std::min(1.0, (static_cast<double>(w) * 7.0 + 3.5) / static_cast<double>(cfg.duration_days));
    const double rate = spec.streams_per_week + (spec.streams_per_week_end - spec.streams_per_week) * frac;
    const std::int64_t n = rng.poisson(rate);
    for (std::int64_t k = 0; k < n; ++k) {
      const std::int64_t day = w * 7 + static_cast<std::int64_t>(rng.below(7));
      const auto hour = static_cast<std::int64_t>(draw_weighted(rng, spec.start_hour_weights));
      const auto minute = static_cast<std::int64_t>(rng.below(60));
      const std::int64_t len = draw_duration(rng, spec, cfg);
      const std::int64_t start = day * kMinutesPerDay + hour * 60 + minute;
      if (day < cfg.duration_days && start + len <= horizon) out.push_back({c, start, len});
    }
  }
  drop_self_overlap(out);
  return out;
}

inline std::string stream_name(const std::string& channel, std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "-%05zu", k);
  return channel + buf;
}

}  // namespace detail

// Aggregate audience simulator. Each stream's per-minute audience is
//   base * hourly_demand[hour] * shape(t) * (1 + e_t) * (1 - pull_t) + bumps,
// where e_t is stationary AR(1) noise, pull_t = min(max_pull, beta * sum of
// shared fractions with live streams of other channels), and bumps are routed
// transfers: at each stream end, with routing_probability, `fraction` of the
// source's final audience moves to one guard-eligible live peer chosen by
// affinity, arriving the next minute and decaying with the given half-life.
inline Simulation generate(const SimConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.size();
  const std::int64_t horizon = cfg.duration_days * kMinutesPerDay;

  std::vector<std::vector<detail::Slot>> schedule(n);
  for (std::size_t c = 0; c < n; ++c) {
    Rng rng(derive_seed(cfg.seed, 1000 + c));
    schedule[c] = detail::schedule_channel(cfg, c, rng);
  }
  for (std::size_t k = 0; k < cfg.coordination.size(); ++k) {
    const auto& co = cfg.coordination[k];
    const std::size_t leader = *cfg.channel_index(co.leader), follower = *cfg.channel_index(co.follower);
    Rng rng(derive_seed(cfg.seed, 5000 + k));
    std::vector<detail::Slot> slots;
    for (const auto& s : schedule[leader]) {
      const std::int64_t start = s.start + rng.between(0, co.max_lag_minutes);
      const std::int64_t len = std::min(detail::draw_duration(rng, cfg.channels[follower], cfg), horizon - start);
      if (len >= 1) slots.push_back({follower, start, len});
    }
    if (cfg.mode == ScheduleMode::weekly) detail::drop_self_overlap(slots);
    schedule[follower] = std::move(slots);
  }

  std::vector<ChannelRef> channels;
  for (const auto& c : cfg.channels) {
    ChannelRef r{c.id, c.id, std::nullopt};
    if (!c.generation.empty()) r.generation = c.generation;
    channels.push_back(std::move(r));
  }
  std::vector<StreamRecord> records;
  std::vector<std::vector<std::int64_t>> placeholder;
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t k = 0; k < schedule[c].size(); ++k) {
      const auto& s = schedule[c][k];
      StreamRecord r;
      r.stream_id = detail::stream_name(cfg.channels[c].id, k + 1);
      r.channel_id = cfg.channels[c].id;
      r.actual_start = cfg.start + s.start;
      r.scheduled_start = r.actual_start;
      r.end = r.actual_start + (s.length - 1);
      r.title = cfg.name;
      records.push_back(std::move(r));
      placeholder.emplace_back(static_cast<std::size_t>(s.length), 0);
    }
  // Panel order (by start, then id) fixes the stream indices used below.
  const Panel layout = Panel::from_dense(channels, records, std::move(placeholder));
  const std::size_t streams = layout.stream_count();
  const ConcurrencyIndex index(layout);

  // Competition pull, constant over each segment of the concurrency index.
  std::vector<std::vector<double>> pull(streams);
  for (StreamIndex s = 0; s < streams; ++s)
    pull[s].assign(static_cast<std::size_t>(layout.stream(s).duration() + 1), 0.0);
  GroundTruth truth;
  if (cfg.competition_beta > 0.0) {
    for (const auto& seg : index.segments()) {
      const auto live = index.live(seg);
      if (live.size() < 2) continue;
      for (StreamIndex s : live) {
        double sum = 0.0;
        for (StreamIndex o : live)
          if (layout.channel_of(o) != layout.channel_of(s)) sum += cfg.shared_at(layout.channel_of(s), layout.channel_of(o));
        const double p = std::min(cfg.max_pull, cfg.competition_beta * sum);
        if (p <= 0.0) continue;
        const std::int64_t from = seg.begin - layout.stream(s).actual_start;
        for (std::int64_t t = 0; t < seg.length(); ++t) pull[s][static_cast<std::size_t>(from + t)] = p;
        truth.competed_samples += static_cast<std::size_t>(seg.length());
      }
    }
  }

  std::vector<std::vector<double>> audience(streams);
  const double innovation = cfg.sigma * std::sqrt(1.0 - cfg.ar * cfg.ar);
  for (StreamIndex s = 0; s < streams; ++s) {
    const auto& rec = layout.stream(s);
    const auto& spec = cfg.channels[layout.channel_of(s)];
    const std::int64_t len = rec.duration() + 1;
    Rng rng(derive_seed(cfg.seed, 100000 + s));
    auto& v = audience[s];
    v.resize(static_cast<std::size_t>(len));
    double e = cfg.sigma * rng.normal();
    for (std::int64_t t = 0; t < len; ++t) {
      double shape = 1.0 + (cfg.end_level - 1.0) * static_cast<double>(t) / static_cast<double>(std::max<std::int64_t>(len - 1, 1));
      if (t < cfg.ramp_minutes)
        shape *= cfg.ramp_start + (1.0 - cfg.ramp_start) * static_cast<double>(t) / static_cast<double>(cfg.ramp_minutes);
      const double demand = cfg.hourly_demand[static_cast<std::size_t>(hour_of_day(rec.actual_start + t))];
      const double noise = std::max(0.0, 1.0 + e);
      v[static_cast<std::size_t>(t)] = spec.base * demand * shape * noise * (1.0 - pull[s][static_cast<std::size_t>(t)]);
      e = cfg.ar * e + innovation * rng.normal();
    }
  }
  truth.samples = layout.observation_count();

  if (cfg.routing_probability > 0.0 && cfg.transfer_fraction > 0.0) {
    std::vector<StreamIndex> endings(streams);
    for (StreamIndex s = 0; s < streams; ++s) endings[s] = s;
    std::sort(endings.begin(), endings.end(), [&](StreamIndex a, StreamIndex b) {
      if (layout.stream(a).end != layout.stream(b).end) return layout.stream(a).end < layout.stream(b).end;
      return layout.stream(a).stream_id < layout.stream(b).stream_id;
    });
    Rng rng(derive_seed(cfg.seed, 7));
    std::vector<StreamIndex> candidates;
    std::vector<double> weights;
    const double decay = std::log(2.0) / cfg.half_life_minutes;
    for (StreamIndex a : endings) {
      if (rng.uniform() >= cfg.routing_probability) continue;
      const auto& ra = layout.stream(a);
      const Minute te = ra.end;
      candidates.clear();
      weights.clear();
      for (StreamIndex b : index.live_at(te)) {
        if (layout.channel_of(b) == layout.channel_of(a)) continue;
        const auto& rb = layout.stream(b);
        const double w = cfg.affinity_at(layout.channel_of(a), layout.channel_of(b));
        if (w > 0.0 && rb.actual_start <= te - cfg.guard_minutes && rb.end >= te + cfg.guard_minutes) {
          candidates.push_back(b);
          weights.push_back(w);
        }
      }
      if (candidates.empty()) continue;
      std::vector<std::size_t> order(candidates.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return layout.stream(candidates[x]).stream_id < layout.stream(candidates[y]).stream_id;
      });
      std::vector<double> sorted_weights;
      for (std::size_t i : order) sorted_weights.push_back(weights[i]);
      const StreamIndex b = candidates[order[detail::draw_weighted(rng, sorted_weights)]];
      const double final_viewers = std::max(0.0, std::round(audience[a].back()));
      const double moved = cfg.transfer_fraction * final_viewers;
      const auto& rb = layout.stream(b);
      auto& vb = audience[b];
      for (std::int64_t t = (te + 1) - rb.actual_start; t < static_cast<std::int64_t>(vb.size()); ++t)
        vb[static_cast<std::size_t>(t)] += moved * std::exp(-decay * static_cast<double>(t - ((te + 1) - rb.actual_start)));
      truth.transfers.push_back({ra.stream_id, rb.stream_id, layout.channel(layout.channel_of(a)).id,
                                 layout.channel(layout.channel_of(b)).id, te, final_viewers, moved});
    }
  }

  std::vector<StreamRecord> final_records(layout.streams().begin(), layout.streams().end());
  std::vector<std::vector<std::int64_t>> series(streams);
  for (StreamIndex s = 0; s < streams; ++s) {
    series[s].reserve(audience[s].size());
    for (double x : audience[s]) series[s].push_back(std::max<std::int64_t>(0, std::llround(x)));
  }

  truth.scenario = cfg.name;
  truth.seed = cfg.seed;
  for (const auto& c : cfg.channels) truth.channels.push_back(c.id);
  truth.shared = cfg.shared;
  truth.competition_beta = cfg.competition_beta;
  for (const auto& co : cfg.coordination) truth.coordinated_pairs.emplace_back(co.leader, co.follower);
  return {Panel::from_dense(std::move(channels), std::move(final_records), std::move(series)), std::move(truth)};
}

inline Simulation generate(SimConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return generate(cfg);
}

struct OverlapScore {
  std::optional<double> rho;  // unset when the truth (or estimate) is constant over the scored cells
  double classification_accuracy = 0.0;
  std::size_t cells = 0;
};

// Rank agreement between planted shared fractions and an estimated overlap
// matrix over the unordered pairs where the estimate is defined. A cell is
// classified correctly when |estimate| > zero_tolerance exactly when the
// planted fraction is positive.
inline OverlapScore score_overlap_recovery(const GroundTruth& truth, const overlap::OverlapMatrix& estimate,
                                           double zero_tolerance = 0.02) {
  std::vector<std::size_t> map;
  for (const auto& id : truth.channels) {
    auto it = std::find(estimate.channels.begin(), estimate.channels.end(), id);
    if (it == estimate.channels.end()) throw Error("estimate lacks channel '" + id + "'");
    map.push_back(static_cast<std::size_t>(it - estimate.channels.begin()));
  }
  if (estimate.channels.size() != truth.channels.size()) throw Error("estimate and truth have different channel sets");
  std::vector<double> t, e;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.channels.size(); ++i)
    for (std::size_t j = i + 1; j < truth.channels.size(); ++j) {
      const auto& a = estimate.at(map[i], map[j]);
      const auto& b = estimate.at(map[j], map[i]);
      std::optional<double> v;
      if (a && b)
        v = (*a + *b) / 2.0;
      else
        v = a ? a : b;
      if (!v) continue;
      t.push_back(truth.shared_at(i, j));
      e.push_back(*v);
      correct += (std::abs(*v) > zero_tolerance) == (truth.shared_at(i, j) > 0.0);
    }
  if (t.empty()) throw NoDefinedCells("estimate has no defined off-diagonal cells");
  OverlapScore s;
  s.cells = t.size();
  s.classification_accuracy = static_cast<double>(correct) / static_cast<double>(t.size());
  try {
    s.rho = stats::spearman_rho(t, e);
  } catch (const DegenerateInput&) {
  }
  return s;
}

struct TransferScore {
  std::size_t planted = 0;
  std::size_t detected = 0;
  std::size_t matched = 0;
  std::optional<double> precision;  // unset when nothing was detected
  std::optional<double> recall;     // unset when nothing was planted
};

// One-to-one matching: a detection matches an unmatched planted event with
// the same source and receiving stream whose end time is within the window.
inline TransferScore score_transfer_recovery(const std::vector<PlantedTransfer>& planted,
                                             const std::vector<transfer::TransferEvent>& detected,
                                             std::int64_t match_window_minutes = 2) {
  TransferScore s;
  s.planted = planted.size();
  s.detected = detected.size();
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_pair;
  for (std::size_t i = 0; i < planted.size(); ++i)
    by_pair[{planted[i].source_stream, planted[i].receiving_stream}].push_back(i);
  std::vector<bool> used(planted.size(), false);
  for (const auto& d : detected) {
    auto it = by_pair.find({d.source_stream, d.receiving_stream});
    if (it == by_pair.end()) continue;
    for (std::size_t i : it->second) {
      if (used[i] || std::abs(planted[i].t_e - d.t_e) > match_window_minutes) continue;
      used[i] = true;
      ++s.matched;
      break;
    }
  }
  if (s.detected) s.precision = static_cast<double>(s.matched) / static_cast<double>(s.detected);
  if (s.planted) s.recall = static_cast<double>(s.matched) / static_cast<double>(s.planted);
  return s;
}

}  // namespace lens::sim
