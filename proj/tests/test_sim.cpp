#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "lens/csv.hpp"
#include "lens/ingest.hpp"
#include "lens/overlap.hpp"
#include "lens/rng.hpp"
#include "lens/sim.hpp"
#include "lens/stats.hpp"
#include "lens/transfer.hpp"

using namespace lens;
using json = nlohmann::json;

namespace {

std::string scenario(const std::string& name) { return std::string(LENS_SCENARIO_DIR) + "/" + name + ".json"; }

json small_config() {
  return json::parse(R"({
    "name": "tiny", "seed": 3, "duration_days": 14,
    "channels": {"count": 4, "base_range": [1000, 3000]},
    "schedule": {"streams_per_week": 4, "duration_median_minutes": 90},
    "shared_audience": 0.1,
    "competition": {"beta": 1.0},
    "transfer": {"routing_probability": 0.5},
    "noise": {"ar": 0.5, "sigma": 0.02}
  })");
}

transfer::TransferEvent as_event(const sim::PlantedTransfer& t) {
  transfer::TransferEvent e;
  e.source_stream = t.source_stream;
  e.receiving_stream = t.receiving_stream;
  e.source_channel = t.source_channel;
  e.receiving_channel = t.receiving_channel;
  e.t_e = t.t_e;
  return e;
}

}  // namespace

TEST(SimConfig, ParsesGeneratedChannels) {
  const auto cfg = sim::SimConfig::from_json(small_config());
  ASSERT_EQ(cfg.size(), 4u);
  EXPECT_EQ(cfg.channels[0].id, "ch01");
  EXPECT_EQ(cfg.channels[3].id, "ch04");
  EXPECT_DOUBLE_EQ(cfg.shared_at(0, 1), 0.1);
  EXPECT_DOUBLE_EQ(cfg.shared_at(2, 2), 0.0);
  for (const auto& c : cfg.channels) {
    EXPECT_GE(c.base, 1000.0);
    EXPECT_LE(c.base, 3000.0);
  }
}

TEST(SimConfig, RejectsInvalidSettings) {
  auto bad = [](auto mutate) {
    json j = small_config();
    mutate(j);
    return j;
  };
  EXPECT_THROW(sim::SimConfig::from_json(bad([](json& j) { j["noise"]["ar"] = 1.0; })), ConfigInvalid);
  EXPECT_THROW(sim::SimConfig::from_json(bad([](json& j) { j["shared_audience"] = 1.5; })), ConfigInvalid);
  EXPECT_THROW(sim::SimConfig::from_json(bad([](json& j) { j["duration_days"] = 0; })), ConfigInvalid);
  EXPECT_THROW(sim::SimConfig::from_json(bad([](json& j) { j["channels"] = json::array(); })), ConfigInvalid);
  EXPECT_THROW(sim::SimConfig::from_json(bad([](json& j) { j["transfer"]["routing_probability"] = 2; })),
               ConfigInvalid);
  EXPECT_THROW(sim::SimConfig::from_json(bad([](json& j) {
                 j["schedule"]["coordination"] = json::array({{{"leader", "ch01"}, {"follower", "ch99"}}});
               })),
               ConfigInvalid);
  EXPECT_THROW(sim::SimConfig::from_json(bad([](json& j) { j["channels"] = "three"; })), ConfigInvalid);
  EXPECT_THROW(sim::SimConfig::load("/nonexistent/scenario.json"), ConfigInvalid);
}

TEST(SimConfig, AllShippedScenariosLoad) {
  for (const char* name : {"null-ecosystem", "planted-overlap", "planted-transfer", "dilution-null", "dilution-signal",
                           "null-schedule", "coordinated-schedule", "trend-ramp", "scale"})
    EXPECT_NO_THROW(sim::SimConfig::load(scenario(name))) << name;
}

TEST(Simulate, DeterministicForSeed) {
  const auto cfg = sim::SimConfig::from_json(small_config());
  const auto a = sim::generate(cfg, 11), b = sim::generate(cfg, 11), c = sim::generate(cfg, 12);
  EXPECT_EQ(ingest::observations_csv(a.panel), ingest::observations_csv(b.panel));
  EXPECT_EQ(ingest::streams_csv(a.panel), ingest::streams_csv(b.panel));
  EXPECT_EQ(a.truth.to_json().dump(), b.truth.to_json().dump());
  EXPECT_NE(ingest::observations_csv(a.panel), ingest::observations_csv(c.panel));
}

TEST(Simulate, OutputPassesIngestCleanly) {
  const auto s = sim::generate(sim::SimConfig::from_json(small_config()));
  const auto streams = ingest::parse_streams(ingest::streams_csv(s.panel));
  const auto loaded = ingest::parse_observations(ingest::observations_csv(s.panel), streams, ingest::Mode::strict);
  EXPECT_TRUE(loaded.report.clean());
  EXPECT_EQ(loaded.panel.observation_count(), s.panel.observation_count());
  EXPECT_EQ(ingest::observations_csv(loaded.panel), ingest::observations_csv(s.panel));
}

TEST(Simulate, TruthRoundTripsThroughJson) {
  const auto s = sim::generate(sim::SimConfig::load(scenario("planted-transfer")), 2);
  ASSERT_FALSE(s.truth.transfers.empty());
  const auto back = sim::GroundTruth::from_json(json::parse(s.truth.to_json().dump()));
  EXPECT_EQ(back.channels, s.truth.channels);
  EXPECT_EQ(back.shared, s.truth.shared);
  EXPECT_EQ(back.transfers, s.truth.transfers);
  EXPECT_EQ(back.samples, s.truth.samples);
}

TEST(Simulate, PlantedTransfersAreDiscontinuities) {
  const auto s = sim::generate(sim::SimConfig::load(scenario("planted-transfer")), 4);
  const auto& p = s.panel;
  ASSERT_FALSE(s.truth.transfers.empty());
  for (const auto& t : s.truth.transfers) {
    const auto src = p.find_stream(t.source_stream), dst = p.find_stream(t.receiving_stream);
    ASSERT_TRUE(src && dst);
    EXPECT_EQ(p.stream(*src).end, t.t_e);
    EXPECT_NE(p.channel_of(*src), p.channel_of(*dst));
    const auto before = p.series(*dst).at(t.t_e), after = p.series(*dst).at(t.t_e + 1);
    ASSERT_TRUE(before && after);
    EXPECT_GE(static_cast<double>(*after - *before), 0.5 * t.moved) << t.source_stream << " -> " << t.receiving_stream;
    EXPECT_NEAR(t.moved, 0.5 * t.final_viewers, 0.5);
  }
}

TEST(Simulate, UniformModeStreamCounts) {
  const auto s = sim::generate(sim::SimConfig::load(scenario("null-schedule")), 1);
  ASSERT_EQ(s.panel.channel_count(), 18u);
  for (ChannelIndex c = 0; c < s.panel.channel_count(); ++c) EXPECT_EQ(s.panel.streams_of(c).size(), 30u);
}

TEST(Simulate, CoordinatedFollowerTracksLeader) {
  const auto s = sim::generate(sim::SimConfig::load(scenario("coordinated-schedule")), 3);
  const auto& p = s.panel;
  const auto leader = *p.find_channel("ch01"), follower = *p.find_channel("ch02");
  std::set<std::int64_t> starts;
  for (auto i : p.streams_of(leader)) starts.insert(p.stream(i).actual_start.value);
  for (auto i : p.streams_of(follower)) {
    const auto t = p.stream(i).actual_start.value;
    auto it = starts.upper_bound(t);
    ASSERT_NE(it, starts.begin());
    EXPECT_LE(t - *std::prev(it), 5);
  }
  ASSERT_EQ(s.truth.coordinated_pairs.size(), 1u);
}

TEST(Simulate, RampProducesRisingConcurrency) {
  const auto s = sim::generate(sim::SimConfig::load(scenario("trend-ramp")), 1);
  const auto r = overlap::concurrency_trend(s.panel, s.truth.channels);
  EXPECT_GT(r.rho, 0.5);
  EXPECT_GT(r.last_fraction, r.first_fraction);
}

TEST(TransferScoring, IdenticalHalfAndShifted) {
  const auto s = sim::generate(sim::SimConfig::load(scenario("planted-transfer")), 1);
  const auto& planted = s.truth.transfers;
  ASSERT_GE(planted.size(), 4u);
  std::vector<transfer::TransferEvent> all, half, shifted;
  for (std::size_t i = 0; i < planted.size(); ++i) {
    all.push_back(as_event(planted[i]));
    if (i % 2 == 0) half.push_back(as_event(planted[i]));
    auto e = as_event(planted[i]);
    e.t_e = e.t_e + 3;
    shifted.push_back(e);
  }
  const auto a = sim::score_transfer_recovery(planted, all);
  EXPECT_DOUBLE_EQ(*a.precision, 1.0);
  EXPECT_DOUBLE_EQ(*a.recall, 1.0);
  const auto h = sim::score_transfer_recovery(planted, half);
  EXPECT_DOUBLE_EQ(*h.precision, 1.0);
  EXPECT_NEAR(*h.recall, static_cast<double>(half.size()) / static_cast<double>(planted.size()), 1e-12);
  const auto sh = sim::score_transfer_recovery(planted, shifted);
  EXPECT_EQ(sh.matched, 0u);
  // A duplicate detection cannot claim the same planted event twice.
  auto doubled = all;
  doubled.push_back(all.front());
  const auto d = sim::score_transfer_recovery(planted, doubled);
  EXPECT_EQ(d.matched, planted.size());
  EXPECT_LT(*d.precision, 1.0);
  const auto none = sim::score_transfer_recovery({}, {});
  EXPECT_FALSE(none.precision.has_value());
  EXPECT_FALSE(none.recall.has_value());
}

TEST(OverlapScoring, TruthAsEstimate) {
  sim::GroundTruth g;
  g.channels = {"a", "b", "c"};
  g.shared = {0, 0.1, 0.3, 0.1, 0, 0, 0.3, 0, 0};
  overlap::OverlapMatrix m;
  m.channels = {"c", "a", "b"};  // different order
  m.values.assign(9, std::nullopt);
  auto set = [&](std::size_t i, std::size_t j, double v) { m.values[i * 3 + j] = v; };
  set(1, 2, 0.1);  // a-b
  set(2, 1, 0.1);
  set(1, 0, 0.3);  // a-c
  set(0, 1, 0.3);
  set(0, 2, 0.0);  // c-b, one direction only
  const auto s = sim::score_overlap_recovery(g, m);
  EXPECT_EQ(s.cells, 3u);
  EXPECT_DOUBLE_EQ(*s.rho, 1.0);
  EXPECT_DOUBLE_EQ(s.classification_accuracy, 1.0);
  m.values.assign(9, std::nullopt);
  EXPECT_THROW(sim::score_overlap_recovery(g, m), NoDefinedCells);
}

TEST(SimulateOracle, NullEcosystemIsQuiet) {
  const auto cfg = sim::SimConfig::load(scenario("null-ecosystem"));
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto s = sim::generate(cfg, seed);
    EXPECT_TRUE(s.truth.transfers.empty());
    EXPECT_TRUE(transfer::detect_transfers(s.panel).events.empty());
    const auto m = overlap::symmetrize(overlap::pairwise_overlap(s.panel, 8));
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : m.values)
      if (v) {
        EXPECT_LT(std::abs(*v), 0.05);
        sum += *v;
        ++n;
      }
    ASSERT_GT(n, 0u);
    EXPECT_LT(std::abs(sum / static_cast<double>(n)), 0.01);
  }
}

TEST(SimulateOracle, SharedPairStandsOut) {
  const json j = json::parse(R"({
    "name": "one-pair", "seed": 8, "duration_days": 60,
    "channels": {"count": 4, "base_range": [2000, 4000]},
    "schedule": {"streams_per_week": 8, "duration_median_minutes": 180},
    "shared_audience": {"pairs": [{"a": "ch01", "b": "ch02", "value": 0.3}]},
    "competition": {"beta": 1.0},
    "noise": {"ar": 0.5, "sigma": 0.01}
  })");
  const auto s = sim::generate(sim::SimConfig::from_json(j));
  const auto m = overlap::symmetrize(overlap::pairwise_overlap(s.panel, 8));
  const auto planted = m.at(0, 1);
  ASSERT_TRUE(planted.has_value());
  EXPECT_GT(*planted, 0.0);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b)
      if (!(a == 0 && b == 1) && m.at(a, b)) EXPECT_GT(*planted, *m.at(a, b));
}

TEST(SimulateOracle, HalfRoutedGivesEfficiencyNearHalf) {
  // Only transfers whose receiver gets no other planted transfer within 30
  // minutes; stacked bumps add up by design.
  const auto cfg = sim::SimConfig::load(scenario("planted-transfer"));
  std::vector<double> eff;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = sim::generate(cfg, seed);
    std::map<std::pair<std::string, std::string>, double> found;
    for (const auto& e : transfer::detect_transfers(s.panel).events)
      found[{e.source_stream, e.receiving_stream}] = e.efficiency;
    for (const auto& t : s.truth.transfers) {
      const auto stacked = std::count_if(s.truth.transfers.begin(), s.truth.transfers.end(), [&](const auto& u) {
        return u.receiving_stream == t.receiving_stream && std::abs(u.t_e - t.t_e) <= 30;
      });
      if (stacked > 1) continue;
      auto it = found.find({t.source_stream, t.receiving_stream});
      ASSERT_NE(it, found.end());
      eff.push_back(it->second);
    }
  }
  ASSERT_GT(eff.size(), 100u);
  const auto in_band = std::count_if(eff.begin(), eff.end(), [](double e) { return e >= 0.45 && e <= 0.55; });
  EXPECT_GE(static_cast<double>(in_band) / static_cast<double>(eff.size()), 0.99);
  EXPECT_NEAR(stats::median(eff), 0.5, 0.02);
}

TEST(OverlapScoring, NoisyTruthAndConstantTruth) {
  sim::GroundTruth g;
  const std::size_t n = 8;
  for (std::size_t i = 0; i < n; ++i) g.channels.push_back("c" + std::to_string(i));
  g.shared.assign(n * n, 0.0);
  Rng rng(17);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) g.shared[i * n + j] = g.shared[j * n + i] = rng.uniform(0.0, 0.4);
  overlap::OverlapMatrix m;
  m.channels = g.channels;
  m.values.assign(n * n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) m.values[i * n + j] = g.shared_at(i, j) + 0.005 * rng.normal();
  EXPECT_GE(*sim::score_overlap_recovery(g, m).rho, 0.95);

  std::fill(g.shared.begin(), g.shared.end(), 0.0);
  const auto flat = sim::score_overlap_recovery(g, m);
  EXPECT_FALSE(flat.rho.has_value());
  EXPECT_EQ(flat.cells, n * (n - 1) / 2);
  std::size_t small = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      small += std::abs((*m.at(i, j) + *m.at(j, i)) / 2.0) <= 0.02;
  EXPECT_DOUBLE_EQ(flat.classification_accuracy, static_cast<double>(small) / static_cast<double>(flat.cells));
}

TEST(TransferScoring, SubThresholdTransfersAreMissed) {
  json j = json::parse(csv::read_file(scenario("planted-transfer")));
  j["transfer"]["fraction"] = 0.01;  // ~40 viewers moved, below the absolute spike threshold
  const auto s = sim::generate(sim::SimConfig::from_json(j));
  ASSERT_GT(s.truth.transfers.size(), 20u);
  const auto score = sim::score_transfer_recovery(s.truth.transfers, transfer::detect_transfers(s.panel).events);
  EXPECT_LT(score.recall.value_or(0.0), 0.05);
}
