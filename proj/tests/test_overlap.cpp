#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "lens/overlap.hpp"
#include "lens/rng.hpp"

using namespace lens;
using lens::testing::ToyPanel;

namespace {

// B is live for 16 minutes at 1000 before A starts, then `after` for 16 minutes.
Panel step_panel(std::int64_t after) {
  std::vector<std::int64_t> b(16, 1000);
  b.resize(32, after);
  return ToyPanel().channel("a").channel("b").stream("b1", "b", 0, b).flat("a1", "a", 16, 20, 500).build();
}

}  // namespace

TEST(StartEvents, EmptyWithoutOverlap) {
  const auto p = ToyPanel().channel("a").channel("b").flat("a1", "a", 0, 30, 10).flat("b1", "b", 100, 30, 10).build();
  EXPECT_TRUE(overlap::enumerate_start_events(p, 8).empty());
}

TEST(StartEvents, ConcurrentAcrossWholeWindow) {
  const auto p = ToyPanel().channel("a").channel("b").flat("b1", "b", 0, 61, 10).flat("a1", "a", 30, 10, 10).build();
  const auto ev = overlap::enumerate_start_events(p, 8);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(p.stream(ev[0].starting_stream).stream_id, "a1");
  EXPECT_EQ(p.stream(ev[0].concurrent_stream).stream_id, "b1");
  EXPECT_EQ(ev[0].t0, lens::testing::base_minute() + 30);
}

TEST(StartEvents, ConcurrentEndingTooSoon) {
  // B live on [25, 40], A starts at 30: B ends before t0 + 8.
  const auto p = ToyPanel().channel("a").channel("b").flat("b1", "b", 25, 16, 10).flat("a1", "a", 30, 30, 10).build();
  EXPECT_TRUE(overlap::enumerate_start_events(p, 8).empty());
}

TEST(StartEvents, SpanBoundariesAreInclusive) {
  // B starts exactly t0 - 8 and ends exactly t0 + 8.
  const auto p = ToyPanel().channel("a").channel("b").flat("b1", "b", 22, 17, 10).flat("a1", "a", 30, 30, 10).build();
  EXPECT_EQ(overlap::enumerate_start_events(p, 8).size(), 1u);
  const auto q = ToyPanel().channel("a").channel("b").flat("b1", "b", 23, 16, 10).flat("a1", "a", 30, 30, 10).build();
  EXPECT_TRUE(overlap::enumerate_start_events(q, 8).empty());
}

TEST(StartEvents, SameChannelExcluded) {
  const auto p = ToyPanel().channel("a").flat("a1", "a", 0, 60, 10).flat("a2", "a", 30, 10, 10).build();
  EXPECT_TRUE(overlap::enumerate_start_events(p, 8).empty());
}

TEST(StartEvents, SimultaneousStartsOfOneChannelBothCount) {
  const auto p = ToyPanel()
                     .channel("a")
                     .channel("b")
                     .flat("b1", "b", 0, 60, 10)
                     .flat("a2", "a", 30, 10, 10)
                     .flat("a1", "a", 30, 10, 10)
                     .build();
  const auto ev = overlap::enumerate_start_events(p, 8);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(p.stream(ev[0].starting_stream).stream_id, "a1");
  EXPECT_EQ(p.stream(ev[1].starting_stream).stream_id, "a2");
}

TEST(StartEvents, RejectsNonPositiveDelta) {
  const auto p = step_panel(900);
  EXPECT_THROW(overlap::enumerate_start_events(p, 0), Error);
}

TEST(StartEventDelta, HandSeries) {
  for (auto [after, expected] : {std::pair{1000, 0.0}, {900, -100.0}, {1100, 100.0}}) {
    const auto p = step_panel(after);
    const auto ev = overlap::enumerate_start_events(p, 8);
    ASSERT_EQ(ev.size(), 1u);
    EXPECT_DOUBLE_EQ(overlap::start_event_delta(p, ev[0], 8), expected);
  }
}

TEST(PairwiseOverlap, SingleEvent) {
  const auto m = overlap::pairwise_overlap(step_panel(900), 8);
  ASSERT_TRUE(m.at(0, 1).has_value());
  EXPECT_DOUBLE_EQ(*m.at(0, 1), 0.10);
  EXPECT_EQ(m.event_count(0, 1), 1u);
  EXPECT_FALSE(m.at(1, 0).has_value());
  EXPECT_FALSE(m.at(0, 0).has_value());
  EXPECT_FALSE(m.symmetrized);
}

TEST(PairwiseOverlap, MedianOfThreeKeepsSign) {
  // Three starts of a during three separate b streams, transfers -0.05, 0.10, 0.30.
  ToyPanel t;
  t.channel("a").channel("b");
  const std::int64_t after[] = {1050, 900, 700};
  for (int i = 0; i < 3; ++i) {
    std::vector<std::int64_t> b(16, 1000);
    b.resize(32, after[i]);
    t.stream("b" + std::to_string(i), "b", i * 100, b).flat("a" + std::to_string(i), "a", i * 100 + 16, 10, 50);
  }
  const auto m = overlap::pairwise_overlap(t.build(), 8);
  EXPECT_NEAR(*m.at(0, 1), 0.10, 1e-12);
  EXPECT_EQ(m.event_count(0, 1), 3u);
}

TEST(PairwiseOverlap, NegativeMedianRetained) {
  const auto m = overlap::pairwise_overlap(step_panel(1100), 8);
  EXPECT_DOUBLE_EQ(*m.at(0, 1), -0.10);
}

TEST(PairwiseOverlap, ZeroBaselineSkippedAndCounted) {
  std::vector<std::int64_t> b(16, 0);
  b.resize(32, 10);
  const auto p = ToyPanel().channel("a").channel("b").stream("b1", "b", 0, b).flat("a1", "a", 16, 20, 5).build();
  const auto m = overlap::pairwise_overlap(p, 8);
  EXPECT_FALSE(m.at(0, 1).has_value());
  EXPECT_EQ(m.skipped_nonpositive_baseline, 1u);
}

TEST(PairwiseOverlap, EmptyWindowSkippedAndCounted) {
  std::vector<std::int64_t> b(16, -1);
  b.front() = 5;
  b.resize(32, 10);
  const auto p = ToyPanel().channel("a").channel("b").stream("b1", "b", 0, b).flat("a1", "a", 16, 20, 5).build();
  const auto m = overlap::pairwise_overlap(p, 8);
  EXPECT_EQ(m.skipped_empty_window, 1u);
  EXPECT_FALSE(m.at(0, 1).has_value());
}

TEST(Symmetrize, MeanOfDirections) {
  auto m = overlap::OverlapMatrix{};
  m.channels = {"a", "b"};
  m.values = {std::nullopt, 0.2, 0.1, std::nullopt};
  m.events = {0, 1, 1, 0};
  const auto s = overlap::symmetrize(m);
  EXPECT_NEAR(*s.at(0, 1), 0.15, 1e-15);
  EXPECT_NEAR(*s.at(1, 0), 0.15, 1e-15);
  EXPECT_TRUE(s.symmetrized);
  EXPECT_EQ(s.event_count(0, 1), 1u);
}

TEST(Symmetrize, OneSidedPolicy) {
  auto m = overlap::OverlapMatrix{};
  m.channels = {"a", "b"};
  m.values = {std::nullopt, 0.2, std::nullopt, std::nullopt};
  m.events = {0, 1, 0, 0};
  const auto strict = overlap::symmetrize(m);
  EXPECT_FALSE(strict.at(0, 1).has_value());
  EXPECT_FALSE(strict.at(1, 0).has_value());
  const auto lenient = overlap::symmetrize(m, overlap::SymmetryPolicy::lenient);
  EXPECT_DOUBLE_EQ(*lenient.at(0, 1), 0.2);
  EXPECT_DOUBLE_EQ(*lenient.at(1, 0), 0.2);
}

TEST(Symmetrize, IdempotentOnRandomMatrices) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    overlap::OverlapMatrix m;
    const std::size_t n = 2 + rng.below(6);
    for (std::size_t i = 0; i < n; ++i) m.channels.push_back("c" + std::to_string(i));
    for (std::size_t i = 0; i < n * n; ++i) {
      m.values.push_back(rng.uniform() < 0.3 ? std::nullopt : std::optional<double>(rng.uniform(-0.2, 0.5)));
      m.events.push_back(rng.below(5));
    }
    for (auto policy : {overlap::SymmetryPolicy::strict, overlap::SymmetryPolicy::lenient}) {
      const auto once = overlap::symmetrize(m, policy);
      const auto twice = overlap::symmetrize(once, policy);
      EXPECT_EQ(once.values, twice.values);
      for (std::size_t i = 0; i < n; ++i) {
        EXPECT_FALSE(once.at(i, i).has_value());
        for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(once.at(i, j), once.at(j, i));
      }
    }
  }
}

namespace {

// Random multi-channel panel with noisy viewer series.
Panel random_panel(std::uint64_t seed, std::int64_t scale = 1) {
  Rng rng(seed);
  ToyPanel t;
  for (int c = 0; c < 4; ++c) t.channel("c" + std::to_string(c));
  for (int s = 0; s < 30; ++s) {
    const std::int64_t len = 20 + static_cast<std::int64_t>(rng.below(80));
    std::vector<std::int64_t> v(static_cast<std::size_t>(len));
    const double level = rng.uniform(200, 3000);
    for (auto& x : v) x = rng.uniform() < 0.05 ? -1 : scale * static_cast<std::int64_t>(level * rng.uniform(0.8, 1.2));
    v.front() = scale * static_cast<std::int64_t>(level);
    t.stream("s" + std::to_string(s), "c" + std::to_string(rng.below(4)), static_cast<std::int64_t>(rng.below(600)), v);
  }
  return t.build();
}

}  // namespace

TEST(OverlapProperties, ConcurrentStreamAlwaysOtherChannel) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto p = random_panel(seed);
    for (const auto& e : overlap::enumerate_start_events(p, 8)) {
      EXPECT_NE(p.channel_of(e.starting_stream), p.channel_of(e.concurrent_stream));
      EXPECT_LE(p.stream(e.concurrent_stream).actual_start, e.t0 - 8);
      EXPECT_GE(p.stream(e.concurrent_stream).end, e.t0 + 8);
    }
  }
}

TEST(OverlapProperties, ScaleFree) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto a = overlap::pairwise_overlap(random_panel(seed, 1), 8);
    const auto b = overlap::pairwise_overlap(random_panel(seed, 7), 8);
    ASSERT_EQ(a.values.size(), b.values.size());
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      ASSERT_EQ(a.values[i].has_value(), b.values[i].has_value());
      if (a.values[i]) {
        EXPECT_NEAR(*a.values[i], *b.values[i], 1e-12);
      }
    }
    EXPECT_EQ(a.events, b.events);
  }
}

TEST(ConcurrencyFrequency, HandComputed) {
  // a live [0,40), b live [20,60): overlap 20 of 40 + 40 minutes → 2*20/80 = 0.5.
  const auto p = ToyPanel().channel("a").channel("b").channel("c").flat("a1", "a", 0, 40, 5).flat("b1", "b", 20, 40, 5)
                     .flat("c1", "c", 500, 10, 5).build();
  const auto m = overlap::concurrency_frequency(p);
  EXPECT_DOUBLE_EQ(*m.at(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(*m.at(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(*m.at(0, 2), 0.0);
  EXPECT_FALSE(m.at(1, 1).has_value());
}

TEST(ConcurrencyTrend, ConstantSeriesIsDegenerate) {
  ToyPanel t;
  t.channel("a").channel("b");
  for (int p = 0; p < 3; ++p) {
    const std::int64_t start = p * 10 * kMinutesPerDay;
    t.flat("a" + std::to_string(p), "a", start, 60, 5).flat("b" + std::to_string(p), "b", start, 60, 5);
  }
  EXPECT_THROW(overlap::concurrency_trend(t.build(), {"a", "b"}, 10), DegenerateInput);
}

TEST(ConcurrencyTrend, IncreasingOverlapGivesRhoOne) {
  ToyPanel t;
  t.channel("a").channel("b");
  for (int p = 0; p < 4; ++p) {
    const std::int64_t start = p * 10 * kMinutesPerDay;
    t.flat("a" + std::to_string(p), "a", start, 100, 5).flat("b" + std::to_string(p), "b", start + 90 - 20 * p, 100, 5);
  }
  const auto r = overlap::concurrency_trend(t.build(), {"a", "b"}, 10);
  ASSERT_EQ(r.points.size(), 4u);
  EXPECT_DOUBLE_EQ(r.rho, 1.0);
  EXPECT_NEAR(r.first_fraction, 0.1, 1e-12);
  EXPECT_NEAR(r.last_fraction, 0.7, 1e-12);
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    EXPECT_EQ(r.points[i].period, i);
    EXPECT_GE(r.points[i].fraction, 0.0);
    EXPECT_LE(r.points[i].fraction, 1.0);
  }
}

TEST(ConcurrencyTrend, ChannelActiveInOnePeriodRejected) {
  const auto p = ToyPanel().channel("a").channel("b").flat("a1", "a", 0, 60, 5).flat("a2", "a", 20 * kMinutesPerDay, 60, 5)
                     .flat("b1", "b", 0, 60, 5).build();
  EXPECT_THROW(overlap::concurrency_trend(p, {"a", "b"}, 10), DegenerateInput);
}

TEST(ConcurrencyTrend, UnknownCohortChannel) {
  EXPECT_THROW(overlap::concurrency_trend(step_panel(900), {"a", "zzz"}, 10), Error);
}
