#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "lens/concurrency.hpp"
#include "lens/panel.hpp"

using namespace lens;
using lens::testing::base_minute;
using lens::testing::ToyPanel;

TEST(Time, ParseAndFormatRoundTrip) {
  auto m = parse_timestamp("2025-06-21T13:07Z");
  ASSERT_TRUE(m);
  EXPECT_EQ(format_timestamp(*m), "2025-06-21T13:07Z");
  EXPECT_EQ(hour_of_day(*m), 13);
}

TEST(Time, SecondsTruncateAndOffsetsNormalize) {
  EXPECT_EQ(*parse_timestamp("2025-06-21T13:07:59Z"), *parse_timestamp("2025-06-21T13:07Z"));
  EXPECT_EQ(*parse_timestamp("2025-06-21T13:07:01.25Z"), *parse_timestamp("2025-06-21T13:07Z"));
  EXPECT_EQ(*parse_timestamp("2025-06-21T22:07+09:00"), *parse_timestamp("2025-06-21T13:07Z"));
  EXPECT_FALSE(parse_timestamp("2025-02-30T00:00Z"));
  EXPECT_FALSE(parse_timestamp("2025-06-21 13:07"));
  EXPECT_FALSE(parse_timestamp("garbage"));
}

TEST(Time, NegativeMinutesBinCorrectly) {
  const Minute before_epoch{-1};
  EXPECT_EQ(hour_of_day(before_epoch), 23);
  EXPECT_EQ(day_index(before_epoch), -1);
  EXPECT_EQ(hour_of_day(Minute{0}, 9 * 60), 9);
}

TEST(ConcurrencyIndex, SingleStreamIsSolo) {
  auto panel = ToyPanel{}.channel("a").flat("s1", "a", 0, 10, 100).build();
  ConcurrencyIndex index(panel);
  for (int m = 0; m < 10; ++m) EXPECT_EQ(index.count_at(base_minute() + m), 1u) << m;
  EXPECT_EQ(index.count_at(base_minute() + 10), 0u);
  EXPECT_EQ(index.count_at(base_minute() - 1), 0u);
}

TEST(ConcurrencyIndex, DisjointStreamsNeverOverlap) {
  auto panel = ToyPanel{}.channel("a").channel("b").flat("s1", "a", 0, 10, 1).flat("s2", "b", 20, 10, 1).build();
  ConcurrencyIndex index(panel);
  for (const auto& seg : index.segments()) EXPECT_EQ(seg.size, 1u);
}

TEST(ConcurrencyIndex, TwoStreamOverlapMatchesHandEnumeration) {
  // s1 covers minutes 0..8, s2 covers 5..12: overlap on [5, 8].
  auto panel = ToyPanel{}.channel("a").channel("b").flat("s1", "a", 0, 9, 1).flat("s2", "b", 5, 8, 1).build();
  ConcurrencyIndex index(panel);
  const std::vector<std::size_t> expected{1, 1, 1, 1, 1, 2, 2, 2, 2, 1, 1, 1, 1};
  for (std::size_t m = 0; m < expected.size(); ++m)
    EXPECT_EQ(index.count_at(base_minute() + static_cast<std::int64_t>(m)), expected[m]) << "minute " << m;
}

TEST(ConcurrencyIndex, StreamsWithoutObservationsAreExcluded) {
  auto panel = ToyPanel{}
                   .channel("a")
                   .channel("b")
                   .flat("s1", "a", 0, 10, 5)
                   .stream("ghost", "b", 0, std::vector<std::int64_t>(10, -1))
                   .build();
  EXPECT_EQ(panel.stream_count(), 2u);
  ConcurrencyIndex index(panel);
  EXPECT_EQ(index.count_at(base_minute() + 3), 1u);
}

TEST(ConcurrencyIndex, ScopeFiltersChannels) {
  auto panel = ToyPanel{}.channel("a").channel("b").flat("s1", "a", 0, 10, 1).flat("s2", "b", 0, 10, 1).build();
  ConcurrencyIndex scoped(panel, ChannelScope::of(panel, {"a"}));
  EXPECT_EQ(scoped.count_at(base_minute() + 2), 1u);
  EXPECT_THROW(ChannelScope::of(panel, {"zzz"}), Error);
}

TEST(ConcurrencyIndex, RemovingAStreamNeverIncreasesCounts) {
  std::mt19937 gen(7);
  ToyPanel full, reduced;
  for (auto* p : {&full, &reduced}) p->channel("a").channel("b").channel("c");
  for (int i = 0; i < 30; ++i) {
    const std::int64_t start = gen() % 500;
    const std::int64_t len = 2 + gen() % 60;
    const std::string id = "s" + std::to_string(i);
    const std::string ch = std::string(1, static_cast<char>('a' + i % 3));
    full.flat(id, ch, start, len, 1);
    if (i != 11) reduced.flat(id, ch, start, len, 1);
  }
  ConcurrencyIndex a(full.build()), b(reduced.build());
  for (int m = -5; m < 600; ++m) EXPECT_LE(b.count_at(base_minute() + m), a.count_at(base_minute() + m));
}

TEST(WindowQueries, ConstantSeries) {
  auto panel = ToyPanel{}.channel("a").flat("s", "a", 0, 20, 1000).build();
  EXPECT_DOUBLE_EQ(window_mean(panel, "s", base_minute() + 3, base_minute() + 11), 1000.0);
  EXPECT_EQ(window_peak(panel, "s", base_minute() + 3, base_minute() + 11), 1000);
  EXPECT_DOUBLE_EQ(stream_average(panel, "s"), 1000.0);
}

TEST(WindowQueries, TwoPointMeanAndMax) {
  auto panel = ToyPanel{}.channel("a").stream("s", "a", 0, {900, 1100}).build();
  EXPECT_DOUBLE_EQ(window_mean(panel, "s", base_minute(), base_minute() + 2), 1000.0);
  auto peaked = ToyPanel{}.channel("a").stream("s", "a", 0, {900, 1500, 1100}).build();
  EXPECT_EQ(window_peak(peaked, "s", base_minute(), base_minute() + 3), 1500);
}

TEST(WindowQueries, GapsAreSkippedNotInterpolated) {
  auto panel = ToyPanel{}.channel("a").stream("s", "a", 0, {100, -1, 300}).build();
  EXPECT_DOUBLE_EQ(window_mean(panel, "s", base_minute(), base_minute() + 3), 200.0);
}

TEST(WindowQueries, HalfOpenBoundaries) {
  auto panel = ToyPanel{}.channel("a").stream("s", "a", 0, {1, 2, 3, 4}).build();
  EXPECT_DOUBLE_EQ(window_mean(panel, "s", base_minute() + 1, base_minute() + 3), 2.5);
  EXPECT_EQ(window_peak(panel, "s", base_minute(), base_minute() + 3), 3);
}

TEST(WindowQueries, SingletonAndEmptyWindows) {
  auto panel = ToyPanel{}.channel("a").stream("s", "a", 0, {42, -1}).build();
  EXPECT_EQ(window_peak(panel, "s", base_minute(), base_minute() + 1), 42);
  EXPECT_THROW(window_mean(panel, "s", base_minute() + 1, base_minute() + 2), EmptyWindow);
  EXPECT_THROW(window_peak(panel, "s", base_minute() + 5, base_minute() + 9), EmptyWindow);
}

TEST(StreamAverage, RampAndToy) {
  std::vector<std::int64_t> ramp(101);
  for (int i = 0; i <= 100; ++i) ramp[i] = i;
  auto panel = ToyPanel{}.channel("a").stream("r", "a", 0, ramp).stream("t", "a", 200, {10, 20, 60}).build();
  EXPECT_DOUBLE_EQ(stream_average(panel, "r"), 50.0);
  EXPECT_DOUBLE_EQ(stream_average(panel, "t"), 30.0);
}

TEST(StreamAverage, WholeStreamWindowMeanMatches) {
  auto panel = ToyPanel{}.channel("a").stream("s", "a", 0, {5, 9, -1, 14, 3}).build();
  const auto s = *panel.find_stream("s");
  EXPECT_DOUBLE_EQ(window_mean(panel, s, panel.stream(s).actual_start, panel.stream(s).end + 1),
                   stream_average(panel, s));
}

TEST(StreamAverage, EmptyStreamThrows) {
  auto panel = ToyPanel{}.channel("a").stream("s", "a", 0, {-1, -1}).build();
  EXPECT_THROW(stream_average(panel, "s"), EmptyStream);
}

TEST(Panel, InvariantsEnforced) {
  ChannelRef a{"a", "A", std::nullopt};
  StreamRecord s{"s", "a", std::nullopt, base_minute(), base_minute() + 5, ""};
  EXPECT_THROW(Panel::build({a}, {s}, {{"nope", base_minute(), 1}}), InvalidPanel);
  EXPECT_THROW(Panel::build({a}, {s}, {{"s", base_minute() + 6, 1}}), InvalidPanel);
  EXPECT_THROW(Panel::build({a}, {s}, {{"s", base_minute(), 1}, {"s", base_minute(), 2}}), InvalidPanel);
  StreamRecord orphan{"t", "zzz", std::nullopt, base_minute(), base_minute() + 5, ""};
  EXPECT_THROW(Panel::build({a}, {orphan}, {}), InvalidPanel);
}

TEST(Panel, InsertionOrderDoesNotMatter) {
  ChannelRef a{"a", "A", std::nullopt}, b{"b", "B", "gen1"};
  StreamRecord s1{"s1", "a", std::nullopt, base_minute(), base_minute() + 5, ""};
  StreamRecord s2{"s2", "b", std::nullopt, base_minute() + 2, base_minute() + 9, ""};
  std::vector<MinuteObservation> obs{{"s1", base_minute() + 1, 10}, {"s2", base_minute() + 4, 20}, {"s1", base_minute(), 5}};
  auto p1 = Panel::build({a, b}, {s1, s2}, obs);
  std::reverse(obs.begin(), obs.end());
  auto p2 = Panel::build({b, a}, {s2, s1}, obs);
  EXPECT_EQ(p1, p2);
  ASSERT_TRUE(p1.observation_window());
  EXPECT_EQ(p1.observation_window()->first, base_minute());
  EXPECT_EQ(p1.observation_window()->second, base_minute() + 4);
}
