#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lens/concurrency.hpp"
#include "lens/error.hpp"
#include "lens/panel.hpp"
#include "lens/stats.hpp"

namespace lens::overlap {

inline constexpr std::int64_t kDefaultDelta = 8;
inline constexpr std::int64_t kDefaultTrendPeriodDays = 90;

// Stream `starting_stream` begins at t0 while `concurrent_stream` (another
// channel) is live over the whole [t0 - delta, t0 + delta) window.
struct StartEvent {
  StreamIndex starting_stream;
  Minute t0;
  StreamIndex concurrent_stream;

  friend bool operator==(const StartEvent&, const StartEvent&) = default;
};

// Ordered by t0, then starting stream id, then concurrent stream id.
inline std::vector<StartEvent> enumerate_start_events(const Panel& panel, std::int64_t delta,
                                                      const ChannelScope& scope = ChannelScope::all()) {
  if (delta < 1) throw Error("delta must be at least one minute");
  const ConcurrencyIndex index(panel, scope);
  std::vector<StartEvent> events;
  std::vector<StreamIndex> order;
  for (StreamIndex s = 0; s < panel.stream_count(); ++s)
    if (panel.has_observations(s) && scope.contains(panel.channel_of(s))) order.push_back(s);
  std::stable_sort(order.begin(), order.end(), [&](StreamIndex a, StreamIndex b) {
    if (panel.stream(a).actual_start != panel.stream(b).actual_start)
      return panel.stream(a).actual_start < panel.stream(b).actual_start;
    return panel.stream(a).stream_id < panel.stream(b).stream_id;
  });
  std::vector<StreamIndex> partners;
  for (StreamIndex a : order) {
    const Minute t0 = panel.stream(a).actual_start;
    partners.clear();
    for (StreamIndex b : index.live_at(t0)) {
      if (b == a || panel.channel_of(b) == panel.channel_of(a)) continue;
      const auto& rb = panel.stream(b);
      if (rb.actual_start <= t0 - delta && rb.end >= t0 + delta) partners.push_back(b);
    }
    std::sort(partners.begin(), partners.end(),
              [&](StreamIndex x, StreamIndex y) { return panel.stream(x).stream_id < panel.stream(y).stream_id; });
    for (StreamIndex b : partners) events.push_back({a, t0, b});
  }
  return events;
}

// Change in the concurrent stream's mean viewership across the start:
// mean over [t0, t0 + delta) minus mean over [t0 - delta, t0).
inline double start_event_delta(const Panel& panel, const StartEvent& e, std::int64_t delta) {
  const double pre = window_mean(panel, e.concurrent_stream, e.t0 - delta, e.t0);
  const double post = window_mean(panel, e.concurrent_stream, e.t0, e.t0 + delta);
  return post - pre;
}

// Channel-by-channel matrix of optional values. Cell (i, j) of the directed
// matrix summarises events where a stream of channel i starts during a stream
// of channel j; event counts always keep that directed meaning.
struct OverlapMatrix {
  std::vector<std::string> channels;
  std::vector<std::optional<double>> values;
  std::vector<std::size_t> events;
  bool symmetrized = false;
  std::size_t skipped_empty_window = 0;
  std::size_t skipped_nonpositive_baseline = 0;

  std::size_t size() const { return channels.size(); }
  std::optional<double>& at(std::size_t i, std::size_t j) { return values[i * size() + j]; }
  const std::optional<double>& at(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
  std::size_t event_count(std::size_t i, std::size_t j) const { return events[i * size() + j]; }

  static OverlapMatrix empty_for(const Panel& panel) {
    OverlapMatrix m;
    for (const auto& c : panel.channels()) m.channels.push_back(c.id);
    m.values.assign(m.size() * m.size(), std::nullopt);
    m.events.assign(m.size() * m.size(), 0);
    return m;
  }
};

// Median normalised drop (-delta V_j / pre-window mean of j) per directed
// channel pair. Negative medians are kept as they are.
inline OverlapMatrix pairwise_overlap(const Panel& panel, std::int64_t delta,
                                      const ChannelScope& scope = ChannelScope::all()) {
  OverlapMatrix m = OverlapMatrix::empty_for(panel);
  const std::size_t n = m.size();
  std::vector<std::vector<double>> cells(n * n);
  for (const auto& e : enumerate_start_events(panel, delta, scope)) {
    double pre = 0.0, post = 0.0;
    try {
      pre = window_mean(panel, e.concurrent_stream, e.t0 - delta, e.t0);
      post = window_mean(panel, e.concurrent_stream, e.t0, e.t0 + delta);
    } catch (const EmptyWindow&) {
      ++m.skipped_empty_window;
      continue;
    }
    if (!(pre > 0.0)) {
      ++m.skipped_nonpositive_baseline;
      continue;
    }
    const std::size_t i = panel.channel_of(e.starting_stream);
    const std::size_t j = panel.channel_of(e.concurrent_stream);
    cells[i * n + j].push_back(-(post - pre) / pre);
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    m.events[c] = cells[c].size();
    if (!cells[c].empty()) m.values[c] = stats::median(cells[c]);
  }
  return m;
}

enum class SymmetryPolicy {
  strict,   // undefined unless both directions are defined
  lenient,  // copy the defined direction when the other is missing
};

inline OverlapMatrix symmetrize(const OverlapMatrix& directed, SymmetryPolicy policy = SymmetryPolicy::strict) {
  OverlapMatrix out = directed;
  if (directed.symmetrized) return out;
  const std::size_t n = directed.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.at(i, i).reset();
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = directed.at(i, j);
      const auto& b = directed.at(j, i);
      std::optional<double> v;
      if (a && b)
        v = (*a + *b) / 2.0;
      else if (policy == SymmetryPolicy::lenient)
        v = a ? a : b;
      out.at(i, j) = v;
      out.at(j, i) = v;
    }
  }
  out.symmetrized = true;
  return out;
}

// ---------------------------------------------------------------------------
// Pairwise concurrent-streaming frequency.
//
// For channels a and b over some span of time, with L_a the set of minutes on
// which a has any stream live, the frequency is 2 |L_a ∩ L_b| / (|L_a| + |L_b|):
// the share of the pair's live minutes that are spent streaming alongside the
// other channel. Undefined when neither channel streamed.

struct PairMinutes {
  std::size_t channels = 0;
  std::size_t periods = 0;
  std::vector<std::int64_t> live;  // [period][channel]
  std::vector<std::int64_t> both;  // [period][a][b], a < b

  std::int64_t live_at(std::size_t p, std::size_t c) const { return live[p * channels + c]; }
  std::int64_t both_at(std::size_t p, std::size_t a, std::size_t b) const {
    return both[(p * channels + a) * channels + b];
  }

  std::optional<double> frequency(std::size_t p, std::size_t a, std::size_t b) const {
    if (a > b) std::swap(a, b);
    const std::int64_t denom = live_at(p, a) + live_at(p, b);
    if (denom == 0) return std::nullopt;
    return 2.0 * static_cast<double>(both_at(p, a, b)) / static_cast<double>(denom);
  }
};

// Accumulates channel-level live minutes per period of `period_minutes`
// starting at `origin` (one period covering everything when period_minutes <= 0).
inline PairMinutes accumulate_pair_minutes(const Panel& panel, const ChannelScope& scope, Minute origin,
                                           std::int64_t period_minutes) {
  const ConcurrencyIndex index(panel, scope);
  PairMinutes pm;
  pm.channels = panel.channel_count();
  pm.periods = 1;
  if (period_minutes > 0 && !index.segments().empty()) {
    const Minute last = index.segments().back().end - 1;
    pm.periods = static_cast<std::size_t>(detail::floor_div(last - origin, period_minutes) + 1);
  }
  const std::size_t n = pm.channels;
  pm.live.assign(pm.periods * n, 0);
  pm.both.assign(pm.periods * n * n, 0);
  std::vector<ChannelIndex> live_channels;
  for (const auto& seg : index.segments()) {
    live_channels.clear();
    for (StreamIndex s : index.live(seg)) live_channels.push_back(panel.channel_of(s));
    std::sort(live_channels.begin(), live_channels.end());
    live_channels.erase(std::unique(live_channels.begin(), live_channels.end()), live_channels.end());
    Minute at = seg.begin;
    while (at < seg.end) {
      std::size_t p = 0;
      Minute stop = seg.end;
      if (period_minutes > 0) {
        const std::int64_t k = detail::floor_div(at - origin, period_minutes);
        if (k < 0) throw Error("period origin lies after stream activity");
        p = static_cast<std::size_t>(k);
        stop = std::min(seg.end, origin + (k + 1) * period_minutes);
      }
      const std::int64_t len = stop - at;
      for (std::size_t x = 0; x < live_channels.size(); ++x) {
        pm.live[p * n + live_channels[x]] += len;
        for (std::size_t y = x + 1; y < live_channels.size(); ++y)
          pm.both[(p * n + live_channels[x]) * n + live_channels[y]] += len;
      }
      at = stop;
    }
  }
  return pm;
}

// Whole-panel concurrent-streaming frequency for every channel pair (the
// heatmap data). Diagonal cells are undefined.
inline OverlapMatrix concurrency_frequency(const Panel& panel, const ChannelScope& scope = ChannelScope::all()) {
  OverlapMatrix m = OverlapMatrix::empty_for(panel);
  const auto pm = accumulate_pair_minutes(panel, scope, Minute{0}, 0);
  for (std::size_t a = 0; a < m.size(); ++a)
    for (std::size_t b = 0; b < m.size(); ++b)
      if (a != b && scope.contains(static_cast<ChannelIndex>(a)) && scope.contains(static_cast<ChannelIndex>(b)))
        m.at(a, b) = pm.frequency(0, a, b);
  m.symmetrized = true;
  return m;
}

struct TrendPoint {
  std::size_t period;
  double fraction;
};

struct TrendResult {
  std::vector<std::string> cohort;
  std::int64_t period_days = kDefaultTrendPeriodDays;
  Minute origin;
  std::vector<TrendPoint> points;
  double rho = 0.0;
  double first_fraction = 0.0;
  double last_fraction = 0.0;
};

// Per-period mean pairwise concurrent-streaming frequency across the cohort
// and its Spearman correlation with the period index. Periods start at the
// UTC midnight on or before the first observed minute. A period in which no
// cohort pair streamed at all contributes a frequency of zero.
inline TrendResult concurrency_trend(const Panel& panel, const std::vector<std::string>& cohort,
                                     std::int64_t period_days = kDefaultTrendPeriodDays) {
  if (period_days < 1) throw Error("period length must be at least one day");
  if (cohort.size() < 2) throw DegenerateInput("trend cohort needs at least two channels");
  const auto window = panel.observation_window();
  if (!window) throw DegenerateInput("panel has no observations");
  const ChannelScope scope = ChannelScope::of(panel, cohort);
  std::vector<ChannelIndex> members;
  for (const auto& id : cohort) members.push_back(*panel.find_channel(id));
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (members.size() < 2) throw DegenerateInput("trend cohort needs at least two distinct channels");

  TrendResult out;
  out.cohort = cohort;
  out.period_days = period_days;
  out.origin = Minute{day_index(window->first) * kMinutesPerDay};
  const auto pm = accumulate_pair_minutes(panel, scope, out.origin, period_days * kMinutesPerDay);

  for (ChannelIndex c : members) {
    std::size_t active = 0;
    for (std::size_t p = 0; p < pm.periods; ++p) active += pm.live_at(p, c) > 0;
    if (active < 2)
      throw DegenerateInput("channel '" + panel.channel(c).id + "' streams in fewer than two periods");
  }

  std::size_t first = pm.periods, last = 0;
  for (std::size_t p = 0; p < pm.periods; ++p)
    for (ChannelIndex c : members)
      if (pm.live_at(p, c) > 0) {
        first = std::min(first, p);
        last = std::max(last, p);
      }
  std::vector<double> index, fraction;
  for (std::size_t p = first; p <= last; ++p) {
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t x = 0; x < members.size(); ++x)
      for (std::size_t y = x + 1; y < members.size(); ++y)
        if (auto f = pm.frequency(p, members[x], members[y])) {
          sum += *f;
          ++defined;
        }
    const double value = defined ? sum / static_cast<double>(defined) : 0.0;
    out.points.push_back({p, value});
    index.push_back(static_cast<double>(p));
    fraction.push_back(value);
  }
  if (out.points.size() < 2) throw DegenerateInput("trend needs at least two periods");
  out.rho = stats::spearman_rho(index, fraction);
  out.first_fraction = fraction.front();
  out.last_fraction = fraction.back();
  return out;
}

}  // namespace lens::overlap
