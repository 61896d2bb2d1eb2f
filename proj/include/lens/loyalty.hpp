#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lens/concurrency.hpp"
#include "lens/error.hpp"
#include "lens/panel.hpp"
#include "lens/stats.hpp"

namespace lens::loyalty {

struct LoyaltyWeights {
  double stability = 0.30;
  double resistance = 0.25;
  double retention = 0.25;
  double floor = 0.20;

  void validate() const {
    if (stability < 0 || resistance < 0 || retention < 0 || floor < 0)
      throw Error("loyalty weights must be non-negative");
    if (std::abs(stability + resistance + retention + floor - 1.0) > 1e-9)
      throw Error("loyalty weights must sum to 1");
  }
};

struct LoyaltyComponents {
  std::string channel;
  std::optional<double> S, R, P, F, L;
  std::size_t n_streams = 0;
  std::size_t n_competed = 0;
  std::size_t n_solo = 0;
  std::size_t n_retention = 0;
};

// S = 1 - clip(CV, 0, 2) / 2 over stream-average viewership.
inline double stability(std::span<const double> stream_averages) {
  const double cv = stats::coefficient_of_variation(stream_averages);
  return 1.0 - std::clamp(cv, 0.0, 2.0) / 2.0;
}

// F = p10 / mean of stream averages, clipped to [0, 1].
inline double floor_ratio(std::span<const double> stream_averages) {
  if (stream_averages.size() < 2) throw DegenerateInput("floor ratio needs at least two streams");
  const double m = stats::mean(stream_averages);
  if (!(m > 0.0)) throw DegenerateInput("floor ratio needs a positive mean");
  return std::clamp(stats::percentile(stream_averages, 10.0) / m, 0.0, 1.0);
}

// R = clip(mean competed average / mean solo average, 0, 1).
inline double competition_resistance(std::span<const double> competed_averages, std::span<const double> solo_averages) {
  if (competed_averages.empty() || solo_averages.empty())
    throw InsufficientClasses("competition resistance needs both competed and solo streams");
  const double solo = stats::mean(solo_averages);
  if (!(solo > 0.0)) throw DegenerateInput("solo streams average zero viewers");
  return std::clamp(stats::mean(competed_averages) / solo, 0.0, 1.0);
}

// Fraction of each stream's live minutes during which at least one in-scope
// stream of a different channel is live. Unset for streams that are out of
// scope or unobserved.
inline std::vector<std::optional<double>> competed_fraction(const Panel& panel, const ChannelScope& scope) {
  const ConcurrencyIndex index(panel, scope);
  std::vector<std::int64_t> contested(panel.stream_count(), 0);
  for (const auto& seg : index.segments()) {
    const auto live = index.live(seg);
    if (live.size() < 2) continue;
    for (StreamIndex s : live) {
      const bool rival = std::any_of(live.begin(), live.end(),
                                     [&](StreamIndex o) { return panel.channel_of(o) != panel.channel_of(s); });
      if (rival) contested[s] += seg.length();
    }
  }
  std::vector<std::optional<double>> out(panel.stream_count());
  for (StreamIndex s = 0; s < panel.stream_count(); ++s) {
    if (!panel.has_observations(s) || !scope.contains(panel.channel_of(s))) continue;
    out[s] = static_cast<double>(contested[s]) / static_cast<double>(panel.stream(s).duration() + 1);
  }
  return out;
}

// A stream is competed when its contested fraction is positive and reaches
// `min_fraction` (0 means any overlap at all).
inline bool is_competed(double fraction, double min_fraction) { return fraction > 0.0 && fraction >= min_fraction; }

inline double competition_resistance(const Panel& panel, ChannelIndex channel, const ChannelScope& scope = ChannelScope::all(),
                                     double min_fraction = 0.0) {
  const auto contested = competed_fraction(panel, scope);
  std::vector<double> competed, solo;
  for (StreamIndex s : panel.streams_of(channel)) {
    if (!contested[s]) continue;
    (is_competed(*contested[s], min_fraction) ? competed : solo).push_back(stream_average(panel, s));
  }
  return competition_resistance(competed, solo);
}

// Retention of one stream: value at the midpoint of the post-peak segment
// over the peak. The peak is the earliest maximum, the segment ends at the
// last observed minute, the midpoint rounds down, and an unobserved midpoint
// falls forward to the next observed minute. Unset if the peak is the final
// observation or zero.
inline std::optional<double> stream_retention(const Panel& panel, StreamIndex s) {
  if (!panel.has_observations(s)) return std::nullopt;
  const auto series = panel.series(s);
  const auto values = series.values();
  std::size_t peak_at = values.size();
  std::int64_t peak = -1;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] > peak) {
      peak = values[i];
      peak_at = i;
    }
  std::size_t last = values.size();
  while (last-- > 0)
    if (values[last] != StreamSeries::kMissing) break;
  if (peak <= 0 || peak_at >= last) return std::nullopt;
  std::size_t mid = peak_at + (last - peak_at) / 2;
  while (values[mid] == StreamSeries::kMissing) ++mid;
  return static_cast<double>(values[mid]) / static_cast<double>(peak);
}

inline double post_peak_retention(const Panel& panel, ChannelIndex channel) {
  std::vector<double> r;
  for (StreamIndex s : panel.streams_of(channel))
    if (auto v = stream_retention(panel, s)) r.push_back(*v);
  if (r.empty()) throw NoEligibleStreams("channel '" + panel.channel(channel).id + "' has no stream with a post-peak segment");
  return stats::median(r);
}

inline double composite(double S, double R, double P, double F, const LoyaltyWeights& w = {}) {
  return w.stability * S + w.resistance * R + w.retention * P + w.floor * F;
}

inline double composite(const LoyaltyComponents& c, const LoyaltyWeights& w = {}) {
  if (!c.S || !c.R || !c.P || !c.F) throw MissingComponent("composite needs all four components for '" + c.channel + "'");
  return composite(*c.S, *c.R, *c.P, *c.F, w);
}

struct LoyaltyOptions {
  LoyaltyWeights weights;
  double competed_min_fraction = 0.0;
};

// Components for every in-scope channel, in channel order. A component that
// cannot be computed stays unset, and so does L.
inline std::vector<LoyaltyComponents> compute_loyalty(const Panel& panel, const ChannelScope& scope = ChannelScope::all(),
                                                      const LoyaltyOptions& opt = {}) {
  opt.weights.validate();
  const auto contested = competed_fraction(panel, scope);
  std::vector<LoyaltyComponents> out;
  for (ChannelIndex c = 0; c < panel.channel_count(); ++c) {
    if (!scope.contains(c)) continue;
    LoyaltyComponents lc;
    lc.channel = panel.channel(c).id;
    std::vector<double> averages, competed, solo;
    for (StreamIndex s : panel.streams_of(c)) {
      if (!panel.has_observations(s)) continue;
      const double avg = stream_average(panel, s);
      averages.push_back(avg);
      (is_competed(*contested[s], opt.competed_min_fraction) ? competed : solo).push_back(avg);
      if (stream_retention(panel, s)) ++lc.n_retention;
    }
    lc.n_streams = averages.size();
    lc.n_competed = competed.size();
    lc.n_solo = solo.size();
    try {
      lc.S = stability(averages);
    } catch (const Error&) {
    }
    try {
      lc.F = floor_ratio(averages);
    } catch (const Error&) {
    }
    try {
      lc.R = competition_resistance(competed, solo);
    } catch (const Error&) {
    }
    try {
      lc.P = post_peak_retention(panel, c);
    } catch (const Error&) {
    }
    if (lc.S && lc.R && lc.P && lc.F) lc.L = composite(lc, opt.weights);
    out.push_back(std::move(lc));
  }
  return out;
}

}  // namespace lens::loyalty
