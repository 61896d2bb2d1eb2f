#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lens/concurrency.hpp"
#include "lens/error.hpp"
#include "lens/panel.hpp"
#include "lens/stats.hpp"

namespace lens::transfer {

struct TransferParams {
  std::int64_t pre_window_minutes = 3;
  std::int64_t post_window_minutes = 5;
  std::int64_t span_guard_minutes = 5;
  double rel_spike_threshold = 0.10;
  double abs_spike_threshold = 100.0;
  double source_fraction_threshold = 0.05;
  double min_final_viewers = 200.0;

  void validate() const {
    if (pre_window_minutes < 1 || post_window_minutes < 1 || span_guard_minutes < 1)
      throw Error("transfer windows must be at least one minute");
    if (!(rel_spike_threshold > 0 && abs_spike_threshold > 0 && source_fraction_threshold > 0 && min_final_viewers > 0))
      throw Error("transfer thresholds must be positive");
  }
};

struct TransferEvent {
  std::string source_stream;
  std::string receiving_stream;
  std::string source_channel;
  std::string receiving_channel;
  Minute t_e;
  double pre_mean = 0.0;
  std::int64_t post_peak = 0;
  double spike = 0.0;
  std::int64_t source_final_viewers = 0;
  double source_stream_average = 0.0;
  double efficiency = 0.0;
  bool over_unity = false;
};

// The four acceptance predicates, re-checkable from a stored event.
inline bool passes_thresholds(const TransferEvent& e, const TransferParams& p) {
  return e.spike > p.rel_spike_threshold * e.pre_mean && e.spike > p.abs_spike_threshold &&
         e.spike > p.source_fraction_threshold * e.source_stream_average &&
         static_cast<double>(e.source_final_viewers) >= p.min_final_viewers;
}

struct ScanDiagnostics {
  std::size_t endings_scanned = 0;
  std::size_t candidate_pairs = 0;
  std::size_t skipped_empty_window = 0;
};

struct ScanResult {
  std::vector<TransferEvent> events;
  ScanDiagnostics diagnostics;
};

// Scans every stream ending. For source A ending at t_e (its metadata end),
// each receiver B of another channel with B.start <= t_e - guard and
// B.end >= t_e + guard is compared: mean over [t_e - pre, t_e) against peak
// over [t_e, t_e + post). Events come out ordered by t_e, then source id,
// then receiver id.
inline ScanResult detect_transfers(const Panel& panel, const TransferParams& params = {},
                                   const ChannelScope& scope = ChannelScope::all()) {
  params.validate();
  const ConcurrencyIndex index(panel, scope);
  ScanResult out;
  std::vector<StreamIndex> sources;
  for (StreamIndex s = 0; s < panel.stream_count(); ++s)
    if (panel.has_observations(s) && scope.contains(panel.channel_of(s))) sources.push_back(s);
  std::sort(sources.begin(), sources.end(), [&](StreamIndex a, StreamIndex b) {
    if (panel.stream(a).end != panel.stream(b).end) return panel.stream(a).end < panel.stream(b).end;
    return panel.stream(a).stream_id < panel.stream(b).stream_id;
  });

  std::vector<StreamIndex> receivers;
  for (StreamIndex a : sources) {
    ++out.diagnostics.endings_scanned;
    const auto& ra = panel.stream(a);
    const Minute t_e = ra.end;
    receivers.clear();
    for (StreamIndex b : index.live_at(t_e)) {
      if (b == a || panel.channel_of(b) == panel.channel_of(a)) continue;
      const auto& rb = panel.stream(b);
      if (rb.actual_start <= t_e - params.span_guard_minutes && rb.end >= t_e + params.span_guard_minutes)
        receivers.push_back(b);
    }
    if (receivers.empty()) continue;
    std::sort(receivers.begin(), receivers.end(),
              [&](StreamIndex x, StreamIndex y) { return panel.stream(x).stream_id < panel.stream(y).stream_id; });

    const Minute last = *panel.last_observed(a);
    const std::int64_t final_viewers = *panel.series(a).at(last);
    const double source_avg = stream_average(panel, a);
    for (StreamIndex b : receivers) {
      ++out.diagnostics.candidate_pairs;
      TransferEvent e;
      try {
        e.pre_mean = window_mean(panel, b, t_e - params.pre_window_minutes, t_e);
        e.post_peak = window_peak(panel, b, t_e, t_e + params.post_window_minutes);
      } catch (const EmptyWindow&) {
        ++out.diagnostics.skipped_empty_window;
        continue;
      }
      e.source_stream = ra.stream_id;
      e.receiving_stream = panel.stream(b).stream_id;
      e.source_channel = panel.channel(panel.channel_of(a)).id;
      e.receiving_channel = panel.channel(panel.channel_of(b)).id;
      e.t_e = t_e;
      e.spike = static_cast<double>(e.post_peak) - e.pre_mean;
      e.source_final_viewers = final_viewers;
      e.source_stream_average = source_avg;
      if (!passes_thresholds(e, params)) continue;
      e.efficiency = e.spike / static_cast<double>(final_viewers);
      e.over_unity = e.efficiency > 1.0;
      out.events.push_back(std::move(e));
    }
  }
  return out;
}

struct TransferSummary {
  std::size_t total_events = 0;
  std::size_t plausible_events = 0;
  double fp_estimate = 0.0;
  std::optional<double> mean_spike_plausible;
  std::optional<double> median_efficiency;
  std::optional<std::pair<double, double>> iqr_efficiency;
  std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
  // Ten most frequent ordered channel pairs, most frequent first.
  std::vector<std::pair<std::pair<std::string, std::string>, std::size_t>> top_pairs;
  double top10_share = 0.0;
};

// Efficiency statistics use only events with efficiency <= 1; the share of
// events above 1 is the false-positive estimate.
inline TransferSummary summarize_transfers(const std::vector<TransferEvent>& events) {
  TransferSummary s;
  s.total_events = events.size();
  if (events.empty()) return s;
  std::vector<double> plausible;
  double spike_sum = 0.0;
  std::size_t over = 0;
  for (const auto& e : events) {
    ++s.pair_counts[{e.source_channel, e.receiving_channel}];
    if (e.efficiency > 1.0) {
      ++over;
    } else {
      plausible.push_back(e.efficiency);
      spike_sum += e.spike;
    }
  }
  s.plausible_events = plausible.size();
  s.fp_estimate = static_cast<double>(over) / static_cast<double>(events.size());
  if (!plausible.empty()) {
    std::sort(plausible.begin(), plausible.end());
    s.mean_spike_plausible = spike_sum / static_cast<double>(plausible.size());
    s.median_efficiency = stats::percentile_sorted(plausible, 50.0);
    s.iqr_efficiency = std::make_pair(stats::percentile_sorted(plausible, 25.0), stats::percentile_sorted(plausible, 75.0));
  }
  std::vector<std::pair<std::pair<std::string, std::string>, std::size_t>> ranked(s.pair_counts.begin(),
                                                                                  s.pair_counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > 10) ranked.resize(10);
  std::size_t top = 0;
  for (const auto& r : ranked) top += r.second;
  s.top_pairs = std::move(ranked);
  s.top10_share = static_cast<double>(top) / static_cast<double>(events.size());
  return s;
}

}  // namespace lens::transfer
