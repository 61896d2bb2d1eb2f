#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lens/error.hpp"
#include "lens/time.hpp"

namespace lens {

using ChannelIndex = std::uint32_t;
using StreamIndex = std::uint32_t;

struct ChannelRef {
  std::string id;
  std::string display_name;
  std::optional<std::string> generation;

  friend bool operator==(const ChannelRef&, const ChannelRef&) = default;
};

struct StreamRecord {
  std::string stream_id;
  std::string channel_id;
  std::optional<Minute> scheduled_start;
  Minute actual_start;
  Minute end;  // inclusive: the stream is live on every minute in [actual_start, end]
  std::string title;

  std::int64_t duration() const { return end - actual_start; }

  friend bool operator==(const StreamRecord&, const StreamRecord&) = default;
};

struct MinuteObservation {
  std::string stream_id;
  Minute minute;
  std::int64_t viewers = 0;
};

// Read-only view of one stream's per-minute counts over [start, end].
// Unobserved minutes hold kMissing.
class StreamSeries {
 public:
  static constexpr std::int64_t kMissing = -1;

  StreamSeries(Minute start, std::span<const std::int64_t> values) : start_(start), values_(values) {}

  Minute start() const { return start_; }
  Minute end() const { return start_ + static_cast<std::int64_t>(values_.size()) - 1; }
  std::span<const std::int64_t> values() const { return values_; }

  std::optional<std::int64_t> at(Minute m) const {
    const std::int64_t off = m - start_;
    if (off < 0 || off >= static_cast<std::int64_t>(values_.size())) return std::nullopt;
    const std::int64_t v = values_[static_cast<std::size_t>(off)];
    if (v == kMissing) return std::nullopt;
    return v;
  }

 private:
  Minute start_;
  std::span<const std::int64_t> values_;
};

// Immutable panel of channels, streams and minute observations.
//
// Channels are stored sorted by id and streams by (actual_start, stream_id), so
// every query and every analysis result is independent of input order.
class Panel {
 public:
  Panel() = default;

  // Builds a panel and enforces every structural invariant. Any violation
  // throws InvalidPanel; the ingest layer filters dirty input before this.
  static Panel build(std::vector<ChannelRef> channels, std::vector<StreamRecord> streams,
                     std::vector<MinuteObservation> observations) {
    Panel p;
    std::sort(channels.begin(), channels.end(),
              [](const ChannelRef& a, const ChannelRef& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (channels[i].id.empty()) throw InvalidPanel("channel with empty id");
      if (i > 0 && channels[i].id == channels[i - 1].id)
        throw InvalidPanel("duplicate channel id '" + channels[i].id + "'");
      p.channel_lookup_.emplace(channels[i].id, static_cast<ChannelIndex>(i));
    }
    p.channels_ = std::move(channels);

    std::sort(streams.begin(), streams.end(), [](const StreamRecord& a, const StreamRecord& b) {
      if (a.actual_start != b.actual_start) return a.actual_start < b.actual_start;
      return a.stream_id < b.stream_id;
    });
    p.stream_channel_.reserve(streams.size());
    p.offsets_.reserve(streams.size() + 1);
    p.offsets_.push_back(0);
    for (std::size_t i = 0; i < streams.size(); ++i) {
      const auto& s = streams[i];
      if (s.stream_id.empty()) throw InvalidPanel("stream with empty id");
      if (!(s.end > s.actual_start)) throw InvalidPanel("stream '" + s.stream_id + "' ends before it starts");
      auto ch = p.channel_lookup_.find(s.channel_id);
      if (ch == p.channel_lookup_.end())
        throw InvalidPanel("stream '" + s.stream_id + "' references unknown channel '" + s.channel_id + "'");
      if (!p.stream_lookup_.emplace(s.stream_id, static_cast<StreamIndex>(i)).second)
        throw InvalidPanel("duplicate stream id '" + s.stream_id + "'");
      p.stream_channel_.push_back(ch->second);
      p.offsets_.push_back(p.offsets_.back() + static_cast<std::size_t>(s.duration() + 1));
    }
    p.streams_ = std::move(streams);

    p.values_.assign(p.offsets_.back(), StreamSeries::kMissing);
    p.observed_.assign(p.streams_.size(), 0);
    for (const auto& obs : observations) {
      auto it = p.stream_lookup_.find(obs.stream_id);
      if (it == p.stream_lookup_.end())
        throw InvalidPanel("observation references unknown stream '" + obs.stream_id + "'");
      const auto& s = p.streams_[it->second];
      if (obs.minute < s.actual_start || obs.minute > s.end)
        throw InvalidPanel("observation outside bounds of stream '" + obs.stream_id + "'");
      if (obs.viewers < 0) throw InvalidPanel("negative viewer count in stream '" + obs.stream_id + "'");
      auto& slot = p.values_[p.offsets_[it->second] + static_cast<std::size_t>(obs.minute - s.actual_start)];
      if (slot != StreamSeries::kMissing)
        throw InvalidPanel("duplicate observation for stream '" + obs.stream_id + "'");
      slot = obs.viewers;
      ++p.observed_[it->second];
    }
    p.finish();
    return p;
  }

  // Builds directly from dense per-stream series (one value per minute of
  // [actual_start, end], kMissing for gaps). Used by the simulator and cache.
  static Panel from_dense(std::vector<ChannelRef> channels, std::vector<StreamRecord> streams,
                          std::vector<std::vector<std::int64_t>> series) {
    if (series.size() != streams.size()) throw InvalidPanel("series count does not match stream count");
    std::vector<std::size_t> order(streams.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (streams[a].actual_start != streams[b].actual_start) return streams[a].actual_start < streams[b].actual_start;
      return streams[a].stream_id < streams[b].stream_id;
    });
    std::vector<StreamRecord> sorted_streams;
    std::vector<std::vector<std::int64_t>> sorted_series;
    sorted_streams.reserve(streams.size());
    sorted_series.reserve(streams.size());
    for (std::size_t i : order) {
      sorted_streams.push_back(std::move(streams[i]));
      sorted_series.push_back(std::move(series[i]));
    }
    Panel p = build(std::move(channels), std::move(sorted_streams), {});
    for (std::size_t i = 0; i < p.streams_.size(); ++i) {
      const auto& v = sorted_series[i];
      if (v.size() != p.offsets_[i + 1] - p.offsets_[i])
        throw InvalidPanel("series length mismatch for stream '" + p.streams_[i].stream_id + "'");
      std::size_t count = 0;
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[j] < StreamSeries::kMissing) throw InvalidPanel("negative viewer count");
        p.values_[p.offsets_[i] + j] = v[j];
        if (v[j] != StreamSeries::kMissing) ++count;
      }
      p.observed_[i] = count;
    }
    p.finish();
    return p;
  }

  std::span<const ChannelRef> channels() const { return channels_; }
  std::span<const StreamRecord> streams() const { return streams_; }
  std::size_t channel_count() const { return channels_.size(); }
  std::size_t stream_count() const { return streams_.size(); }

  const ChannelRef& channel(ChannelIndex c) const { return channels_[c]; }
  const StreamRecord& stream(StreamIndex s) const { return streams_[s]; }
  ChannelIndex channel_of(StreamIndex s) const { return stream_channel_[s]; }

  std::optional<StreamIndex> find_stream(std::string_view id) const {
    auto it = stream_lookup_.find(std::string(id));
    if (it == stream_lookup_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<ChannelIndex> find_channel(std::string_view id) const {
    auto it = channel_lookup_.find(std::string(id));
    if (it == channel_lookup_.end()) return std::nullopt;
    return it->second;
  }

  StreamSeries series(StreamIndex s) const {
    return StreamSeries(streams_[s].actual_start,
                        std::span<const std::int64_t>(values_).subspan(offsets_[s], offsets_[s + 1] - offsets_[s]));
  }

  std::size_t observation_count(StreamIndex s) const { return observed_[s]; }
  std::size_t observation_count() const { return total_observations_; }

  // Streams with zero observations stay in metadata but are skipped by analyses.
  bool has_observations(StreamIndex s) const { return observed_[s] > 0; }

  // First and last observed minute across the panel; empty panels have none.
  std::optional<std::pair<Minute, Minute>> observation_window() const { return window_; }

  // Channel streams in stream order.
  std::span<const StreamIndex> streams_of(ChannelIndex c) const { return by_channel_[c]; }

  std::optional<Minute> first_observed(StreamIndex s) const { return edge_observed(s, true); }
  std::optional<Minute> last_observed(StreamIndex s) const { return edge_observed(s, false); }

  friend bool operator==(const Panel& a, const Panel& b) {
    return a.channels_ == b.channels_ && a.streams_ == b.streams_ && a.values_ == b.values_;
  }

 private:
  void finish() {
    total_observations_ = 0;
    for (auto n : observed_) total_observations_ += n;
    by_channel_.assign(channels_.size(), {});
    window_.reset();
    for (std::size_t i = 0; i < streams_.size(); ++i) {
      by_channel_[stream_channel_[i]].push_back(static_cast<StreamIndex>(i));
      if (observed_[i] == 0) continue;
      const Minute first = *edge_observed(static_cast<StreamIndex>(i), true);
      const Minute last = *edge_observed(static_cast<StreamIndex>(i), false);
      if (!window_) {
        window_ = {first, last};
      } else {
        window_->first = std::min(window_->first, first);
        window_->second = std::max(window_->second, last);
      }
    }
  }

  std::optional<Minute> edge_observed(StreamIndex s, bool front) const {
    const auto v = series(s).values();
    if (front) {
      for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] != StreamSeries::kMissing) return streams_[s].actual_start + static_cast<std::int64_t>(i);
    } else {
      for (std::size_t i = v.size(); i-- > 0;)
        if (v[i] != StreamSeries::kMissing) return streams_[s].actual_start + static_cast<std::int64_t>(i);
    }
    return std::nullopt;
  }

  std::vector<ChannelRef> channels_;
  std::vector<StreamRecord> streams_;
  std::vector<ChannelIndex> stream_channel_;
  std::vector<std::size_t> offsets_;
  std::vector<std::int64_t> values_;
  std::vector<std::size_t> observed_;
  std::vector<std::vector<StreamIndex>> by_channel_;
  std::unordered_map<std::string, ChannelIndex> channel_lookup_;
  std::unordered_map<std::string, StreamIndex> stream_lookup_;
  std::optional<std::pair<Minute, Minute>> window_;
  std::size_t total_observations_ = 0;
};

// ---------------------------------------------------------------------------
// Window queries. Windows are half-open [from, to); unobserved minutes are
// skipped rather than interpolated.

inline double window_mean(const Panel& panel, StreamIndex s, Minute from, Minute to) {
  const auto series = panel.series(s);
  double sum = 0.0;
  std::size_t n = 0;
  for (Minute m = std::max(from, series.start()); m < to && m <= series.end(); ++m) {
    if (auto v = series.at(m)) {
      sum += static_cast<double>(*v);
      ++n;
    }
  }
  if (n == 0) throw EmptyWindow("no observations for stream '" + panel.stream(s).stream_id + "' in window");
  return sum / static_cast<double>(n);
}

inline std::int64_t window_peak(const Panel& panel, StreamIndex s, Minute from, Minute to) {
  const auto series = panel.series(s);
  std::int64_t peak = -1;
  for (Minute m = std::max(from, series.start()); m < to && m <= series.end(); ++m) {
    if (auto v = series.at(m)) peak = std::max(peak, *v);
  }
  if (peak < 0) throw EmptyWindow("no observations for stream '" + panel.stream(s).stream_id + "' in window");
  return peak;
}

inline double stream_average(const Panel& panel, StreamIndex s) {
  if (!panel.has_observations(s)) throw EmptyStream("stream '" + panel.stream(s).stream_id + "' has no observations");
  double sum = 0.0;
  for (auto v : panel.series(s).values())
    if (v != StreamSeries::kMissing) sum += static_cast<double>(v);
  return sum / static_cast<double>(panel.observation_count(s));
}

namespace detail {
inline StreamIndex require_stream(const Panel& panel, std::string_view id) {
  auto s = panel.find_stream(id);
  if (!s) throw Error("unknown stream '" + std::string(id) + "'");
  return *s;
}
}  // namespace detail

inline double window_mean(const Panel& panel, std::string_view stream_id, Minute from, Minute to) {
  return window_mean(panel, detail::require_stream(panel, stream_id), from, to);
}
inline std::int64_t window_peak(const Panel& panel, std::string_view stream_id, Minute from, Minute to) {
  return window_peak(panel, detail::require_stream(panel, stream_id), from, to);
}
inline double stream_average(const Panel& panel, std::string_view stream_id) {
  return stream_average(panel, detail::require_stream(panel, stream_id));
}

}  // namespace lens
