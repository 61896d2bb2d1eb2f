#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lens/panel.hpp"

namespace lens {

// Subset of channels an analysis is restricted to. An empty scope means all.
class ChannelScope {
 public:
  ChannelScope() = default;

  static ChannelScope all() { return {}; }

  static ChannelScope of(const Panel& panel, const std::vector<std::string>& ids) {
    ChannelScope scope;
    if (ids.empty()) return scope;
    scope.mask_.assign(panel.channel_count(), false);
    for (const auto& id : ids) {
      auto c = panel.find_channel(id);
      if (!c) throw Error("unknown channel '" + id + "' in scope");
      scope.mask_[*c] = true;
    }
    return scope;
  }

  bool contains(ChannelIndex c) const { return mask_.empty() || mask_[c]; }
  bool is_all() const { return mask_.empty(); }

 private:
  std::vector<bool> mask_;
};

// Stabbing-query index: which streams are live at a given minute.
//
// The timeline is cut at every stream start and every (end + 1); each piece
// between consecutive cuts is a Segment with a constant live set. Only
// in-scope streams with at least one observation are indexed.
class ConcurrencyIndex {
 public:
  struct Segment {
    Minute begin;
    Minute end;  // exclusive
    std::uint32_t offset;
    std::uint32_t size;

    std::int64_t length() const { return end - begin; }
  };

  explicit ConcurrencyIndex(const Panel& panel, const ChannelScope& scope = ChannelScope::all()) {
    struct Cut {
      Minute at;
      bool open;
      StreamIndex stream;
    };
    std::vector<Cut> cuts;
    for (StreamIndex s = 0; s < panel.stream_count(); ++s) {
      if (!panel.has_observations(s) || !scope.contains(panel.channel_of(s))) continue;
      cuts.push_back({panel.stream(s).actual_start, true, s});
      cuts.push_back({panel.stream(s).end + 1, false, s});
    }
    std::sort(cuts.begin(), cuts.end(), [](const Cut& a, const Cut& b) {
      if (a.at != b.at) return a.at < b.at;
      if (a.open != b.open) return !a.open;
      return a.stream < b.stream;
    });
    std::set<StreamIndex> live;
    for (std::size_t i = 0; i < cuts.size();) {
      const Minute at = cuts[i].at;
      for (; i < cuts.size() && cuts[i].at == at; ++i) {
        if (cuts[i].open)
          live.insert(cuts[i].stream);
        else
          live.erase(cuts[i].stream);
      }
      if (live.empty() || i == cuts.size()) continue;
      const Segment seg{at, cuts[i].at, static_cast<std::uint32_t>(members_.size()),
                        static_cast<std::uint32_t>(live.size())};
      members_.insert(members_.end(), live.begin(), live.end());
      segments_.push_back(seg);
    }
  }

  std::span<const Segment> segments() const { return segments_; }

  std::span<const StreamIndex> live(const Segment& seg) const {
    return std::span<const StreamIndex>(members_).subspan(seg.offset, seg.size);
  }

  // Streams live at m, in ascending index order.
  std::span<const StreamIndex> live_at(Minute m) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), m,
                               [](Minute value, const Segment& seg) { return value < seg.begin; });
    if (it == segments_.begin()) return {};
    --it;
    if (m >= it->end) return {};
    return live(*it);
  }

  // Includes the stream itself: a solo stream has count 1.
  std::size_t count_at(Minute m) const { return live_at(m).size(); }

  // Index of the segment containing m, if any.
  std::optional<std::size_t> segment_at(Minute m) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), m,
                               [](Minute value, const Segment& seg) { return value < seg.begin; });
    if (it == segments_.begin()) return std::nullopt;
    --it;
    if (m >= it->end) return std::nullopt;
    return static_cast<std::size_t>(it - segments_.begin());
  }

 private:
  std::vector<Segment> segments_;
  std::vector<StreamIndex> members_;
};

inline ConcurrencyIndex build_concurrency_index(const Panel& panel, const ChannelScope& scope = ChannelScope::all()) {
  return ConcurrencyIndex(panel, scope);
}

}  // namespace lens
