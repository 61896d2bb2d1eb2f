#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lens/panel.hpp"
#include "lens/time.hpp"

namespace lens::testing {

inline Minute base_minute() { return *parse_timestamp("2024-01-01T00:00Z"); }

// Small hand-built panels. Stream start offsets are minutes from base_minute();
// each value in `viewers` fills one minute, -1 marks a gap.
class ToyPanel {
 public:
  ToyPanel& channel(std::string id, std::string generation = "") {
    ChannelRef c{id, id, std::nullopt};
    if (!generation.empty()) c.generation = generation;
    channels_.push_back(std::move(c));
    return *this;
  }

  ToyPanel& stream(std::string id, std::string channel, std::int64_t start_offset, std::vector<std::int64_t> viewers) {
    StreamRecord s;
    s.stream_id = std::move(id);
    s.channel_id = std::move(channel);
    s.actual_start = base_minute() + start_offset;
    s.end = s.actual_start + static_cast<std::int64_t>(viewers.size()) - 1;
    s.title = "toy";
    streams_.push_back(std::move(s));
    series_.push_back(std::move(viewers));
    return *this;
  }

  // Constant stream of `minutes` minutes.
  ToyPanel& flat(std::string id, std::string channel, std::int64_t start_offset, std::int64_t minutes,
                 std::int64_t viewers) {
    return stream(std::move(id), std::move(channel), start_offset,
                  std::vector<std::int64_t>(static_cast<std::size_t>(minutes), viewers));
  }

  Panel build() const { return Panel::from_dense(channels_, streams_, series_); }

 private:
  std::vector<ChannelRef> channels_;
  std::vector<StreamRecord> streams_;
  std::vector<std::vector<std::int64_t>> series_;
};

}  // namespace lens::testing
