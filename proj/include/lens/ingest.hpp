#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lens/csv.hpp"
#include "lens/error.hpp"
#include "lens/panel.hpp"
#include "lens/time.hpp"

namespace lens::ingest {

inline constexpr std::string_view kStreamsHeader =
    "stream_id,channel_id,channel_name,generation,scheduled_start,actual_start,end,title";
inline constexpr std::string_view kObservationsHeader = "stream_id,minute,viewers";

struct ValidationReport {
  static constexpr std::size_t kMaxSamples = 20;

  std::size_t duplicate_observations = 0;
  std::size_t out_of_range_observations = 0;
  std::size_t orphan_observations = 0;
  std::size_t negative_counts = 0;
  std::size_t empty_streams = 0;

  std::vector<std::string> duplicate_samples;
  std::vector<std::string> out_of_range_samples;
  std::vector<std::string> orphan_samples;
  std::vector<std::string> negative_samples;
  std::vector<std::string> empty_stream_samples;

  bool clean() const {
    return duplicate_observations == 0 && out_of_range_observations == 0 && orphan_observations == 0 &&
           negative_counts == 0 && empty_streams == 0;
  }

  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

struct StreamsFile {
  std::vector<ChannelRef> channels;
  std::vector<StreamRecord> streams;
};

enum class Mode { lenient, strict };

struct LoadResult {
  Panel panel;
  ValidationReport report;
};

namespace detail {

inline std::vector<std::size_t> map_header(const std::vector<std::string>& header, std::string_view expected,
                                           std::size_t row) {
  std::vector<std::string> want;
  for (std::size_t start = 0; start <= expected.size();) {
    const auto comma = expected.find(',', start);
    const auto stop = comma == std::string_view::npos ? expected.size() : comma;
    want.emplace_back(expected.substr(start, stop - start));
    start = stop + 1;
  }
  std::vector<std::size_t> index;
  for (const auto& name : want) {
    std::size_t found = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) found = i;
    if (found == header.size()) throw ParseError(row, name, "missing column in header");
    index.push_back(found);
  }
  return index;
}

inline Minute require_time(std::string_view value, std::size_t row, const char* column) {
  auto m = parse_timestamp(value);
  if (!m) throw ParseError(row, column, "invalid timestamp '" + std::string(value) + "'");
  return *m;
}

inline void note(std::vector<std::string>& samples, std::string text) {
  if (samples.size() < ValidationReport::kMaxSamples) samples.push_back(std::move(text));
}

}  // namespace detail

inline StreamsFile parse_streams(std::string_view text) {
  csv::Reader reader(text);
  std::vector<std::string> f;
  if (!reader.next(f)) throw ParseError(1, "", "empty streams file");
  const auto col = detail::map_header(f, kStreamsHeader, reader.row());
  StreamsFile out;
  std::unordered_map<std::string, std::size_t> seen_streams;
  std::unordered_map<std::string, std::size_t> seen_channels;
  while (reader.next(f)) {
    const std::size_t row = reader.row();
    if (f.size() < col.size()) throw ParseError(row, "", "expected 8 fields, found " + std::to_string(f.size()));
    auto field = [&](std::size_t k) -> const std::string& {
      if (col[k] >= f.size()) throw ParseError(row, std::string(kStreamsHeader), "missing field");
      return f[col[k]];
    };
    StreamRecord s;
    s.stream_id = field(0);
    s.channel_id = field(1);
    if (s.stream_id.empty()) throw ParseError(row, "stream_id", "empty stream id");
    if (s.channel_id.empty()) throw ParseError(row, "channel_id", "empty channel id");
    if (!field(4).empty()) s.scheduled_start = detail::require_time(field(4), row, "scheduled_start");
    s.actual_start = detail::require_time(field(5), row, "actual_start");
    s.end = detail::require_time(field(6), row, "end");
    s.title = field(7);
    if (!(s.end > s.actual_start))
      throw EndBeforeStart("row " + std::to_string(row) + ": stream '" + s.stream_id + "' does not end after it starts");
    if (!seen_streams.emplace(s.stream_id, row).second)
      throw DuplicateStreamId("row " + std::to_string(row) + ": stream id '" + s.stream_id +
                              "' already defined on row " + std::to_string(seen_streams[s.stream_id]));
    if (seen_channels.emplace(s.channel_id, out.channels.size()).second) {
      ChannelRef c{s.channel_id, field(2), std::nullopt};
      if (!field(3).empty()) c.generation = field(3);
      out.channels.push_back(std::move(c));
    }
    out.streams.push_back(std::move(s));
  }
  return out;
}

inline StreamsFile load_streams(const std::string& path) { return parse_streams(csv::read_file(path)); }

// Single pass over the observations file: classifies every row, builds the
// dense per-stream series for the clean part, and fills the report. In
// strict mode the first anomaly throws.
inline LoadResult parse_observations(std::string_view text, const StreamsFile& streams, Mode mode = Mode::lenient) {
  ValidationReport report;
  std::unordered_map<std::string, std::size_t> lookup;
  lookup.reserve(streams.streams.size());
  std::vector<std::vector<std::int64_t>> dense(streams.streams.size());
  for (std::size_t i = 0; i < streams.streams.size(); ++i) {
    lookup.emplace(streams.streams[i].stream_id, i);
    dense[i].assign(static_cast<std::size_t>(streams.streams[i].duration() + 1), StreamSeries::kMissing);
  }
  auto fail = [&](const std::string& what) {
    if (mode == Mode::strict) throw StrictModeViolation(what);
  };

  csv::Reader reader(text);
  std::vector<std::string> f;
  if (!reader.next(f)) throw ParseError(1, "", "empty observations file");
  const auto col = detail::map_header(f, kObservationsHeader, reader.row());
  std::string last_id;
  std::size_t last_index = 0;
  bool last_known = false;
  while (reader.next(f)) {
    const std::size_t row = reader.row();
    if (f.size() < 3) throw ParseError(row, "", "expected 3 fields, found " + std::to_string(f.size()));
    const std::string& id = f[col[0]];
    const Minute minute = detail::require_time(f[col[1]], row, "minute");
    std::int64_t viewers = 0;
    if (!csv::parse_int(f[col[2]], viewers))
      throw ParseError(row, "viewers", "not an integer: '" + f[col[2]] + "'");

    if (id != last_id) {
      auto it = lookup.find(id);
      last_known = it != lookup.end();
      if (last_known) last_index = it->second;
      last_id = id;
    }
    auto where = [row] { return "row " + std::to_string(row); };
    if (!last_known) {
      ++report.orphan_observations;
      detail::note(report.orphan_samples, where() + ": unknown stream '" + id + "'");
      fail(where() + ": observation for unknown stream '" + id + "'");
      continue;
    }
    if (viewers < 0) {
      ++report.negative_counts;
      detail::note(report.negative_samples, where() + ": stream '" + id + "' has " + std::to_string(viewers) + " viewers");
      fail(where() + ": negative viewer count");
      continue;
    }
    const auto& s = streams.streams[last_index];
    if (minute < s.actual_start || minute > s.end) {
      ++report.out_of_range_observations;
      detail::note(report.out_of_range_samples,
                   where() + ": " + format_timestamp(minute) + " outside stream '" + id + "'");
      fail(where() + ": observation outside stream bounds");
      continue;
    }
    auto& slot = dense[last_index][static_cast<std::size_t>(minute - s.actual_start)];
    if (slot != StreamSeries::kMissing) {
      ++report.duplicate_observations;
      detail::note(report.duplicate_samples, where() + ": repeated " + format_timestamp(minute) + " for stream '" + id + "'");
      fail(where() + ": duplicate observation");
    }
    slot = viewers;  // last write wins
  }

  for (std::size_t i = 0; i < dense.size(); ++i) {
    bool any = false;
    for (auto v : dense[i])
      if (v != StreamSeries::kMissing) {
        any = true;
        break;
      }
    if (!any) {
      ++report.empty_streams;
      detail::note(report.empty_stream_samples, "stream '" + streams.streams[i].stream_id + "' has no observations");
      fail("stream '" + streams.streams[i].stream_id + "' has no observations");
    }
  }

  Panel panel = Panel::from_dense(streams.channels, streams.streams, std::move(dense));
  return {std::move(panel), std::move(report)};
}

inline LoadResult load_observations(const std::string& path, const StreamsFile& streams, Mode mode = Mode::lenient) {
  return parse_observations(csv::read_file(path), streams, mode);
}

// Anomaly census of a streams/observations pair; nothing is written back.
inline ValidationReport validate(const std::string& streams_path, const std::string& observations_path) {
  const auto streams = load_streams(streams_path);
  return load_observations(observations_path, streams, Mode::lenient).report;
}

// ---------------------------------------------------------------------------
// Serialization back to the two-file CSV layout, in canonical panel order.

inline std::string streams_csv(const Panel& panel) {
  std::string out(kStreamsHeader);
  out += '\n';
  for (StreamIndex s = 0; s < panel.stream_count(); ++s) {
    const auto& r = panel.stream(s);
    const auto& c = panel.channel(panel.channel_of(s));
    out += csv::escape(r.stream_id) + ',' + csv::escape(c.id) + ',' + csv::escape(c.display_name) + ',' +
           csv::escape(c.generation.value_or("")) + ',' +
           (r.scheduled_start ? format_timestamp(*r.scheduled_start) : std::string()) + ',' +
           format_timestamp(r.actual_start) + ',' + format_timestamp(r.end) + ',' + csv::escape(r.title) + '\n';
  }
  return out;
}

inline std::string observations_csv(const Panel& panel) {
  std::string out(kObservationsHeader);
  out += '\n';
  out.reserve(panel.observation_count() * 36);
  for (StreamIndex s = 0; s < panel.stream_count(); ++s) {
    const std::string id = csv::escape(panel.stream(s).stream_id);
    const auto series = panel.series(s);
    const auto values = series.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] == StreamSeries::kMissing) continue;
      out += id;
      out += ',';
      out += format_timestamp(series.start() + static_cast<std::int64_t>(i));
      out += ',';
      out += std::to_string(values[i]);
      out += '\n';
    }
  }
  return out;
}

inline void write_panel(const Panel& panel, const std::string& streams_path, const std::string& observations_path) {
  csv::write_file(streams_path, streams_csv(panel));
  csv::write_file(observations_path, observations_csv(panel));
}

// ---------------------------------------------------------------------------
// Binary cache. Layout (little-endian):
//   "LENSPANL" | u32 version | u64 n_channels | channels | u64 n_streams | streams | dense series
// A file written by any other version is rejected with CacheError.

inline constexpr std::uint32_t kCacheVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i64(std::int64_t v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  void raw(void* p, std::size_t n) {
    if (pos_ + n > data_.size()) throw CacheError("truncated panel cache");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    std::string s(u32(), '\0');
    raw(s.data(), s.size());
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_cache(const Panel& panel) {
  detail::ByteWriter w;
  w.raw("LENSPANL", 8);
  w.u32(kCacheVersion);
  w.u64(panel.channel_count());
  for (const auto& c : panel.channels()) {
    w.str(c.id);
    w.str(c.display_name);
    w.u8(c.generation.has_value());
    if (c.generation) w.str(*c.generation);
  }
  w.u64(panel.stream_count());
  for (const auto& s : panel.streams()) {
    w.str(s.stream_id);
    w.str(s.channel_id);
    w.u8(s.scheduled_start.has_value());
    if (s.scheduled_start) w.i64(s.scheduled_start->value);
    w.i64(s.actual_start.value);
    w.i64(s.end.value);
    w.str(s.title);
  }
  for (StreamIndex s = 0; s < panel.stream_count(); ++s) {
    const auto v = panel.series(s).values();
    w.raw(v.data(), v.size_bytes());
  }
  return std::move(w.buffer());
}

inline Panel decode_cache(std::string_view data) {
  detail::ByteReader r(data);
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, "LENSPANL", 8) != 0) throw CacheError("not a panel cache");
  const auto version = r.u32();
  if (version != kCacheVersion)
    throw CacheError("panel cache version " + std::to_string(version) + " does not match " +
                     std::to_string(kCacheVersion));
  std::vector<ChannelRef> channels(r.u64());
  for (auto& c : channels) {
    c.id = r.str();
    c.display_name = r.str();
    if (r.u8()) c.generation = r.str();
  }
  std::vector<StreamRecord> streams(r.u64());
  for (auto& s : streams) {
    s.stream_id = r.str();
    s.channel_id = r.str();
    if (r.u8()) s.scheduled_start = Minute{r.i64()};
    s.actual_start = Minute{r.i64()};
    s.end = Minute{r.i64()};
    s.title = r.str();
    if (!(s.end > s.actual_start)) throw CacheError("corrupt panel cache");
  }
  std::vector<std::vector<std::int64_t>> series(streams.size());
  for (std::size_t i = 0; i < streams.size(); ++i) {
    series[i].resize(static_cast<std::size_t>(streams[i].duration() + 1));
    r.raw(series[i].data(), series[i].size() * sizeof(std::int64_t));
  }
  if (!r.done()) throw CacheError("trailing bytes in panel cache");
  try {
    return Panel::from_dense(std::move(channels), std::move(streams), std::move(series));
  } catch (const InvalidPanel& e) {
    throw CacheError(std::string("corrupt panel cache: ") + e.what());
  }
}

inline void save_cache(const Panel& panel, const std::string& path) { csv::write_file(path, encode_cache(panel)); }
inline Panel load_cache(const std::string& path) { return decode_cache(csv::read_file(path)); }

}  // namespace lens::ingest
