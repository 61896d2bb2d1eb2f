#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lens/csv.hpp"
#include "lens/dilution.hpp"
#include "lens/error.hpp"
#include "lens/loyalty.hpp"
#include "lens/overlap.hpp"
#include "lens/panel.hpp"
#include "lens/permtest.hpp"
#include "lens/time.hpp"
#include "lens/transfer.hpp"

namespace lens::report {

using json = nlohmann::json;

inline constexpr std::string_view kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Number formatting. CSV cells and JSON numbers both carry six significant
// digits; undefined values are an empty cell or null.

inline std::string cell(double v) { return csv::format_number(v); }
inline std::string cell(const std::optional<double>& v) { return v ? cell(*v) : std::string(); }

inline json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::strtod(csv::format_number(v).c_str(), nullptr);
}
inline json num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

inline std::string join_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += csv::escape(fields[i]);
  }
  out.push_back('\n');
  return out;
}

inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string digest(std::string_view data) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(data)));
  return buf;
}

// ---------------------------------------------------------------------------
// Overlap and concurrency matrices.

inline std::string matrix_csv(const overlap::OverlapMatrix& m) {
  std::vector<std::string> header{"channel"};
  header.insert(header.end(), m.channels.begin(), m.channels.end());
  std::string out = join_row(header);
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::vector<std::string> row{m.channels[i]};
    for (std::size_t j = 0; j < m.size(); ++j) row.push_back(cell(m.at(i, j)));
    out += join_row(row);
  }
  return out;
}

inline std::string counts_csv(const overlap::OverlapMatrix& m) {
  std::vector<std::string> header{"channel"};
  header.insert(header.end(), m.channels.begin(), m.channels.end());
  std::string out = join_row(header);
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::vector<std::string> row{m.channels[i]};
    for (std::size_t j = 0; j < m.size(); ++j) row.push_back(std::to_string(m.event_count(i, j)));
    out += join_row(row);
  }
  return out;
}

inline overlap::OverlapMatrix parse_matrix_csv(std::string_view text) {
  csv::Reader reader(text);
  std::vector<std::string> f;
  if (!reader.next(f) || f.empty() || f[0] != "channel") throw ParseError(1, "", "matrix CSV needs a 'channel' header");
  overlap::OverlapMatrix m;
  m.channels.assign(f.begin() + 1, f.end());
  const std::size_t n = m.channels.size();
  m.values.assign(n * n, std::nullopt);
  m.events.assign(n * n, 0);
  std::size_t i = 0;
  while (reader.next(f)) {
    if (i >= n) throw ParseError(reader.row(), "", "more rows than channels");
    if (f.size() != n + 1) throw ParseError(reader.row(), "", "expected " + std::to_string(n + 1) + " fields");
    if (f[0] != m.channels[i]) throw ParseError(reader.row(), "channel", "row order does not match header");
    for (std::size_t j = 0; j < n; ++j) {
      if (f[j + 1].empty()) continue;
      char* end = nullptr;
      const double v = std::strtod(f[j + 1].c_str(), &end);
      if (end != f[j + 1].c_str() + f[j + 1].size()) throw ParseError(reader.row(), m.channels[j], "not a number");
      m.at(i, j) = v;
    }
    ++i;
  }
  if (i != n) throw ParseError(reader.row(), "", "fewer rows than channels");
  return m;
}

// Network data: undirected edges over defined cells, weighted by the symmetrized
// overlap, with the number of start events behind each edge.
inline std::string edges_csv(const overlap::OverlapMatrix& sym) {
  std::string out = join_row({"channel_a", "channel_b", "overlap", "events"});
  for (std::size_t i = 0; i < sym.size(); ++i)
    for (std::size_t j = i + 1; j < sym.size(); ++j) {
      if (!sym.at(i, j)) continue;
      out += join_row({sym.channels[i], sym.channels[j], cell(*sym.at(i, j)),
                       std::to_string(sym.event_count(i, j) + sym.event_count(j, i))});
    }
  return out;
}

inline std::string nodes_csv(const Panel& panel) {
  std::string out = join_row({"channel", "streams", "live_minutes", "mean_stream_average"});
  for (ChannelIndex c = 0; c < panel.channel_count(); ++c) {
    std::size_t n = 0;
    std::int64_t minutes = 0;
    double sum = 0.0;
    for (StreamIndex s : panel.streams_of(c)) {
      if (!panel.has_observations(s)) continue;
      ++n;
      minutes += panel.stream(s).duration() + 1;
      sum += stream_average(panel, s);
    }
    out += join_row({panel.channels()[c].id, std::to_string(n), std::to_string(minutes),
                     n ? cell(sum / static_cast<double>(n)) : std::string()});
  }
  return out;
}

inline std::string trend_csv(const overlap::TrendResult& t) {
  std::string out = join_row({"period", "period_start", "fraction"});
  for (const auto& p : t.points)
    out += join_row({std::to_string(p.period),
                     format_timestamp(t.origin + static_cast<std::int64_t>(p.period) * t.period_days * kMinutesPerDay),
                     cell(p.fraction)});
  return out;
}

inline json trend_json(const overlap::TrendResult& t) {
  return {{"cohort", t.cohort},
          {"period_days", t.period_days},
          {"origin", format_timestamp(t.origin)},
          {"periods", t.points.size()},
          {"rho", num(t.rho)},
          {"first_fraction", num(t.first_fraction)},
          {"last_fraction", num(t.last_fraction)}};
}

// ---------------------------------------------------------------------------
// Transfers.

inline const std::vector<std::string>& event_columns() {
  static const std::vector<std::string> cols{"source_stream",   "receiving_stream",     "source_channel",
                                             "receiving_channel", "t_e",                "pre_mean",
                                             "post_peak",       "spike",                "source_final_viewers",
                                             "source_stream_average", "efficiency",     "over_unity"};
  return cols;
}

inline std::string events_csv(const std::vector<transfer::TransferEvent>& events) {
  std::string out = join_row(event_columns());
  for (const auto& e : events)
    out += join_row({e.source_stream, e.receiving_stream, e.source_channel, e.receiving_channel,
                     format_timestamp(e.t_e), cell(e.pre_mean), std::to_string(e.post_peak), cell(e.spike),
                     std::to_string(e.source_final_viewers), cell(e.source_stream_average), cell(e.efficiency),
                     e.over_unity ? "true" : "false"});
  return out;
}

inline std::vector<transfer::TransferEvent> parse_events_csv(std::string_view text) {
  csv::Reader reader(text);
  std::vector<std::string> f;
  if (!reader.next(f)) throw ParseError(1, "", "empty events file");
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < f.size(); ++i) col[f[i]] = i;
  for (const char* need : {"source_stream", "receiving_stream", "t_e"})
    if (!col.count(need)) throw ParseError(1, need, "missing column");
  auto get = [&](const char* name) -> std::string {
    auto it = col.find(name);
    return it == col.end() || it->second >= f.size() ? std::string() : f[it->second];
  };
  auto real = [&](const char* name) { return get(name).empty() ? 0.0 : std::strtod(get(name).c_str(), nullptr); };
  auto integer = [&](const char* name) {
    std::int64_t v = 0;
    csv::parse_int(get(name), v);
    return v;
  };
  std::vector<transfer::TransferEvent> events;
  while (reader.next(f)) {
    transfer::TransferEvent e;
    e.source_stream = get("source_stream");
    e.receiving_stream = get("receiving_stream");
    e.source_channel = get("source_channel");
    e.receiving_channel = get("receiving_channel");
    const auto te = parse_timestamp(get("t_e"));
    if (!te) throw ParseError(reader.row(), "t_e", "bad timestamp");
    e.t_e = *te;
    e.pre_mean = real("pre_mean");
    e.post_peak = integer("post_peak");
    e.spike = real("spike");
    e.source_final_viewers = integer("source_final_viewers");
    e.source_stream_average = real("source_stream_average");
    e.efficiency = real("efficiency");
    e.over_unity = get("over_unity") == "true";
    events.push_back(std::move(e));
  }
  return events;
}

inline json transfer_summary_json(const transfer::TransferSummary& s, const transfer::ScanDiagnostics& d,
                                  const transfer::TransferParams& p) {
  json top = json::array();
  for (const auto& [pair, n] : s.top_pairs) top.push_back({{"source", pair.first}, {"receiver", pair.second}, {"events", n}});
  json iqr = nullptr;
  if (s.iqr_efficiency) iqr = json::array({num(s.iqr_efficiency->first), num(s.iqr_efficiency->second)});
  return {{"params",
           {{"pre", p.pre_window_minutes},
            {"post", p.post_window_minutes},
            {"guard", p.span_guard_minutes},
            {"rel", num(p.rel_spike_threshold)},
            {"abs", num(p.abs_spike_threshold)},
            {"src_frac", num(p.source_fraction_threshold)},
            {"min_final", num(p.min_final_viewers)}}},
          {"total_events", s.total_events},
          {"plausible_events", s.plausible_events},
          {"fp_estimate", num(s.fp_estimate)},
          {"mean_spike_plausible", num(s.mean_spike_plausible)},
          {"median_efficiency", num(s.median_efficiency)},
          {"iqr_efficiency", iqr},
          {"top_pairs", top},
          {"top10_share", num(s.top10_share)},
          {"diagnostics",
           {{"endings_scanned", d.endings_scanned},
            {"candidate_pairs", d.candidate_pairs},
            {"skipped_empty_window", d.skipped_empty_window}}}};
}

// Plot extract: both streams of one event over [t_e - 30, t_e + 30], observed
// minutes only.
inline std::string transfer_extract_csv(const Panel& panel, const transfer::TransferEvent& e,
                                        std::int64_t half_width = 30) {
  std::string out = join_row({"role", "stream_id", "channel", "minute", "offset", "viewers"});
  const std::pair<const char*, const std::string*> roles[] = {{"source", &e.source_stream},
                                                              {"receiver", &e.receiving_stream}};
  for (const auto& [role, id] : roles) {
    const auto s = panel.find_stream(*id);
    if (!s) throw MissingResult("event stream '" + *id + "' is not in the panel");
    const auto series = panel.series(*s);
    for (std::int64_t off = -half_width; off <= half_width; ++off) {
      const auto v = series.at(e.t_e + off);
      if (!v) continue;
      out += join_row({role, *id, panel.stream(*s).channel_id, format_timestamp(e.t_e + off), std::to_string(off),
                       std::to_string(*v)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dilution.

inline std::string buckets_csv(const dilution::DilutionBuckets& b) {
  std::string out = join_row({"k", "n", "per_stream_mean", "total_mean"});
  for (const auto& x : b.buckets)
    out += join_row({std::to_string(x.k), std::to_string(x.samples), cell(x.per_stream_mean), cell(x.total_mean)});
  return out;
}

inline json dilution_json(const dilution::DilutionResult& r) {
  json buckets = json::array();
  for (const auto& b : r.buckets.buckets)
    buckets.push_back({{"k", b.k},
                       {"samples", b.samples},
                       {"minutes", b.minutes},
                       {"per_stream_mean", num(b.per_stream_mean)},
                       {"total_mean", num(b.total_mean)}});
  return {{"n_samples", r.n_samples},
          {"n_days", r.n_days},
          {"tz_offset_minutes", r.tz_offset_minutes},
          {"rho_total_vs_k", num(r.rho_total_vs_k)},
          {"rho_residual", num(r.rho_residual)},
          {"ci",
           {{"lower", num(r.residual_ci.lower)},
            {"upper", num(r.residual_ci.upper)},
            {"level", num(r.residual_ci.level)},
            {"iterations", r.residual_ci.iterations},
            {"failed_iterations", r.residual_ci.failed_iterations},
            {"seed", r.residual_ci.seed}}},
          {"buckets", buckets}};
}

// ---------------------------------------------------------------------------
// Loyalty.

inline std::string loyalty_csv(const std::vector<loyalty::LoyaltyComponents>& rows) {
  std::string out = join_row({"channel", "S", "R", "P", "F", "L", "n_streams", "n_competed", "n_solo"});
  for (const auto& r : rows)
    out += join_row({r.channel, cell(r.S), cell(r.R), cell(r.P), cell(r.F), cell(r.L), std::to_string(r.n_streams),
                     std::to_string(r.n_competed), std::to_string(r.n_solo)});
  return out;
}

// Ranked table: ordered by composite, channels without one last.
inline std::string loyalty_table_csv(std::vector<loyalty::LoyaltyComponents> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.L.has_value() != b.L.has_value()) return a.L.has_value();
    if (a.L && *a.L != *b.L) return *a.L > *b.L;
    return a.channel < b.channel;
  });
  std::string out = join_row({"rank", "channel", "S", "R", "P", "F", "L"});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out += join_row({std::to_string(i + 1), r.channel, cell(r.S), cell(r.R), cell(r.P), cell(r.F), cell(r.L)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Permutation test.

inline std::string permtest_csv(const permtest::PermTestResult& r, double alpha) {
  std::string out = join_row({"channel_a", "channel_b", "observed", "null_mean", "null_sd", "p_value", "significant"});
  for (const auto& p : r.pairs)
    out += join_row({p.channel_a, p.channel_b, std::to_string(p.observed), cell(p.null_mean), cell(p.null_sd),
                     cell(p.p_value), p.p_value < alpha ? "true" : "false"});
  return out;
}

// ---------------------------------------------------------------------------
// Run manifest: written beside every output so a run can be replayed.

inline std::string wall_clock_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct FileDigest {
  std::string path;
  std::string fnv1a;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunManifest {
  std::string version{kVersion};
  std::string subcommand;
  json params = json::object();
  std::vector<std::string> argv;
  std::string working_directory;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::optional<std::uint64_t> seed;
  std::string started;
  std::string finished;
  std::vector<StageTiming> stages;
  std::vector<std::string> errors;

  void add_input(const std::string& path) { inputs.push_back({path, digest(csv::read_file(path))}); }

  json to_json() const {
    json in = json::array(), out = json::array(), st = json::array();
    for (const auto& f : inputs) in.push_back({{"path", f.path}, {"fnv1a", f.fnv1a}});
    for (const auto& f : outputs) out.push_back({{"path", f.path}, {"fnv1a", f.fnv1a}});
    for (const auto& s : stages) st.push_back({{"stage", s.stage}, {"seconds", num(s.seconds)}});
    return {{"tool", "lens"},
            {"version", version},
            {"subcommand", subcommand},
            {"params", params},
            {"argv", argv},
            {"working_directory", working_directory},
            {"inputs", in},
            {"outputs", out},
            {"seed", seed ? json(*seed) : json(nullptr)},
            {"started", started},
            {"finished", finished},
            {"stages", st},
            {"errors", errors}};
  }

  static RunManifest from_json(const json& j) {
    try {
      RunManifest m;
      m.version = j.at("version").get<std::string>();
      m.subcommand = j.at("subcommand").get<std::string>();
      m.params = j.value("params", json::object());
      m.argv = j.at("argv").get<std::vector<std::string>>();
      m.working_directory = j.value("working_directory", std::string());
      for (const auto& f : j.value("inputs", json::array()))
        m.inputs.push_back({f.at("path").get<std::string>(), f.at("fnv1a").get<std::string>()});
      for (const auto& f : j.value("outputs", json::array()))
        m.outputs.push_back({f.at("path").get<std::string>(), f.at("fnv1a").get<std::string>()});
      if (j.contains("seed") && !j["seed"].is_null()) m.seed = j["seed"].get<std::uint64_t>();
      m.started = j.value("started", std::string());
      m.finished = j.value("finished", std::string());
      for (const auto& s : j.value("stages", json::array()))
        m.stages.push_back({s.at("stage").get<std::string>(), s.at("seconds").get<double>()});
      m.errors = j.value("errors", std::vector<std::string>{});
      return m;
    } catch (const json::exception& e) {
      throw ConfigInvalid(std::string("manifest: ") + e.what());
    }
  }

  static RunManifest load(const std::string& path) {
    try {
      return from_json(json::parse(csv::read_file(path)));
    } catch (const json::exception& e) {
      throw ConfigInvalid(std::string("manifest: ") + e.what());
    }
  }
};

// Writes output files and records their digests in the manifest.
class OutputSet {
 public:
  explicit OutputSet(RunManifest& manifest) : manifest_(manifest) {}

  void write(const std::string& path, std::string_view content) {
    csv::write_file(path, content);
    manifest_.outputs.push_back({path, digest(content)});
  }
  void write_json(const std::string& path, const json& j) { write(path, j.dump(2) + "\n"); }

 private:
  RunManifest& manifest_;
};

}  // namespace lens::report
