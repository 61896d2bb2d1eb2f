#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lens/dilution.hpp"
#include "lens/error.hpp"
#include "lens/ingest.hpp"
#include "lens/loyalty.hpp"
#include "lens/overlap.hpp"
#include "lens/permtest.hpp"
#include "lens/report.hpp"
#include "lens/sim.hpp"
#include "lens/transfer.hpp"

namespace lens::cli {

using json = nlohmann::json;
using report::RunManifest;

enum ExitCode : int { kOk = 0, kError = 1, kAnomalies = 2 };

namespace detail {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// "dir/overlap.csv" + ".counts.csv" -> "dir/overlap.counts.csv"
inline std::string sibling(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

inline std::string in_dir_of(const std::string& path, const std::string& name) {
  return (std::filesystem::path(path).parent_path() / name).string();
}

inline std::string in_dir(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

struct PanelSource {
  std::string cache;
  std::string streams;
  std::string obs;

  void attach(CLI::App* sub) {
    sub->add_option("--panel", cache, "Binary panel cache written by 'lens ingest --cache'");
    sub->add_option("--streams", streams, "Streams CSV");
    sub->add_option("--obs", obs, "Observations CSV");
  }

  Panel load(RunManifest& m, std::ostream& err) const {
    if (!cache.empty()) {
      m.add_input(cache);
      return ingest::load_cache(cache);
    }
    if (streams.empty() || obs.empty())
      throw UsageError("a panel is required: --panel <cache> or --streams <csv> --obs <csv>");
    m.add_input(streams);
    m.add_input(obs);
    auto loaded = ingest::load_observations(obs, ingest::load_streams(streams));
    const auto& r = loaded.report;
    if (!r.clean())
      err << "warning: skipped " << r.duplicate_observations + r.out_of_range_observations + r.orphan_observations +
                                       r.negative_counts
          << " anomalous observations and " << r.empty_streams << " empty streams\n";
    return std::move(loaded.panel);
  }
};

inline ChannelScope scope_of(const Panel& panel, const std::string& channels) {
  return ChannelScope::of(panel, split_list(channels));
}

inline loyalty::LoyaltyWeights parse_weights(const std::string& s) {
  const auto parts = split_list(s);
  if (parts.size() != 4) throw UsageError("--weights needs four comma-separated values");
  double w[4];
  for (int i = 0; i < 4; ++i) {
    char* end = nullptr;
    w[i] = std::strtod(parts[static_cast<std::size_t>(i)].c_str(), &end);
    if (end != parts[static_cast<std::size_t>(i)].c_str() + parts[static_cast<std::size_t>(i)].size())
      throw UsageError("--weights: not a number '" + parts[static_cast<std::size_t>(i)] + "'");
  }
  loyalty::LoyaltyWeights lw{w[0], w[1], w[2], w[3]};
  lw.validate();
  return lw;
}

// Resolved parameter set of a subcommand: every long option with its given or
// default value.
inline json resolved_params(const CLI::App* sub) {
  json p = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->get_type_size() == 0) {
      p[name] = opt->count() > 0;
      continue;
    }
    std::string v;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
    } else {
      v = opt->get_default_str();
    }
    p[name] = v;
  }
  return p;
}

inline void write_manifest(const std::string& path, RunManifest& m) {
  m.finished = report::wall_clock_now();
  csv::write_file(path, m.to_json().dump(2) + "\n");
}

inline const transfer::TransferEvent* strongest_event(const std::vector<transfer::TransferEvent>& events) {
  const transfer::TransferEvent* best = nullptr;
  for (const auto& e : events)
    if (!e.over_unity && (!best || e.spike > best->spike)) best = &e;
  return best;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

namespace detail {

struct Options {
  PanelSource panel;

  // ingest
  bool strict = false;
  std::string cache_out, ingest_report;

  // overlap / trend
  std::int64_t delta = 8;
  bool lenient_symmetry = false;
  std::string cohort;
  std::int64_t period_days = overlap::kDefaultTrendPeriodDays;

  // transfers
  transfer::TransferParams tp;
  std::string summary;
  std::optional<std::size_t> extract;
  std::string extract_out;

  // dilution
  std::string channels;
  std::size_t iterations = 2000;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::int64_t tz_offset = 0;
  std::string buckets;

  // loyalty
  std::string weights = "0.30,0.25,0.25,0.20";
  double competed_min_fraction = 0.0;
  std::string table;

  // permtest
  std::size_t perm_iterations = 1000;
  double alpha = 0.01;

  // simulate / score
  std::string scenario;
  std::optional<std::uint64_t> sim_seed;
  std::string truth, estimate, kind;
  std::int64_t window = 2;
  double tolerance = 0.02;

  // replay
  std::string manifest;
  bool check = false;

  std::string out, out_dir;
};

inline int cmd_ingest(Options& o, RunManifest& m, std::ostream& out, std::ostream& err) {
  Stopwatch sw;
  m.add_input(o.panel.streams);
  m.add_input(o.panel.obs);
  const auto streams = ingest::load_streams(o.panel.streams);
  auto loaded = ingest::load_observations(o.panel.obs, streams, o.strict ? ingest::Mode::strict : ingest::Mode::lenient);
  m.stages.push_back({"load", sw.lap()});
  const auto& r = loaded.report;
  json rep = {{"streams", loaded.panel.stream_count()},
              {"channels", loaded.panel.channel_count()},
              {"observations", loaded.panel.observation_count()},
              {"duplicate_observations", r.duplicate_observations},
              {"out_of_range_observations", r.out_of_range_observations},
              {"orphan_observations", r.orphan_observations},
              {"negative_counts", r.negative_counts},
              {"empty_streams", r.empty_streams},
              {"samples",
               {{"duplicate", r.duplicate_samples},
                {"out_of_range", r.out_of_range_samples},
                {"orphan", r.orphan_samples},
                {"negative", r.negative_samples},
                {"empty_stream", r.empty_stream_samples}}}};
  report::OutputSet files(m);
  if (!o.cache_out.empty()) {
    const std::string bytes = ingest::encode_cache(loaded.panel);
    files.write(o.cache_out, bytes);
  }
  if (!o.ingest_report.empty()) files.write_json(o.ingest_report, rep);
  out << rep.dump(2) << "\n";
  const std::string mpath = !o.cache_out.empty()       ? o.cache_out + ".manifest.json"
                            : !o.ingest_report.empty() ? o.ingest_report + ".manifest.json"
                                                       : std::string();
  if (!mpath.empty()) write_manifest(mpath, m);
  if (!r.clean()) {
    err << "ingest: data anomalies found\n";
    return kAnomalies;
  }
  return kOk;
}

inline int cmd_overlap(Options& o, RunManifest& m, std::ostream& err) {
  Stopwatch sw;
  const Panel panel = o.panel.load(m, err);
  m.stages.push_back({"load", sw.lap()});
  const auto directed = overlap::pairwise_overlap(panel, o.delta);
  const auto sym = overlap::symmetrize(directed, o.lenient_symmetry ? overlap::SymmetryPolicy::lenient
                                                                     : overlap::SymmetryPolicy::strict);
  m.stages.push_back({"overlap", sw.lap()});
  report::OutputSet files(m);
  files.write(o.out, report::matrix_csv(sym));
  files.write(sibling(o.out, ".counts.csv"), report::counts_csv(directed));
  files.write(sibling(o.out, ".directed.csv"), report::matrix_csv(directed));
  write_manifest(o.out + ".manifest.json", m);
  return kOk;
}

inline int cmd_trend(Options& o, RunManifest& m, std::ostream& out, std::ostream& err) {
  Stopwatch sw;
  const Panel panel = o.panel.load(m, err);
  m.stages.push_back({"load", sw.lap()});
  const auto t = overlap::concurrency_trend(panel, split_list(o.cohort), o.period_days);
  m.stages.push_back({"trend", sw.lap()});
  report::OutputSet files(m);
  files.write(o.out, report::trend_csv(t));
  const json summary = report::trend_json(t);
  files.write_json(sibling(o.out, ".summary.json"), summary);
  out << summary.dump(2) << "\n";
  write_manifest(o.out + ".manifest.json", m);
  return kOk;
}

inline int cmd_transfers(Options& o, RunManifest& m, std::ostream& err) {
  Stopwatch sw;
  const Panel panel = o.panel.load(m, err);
  m.stages.push_back({"load", sw.lap()});
  const auto scan = transfer::detect_transfers(panel, o.tp, scope_of(panel, o.channels));
  const auto summary = transfer::summarize_transfers(scan.events);
  m.stages.push_back({"transfers", sw.lap()});
  report::OutputSet files(m);
  files.write(o.out, report::events_csv(scan.events));
  if (!o.summary.empty()) files.write_json(o.summary, report::transfer_summary_json(summary, scan.diagnostics, o.tp));
  if (o.extract) {
    if (*o.extract >= scan.events.size())
      throw MissingResult("no transfer event with index " + std::to_string(*o.extract));
    const std::string path = o.extract_out.empty() ? sibling(o.out, ".extract.csv") : o.extract_out;
    files.write(path, report::transfer_extract_csv(panel, scan.events[*o.extract]));
  }
  write_manifest(o.out + ".manifest.json", m);
  return kOk;
}

inline json dilution_run(const Panel& panel, const Options& o, RunManifest& m, report::OutputSet& files,
                         const std::string& json_path, const std::string& buckets_path) {
  Stopwatch sw;
  const auto data = dilution::collect(panel, scope_of(panel, o.channels));
  if (data.samples.size() < 2) throw DegenerateInput("scope has fewer than two samples");
  dilution::DilutionOptions opt;
  opt.iterations = o.iterations;
  opt.level = o.level;
  opt.seed = o.seed;
  opt.tz_offset_minutes = o.tz_offset;
  const dilution::ResidualBootstrap engine(data.samples, opt.tz_offset_minutes);
  auto r = dilution::dilution_point(data, opt, engine);
  m.stages.push_back({"dilution", sw.lap()});
  if (o.iterations > 0) {
    r.residual_ci = engine.confidence_interval(opt.iterations, opt.level, opt.seed);
    m.stages.push_back({"dilution_bootstrap", sw.lap()});
  }
  json j = report::dilution_json(r);
  if (o.iterations == 0) j["ci"] = nullptr;
  files.write_json(json_path, j);
  files.write(buckets_path, report::buckets_csv(r.buckets));
  return j;
}

inline int cmd_dilution(Options& o, RunManifest& m, std::ostream& out, std::ostream& err) {
  Stopwatch sw;
  const Panel panel = o.panel.load(m, err);
  m.stages.push_back({"load", sw.lap()});
  m.seed = o.seed;
  report::OutputSet files(m);
  const json j = dilution_run(panel, o, m, files, o.out, o.buckets.empty() ? in_dir_of(o.out, "buckets.csv") : o.buckets);
  out << j.dump(2) << "\n";
  write_manifest(o.out + ".manifest.json", m);
  return kOk;
}

inline int cmd_loyalty(Options& o, RunManifest& m, std::ostream& err) {
  Stopwatch sw;
  const Panel panel = o.panel.load(m, err);
  m.stages.push_back({"load", sw.lap()});
  loyalty::LoyaltyOptions lo;
  lo.weights = parse_weights(o.weights);
  lo.competed_min_fraction = o.competed_min_fraction;
  const auto rows = loyalty::compute_loyalty(panel, scope_of(panel, o.channels), lo);
  m.stages.push_back({"loyalty", sw.lap()});
  report::OutputSet files(m);
  files.write(o.out, report::loyalty_csv(rows));
  if (!o.table.empty()) files.write(o.table, report::loyalty_table_csv(rows));
  write_manifest(o.out + ".manifest.json", m);
  return kOk;
}

inline int cmd_permtest(Options& o, RunManifest& m, std::ostream& out, std::ostream& err) {
  Stopwatch sw;
  const Panel panel = o.panel.load(m, err);
  m.stages.push_back({"load", sw.lap()});
  m.seed = o.seed;
  const auto r = permtest::permutation_test(panel, o.perm_iterations, o.seed);
  m.stages.push_back({"permtest", sw.lap()});
  report::OutputSet files(m);
  files.write(o.out, report::permtest_csv(r, o.alpha));
  out << "pairs " << r.pairs.size() << ", significant at " << o.alpha << ": " << r.significant(o.alpha) << " ("
      << report::cell(r.fraction_significant(o.alpha)) << ")\n";
  write_manifest(o.out + ".manifest.json", m);
  return kOk;
}

inline int cmd_simulate(Options& o, RunManifest& m, std::ostream& out) {
  Stopwatch sw;
  m.add_input(o.scenario);
  auto cfg = sim::SimConfig::load(o.scenario);
  if (o.sim_seed) cfg.seed = *o.sim_seed;
  m.seed = cfg.seed;
  const auto s = sim::generate(cfg);
  m.stages.push_back({"generate", sw.lap()});
  std::filesystem::create_directories(o.out_dir);
  report::OutputSet files(m);
  files.write(in_dir(o.out_dir, "streams.csv"), ingest::streams_csv(s.panel));
  files.write(in_dir(o.out_dir, "observations.csv"), ingest::observations_csv(s.panel));
  files.write_json(in_dir(o.out_dir, "truth.json"), s.truth.to_json());
  if (!o.cache_out.empty()) files.write(o.cache_out, ingest::encode_cache(s.panel));
  m.stages.push_back({"write", sw.lap()});
  out << "streams " << s.panel.stream_count() << ", observations " << s.panel.observation_count()
      << ", planted transfers " << s.truth.transfers.size() << "\n";
  write_manifest(in_dir(o.out_dir, "manifest.json"), m);
  return kOk;
}

inline int cmd_score(Options& o, RunManifest& m, std::ostream& out) {
  m.add_input(o.truth);
  m.add_input(o.estimate);
  const auto truth = sim::GroundTruth::load(o.truth);
  json j;
  if (o.kind == "overlap") {
    const auto s = sim::score_overlap_recovery(truth, report::parse_matrix_csv(csv::read_file(o.estimate)), o.tolerance);
    j = {{"kind", "overlap"},
         {"cells", s.cells},
         {"rho", report::num(s.rho)},
         {"classification_accuracy", report::num(s.classification_accuracy)},
         {"zero_tolerance", report::num(o.tolerance)}};
  } else {
    const auto s =
        sim::score_transfer_recovery(truth.transfers, report::parse_events_csv(csv::read_file(o.estimate)), o.window);
    j = {{"kind", "transfers"},
         {"planted", s.planted},
         {"detected", s.detected},
         {"matched", s.matched},
         {"precision", report::num(s.precision)},
         {"recall", report::num(s.recall)},
         {"match_window_minutes", o.window}};
  }
  out << j.dump(2) << "\n";
  if (!o.out.empty()) {
    report::OutputSet files(m);
    files.write_json(o.out, j);
    write_manifest(o.out + ".manifest.json", m);
  }
  return kOk;
}

inline int cmd_all(Options& o, RunManifest& m, std::ostream& out, std::ostream& err) {
  Stopwatch sw;
  const Panel panel = o.panel.load(m, err);
  m.stages.push_back({"load", sw.lap()});
  m.seed = o.seed;
  std::filesystem::create_directories(o.out_dir);
  report::OutputSet files(m);
  auto path = [&](const char* name) { return in_dir(o.out_dir, name); };
  auto stage = [&](const char* name, auto&& body) {
    try {
      body();
    } catch (const Error& e) {
      m.errors.push_back(std::string(name) + ": " + e.what());
      err << "error in " << name << ": " << e.what() << "\n";
    }
  };

  stage("overlap", [&] {
    const auto directed = overlap::pairwise_overlap(panel, o.delta);
    const auto sym = overlap::symmetrize(directed);
    files.write(path("overlap.csv"), report::matrix_csv(sym));
    files.write(path("overlap.counts.csv"), report::counts_csv(directed));
    files.write(path("edges.csv"), report::edges_csv(sym));
    files.write(path("nodes.csv"), report::nodes_csv(panel));
    files.write(path("concurrency.csv"), report::matrix_csv(overlap::concurrency_frequency(panel)));
    m.stages.push_back({"overlap", sw.lap()});
  });
  stage("transfers", [&] {
    const auto scan = transfer::detect_transfers(panel, o.tp);
    const auto summary = transfer::summarize_transfers(scan.events);
    files.write(path("events.csv"), report::events_csv(scan.events));
    files.write_json(path("summary.json"), report::transfer_summary_json(summary, scan.diagnostics, o.tp));
    if (const auto* e = strongest_event(scan.events)) files.write(path("transfer_extract.csv"), report::transfer_extract_csv(panel, *e));
    m.stages.push_back({"transfers", sw.lap()});
  });
  stage("dilution", [&] {
    sw.lap();
    dilution_run(panel, o, m, files, path("dilution.json"), path("buckets.csv"));
    sw.lap();
  });
  stage("loyalty", [&] {
    const auto rows = loyalty::compute_loyalty(panel);
    files.write(path("loyalty.csv"), report::loyalty_csv(rows));
    files.write(path("loyalty_table.csv"), report::loyalty_table_csv(rows));
    m.stages.push_back({"loyalty", sw.lap()});
  });
  stage("permtest", [&] {
    const auto r = permtest::permutation_test(panel, o.perm_iterations, o.seed);
    files.write(path("permtest.csv"), report::permtest_csv(r, o.alpha));
    m.stages.push_back({"permtest", sw.lap()});
  });
  write_manifest(path("manifest.json"), m);
  out << "wrote " << m.outputs.size() << " files to " << o.out_dir << "\n";
  return m.errors.empty() ? kOk : kError;
}

inline int cmd_replay(Options& o, std::ostream& out, std::ostream& err) {
  const auto recorded = RunManifest::load(o.manifest);
  if (recorded.subcommand == "replay") throw UsageError("cannot replay a replay");
  if (recorded.version != report::kVersion)
    err << "warning: manifest written by version " << recorded.version << ", running " << report::kVersion << "\n";
  const int code = run(recorded.argv, out, err);
  if (!o.check) return code;
  std::size_t mismatched = 0;
  for (const auto& f : recorded.outputs) {
    std::string now;
    try {
      now = report::digest(csv::read_file(f.path));
    } catch (const Error&) {
      now = "missing";
    }
    if (now != f.fnv1a) {
      ++mismatched;
      err << "mismatch: " << f.path << " (" << f.fnv1a << " -> " << now << ")\n";
    }
  }
  out << "replay: " << recorded.outputs.size() - mismatched << "/" << recorded.outputs.size()
      << " outputs identical\n";
  return mismatched == 0 ? code : kError;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using detail::Options;
  Options o;
  CLI::App app{"lens: audience overlap, transfer and competition analysis of minute-level viewer panels", "lens"};
  app.set_version_flag("--version", std::string(report::kVersion));
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "Validate CSV input and optionally write a binary panel cache");
  ingest->add_option("--streams", o.panel.streams, "Streams CSV")->required();
  ingest->add_option("--obs", o.panel.obs, "Observations CSV")->required();
  ingest->add_flag("--strict", o.strict, "Fail on the first anomaly");
  ingest->add_option("--cache", o.cache_out, "Write a binary panel cache");
  ingest->add_option("--report", o.ingest_report, "Write the anomaly report as JSON");

  auto* ov = app.add_subcommand("overlap", "Pairwise audience overlap from stream start events");
  o.panel.attach(ov);
  ov->add_option("--delta", o.delta, "Half-width of the measurement window in minutes")->check(CLI::PositiveNumber);
  ov->add_flag("--lenient-symmetry", o.lenient_symmetry, "Keep one-sided cells when symmetrizing");
  ov->add_option("--out", o.out, "Symmetrized matrix CSV")->required();

  auto* tr = app.add_subcommand("trend", "Trend in pairwise concurrent-streaming frequency");
  o.panel.attach(tr);
  tr->add_option("--cohort", o.cohort, "Comma-separated channel ids")->required();
  tr->add_option("--period-days", o.period_days, "Period length in days")->check(CLI::PositiveNumber);
  tr->add_option("--out", o.out, "Per-period CSV")->required();

  auto* tf = app.add_subcommand("transfers", "Viewer transfer events at stream endings");
  o.panel.attach(tf);
  tf->add_option("--pre", o.tp.pre_window_minutes, "Pre-window minutes");
  tf->add_option("--post", o.tp.post_window_minutes, "Post-window minutes");
  tf->add_option("--guard", o.tp.span_guard_minutes, "Receiver span guard in minutes");
  tf->add_option("--rel", o.tp.rel_spike_threshold, "Relative spike threshold");
  tf->add_option("--abs", o.tp.abs_spike_threshold, "Absolute spike threshold");
  tf->add_option("--src-frac", o.tp.source_fraction_threshold, "Spike as a fraction of the source average");
  tf->add_option("--min-final", o.tp.min_final_viewers, "Minimum source final viewers");
  tf->add_option("--channels", o.channels, "Restrict to these channels");
  tf->add_option("--out", o.out, "Events CSV")->required();
  tf->add_option("--summary", o.summary, "Summary JSON");
  tf->add_option("--extract", o.extract, "Index of an event to extract for plotting");
  tf->add_option("--extract-out", o.extract_out, "Path of the extract CSV");

  auto* di = app.add_subcommand("dilution", "Competition dilution with a day-block bootstrap interval");
  o.panel.attach(di);
  di->add_option("--channels", o.channels, "Restrict to these channels");
  di->add_option("--iterations", o.iterations, "Bootstrap iterations (0 skips the interval)");
  di->add_option("--level", o.level, "Confidence level")->check(CLI::Range(0.5, 0.999));
  di->add_option("--seed", o.seed, "Bootstrap seed");
  di->add_option("--tz-offset", o.tz_offset, "Minutes added to UTC before taking the hour of day");
  di->add_option("--out", o.out, "Result JSON")->required();
  di->add_option("--buckets", o.buckets, "Bucket CSV (default: buckets.csv beside --out)");

  auto* lo = app.add_subcommand("loyalty", "Per-channel loyalty components and composite");
  o.panel.attach(lo);
  lo->add_option("--weights", o.weights, "Weights for S,R,P,F");
  lo->add_option("--competed-min-fraction", o.competed_min_fraction, "Contested share for a stream to count as competed")
      ->check(CLI::Range(0.0, 1.0));
  lo->add_option("--channels", o.channels, "Restrict to these channels");
  lo->add_option("--out", o.out, "Loyalty CSV")->required();
  lo->add_option("--table", o.table, "Ranked table CSV for plotting");

  auto* pt = app.add_subcommand("permtest", "Schedule permutation test for coordinated start times");
  o.panel.attach(pt);
  pt->add_option("--iterations", o.perm_iterations, "Permutations");
  pt->add_option("--seed", o.seed, "Permutation seed");
  pt->add_option("--alpha", o.alpha, "Significance level for the summary")->check(CLI::Range(0.0, 1.0));
  pt->add_option("--out", o.out, "Per-pair CSV")->required();

  auto* si = app.add_subcommand("simulate", "Generate a synthetic panel with ground truth");
  si->add_option("--scenario", o.scenario, "Scenario JSON")->required();
  si->add_option("--seed", o.sim_seed, "Override the scenario seed");
  si->add_option("--out-dir", o.out_dir, "Output directory")->required();
  si->add_option("--cache", o.cache_out, "Also write a binary panel cache");

  auto* sc = app.add_subcommand("score", "Score estimates against simulator ground truth");
  sc->add_option("--truth", o.truth, "truth.json from 'lens simulate'")->required();
  sc->add_option("--estimate", o.estimate, "Overlap matrix CSV or events CSV")->required();
  sc->add_option("--kind", o.kind, "overlap or transfers")->required()->check(CLI::IsMember({"overlap", "transfers"}));
  sc->add_option("--window", o.window, "Transfer match window in minutes");
  sc->add_option("--tolerance", o.tolerance, "Zero tolerance for overlap classification");
  sc->add_option("--out", o.out, "Score JSON");

  auto* al = app.add_subcommand("all", "Run overlap, transfers, dilution, loyalty and permtest with defaults");
  o.panel.attach(al);
  al->add_option("--out-dir", o.out_dir, "Output directory")->required();
  al->add_option("--iterations", o.iterations, "Dilution bootstrap iterations (0 skips the interval)");
  al->add_option("--perm-iterations", o.perm_iterations, "Permutation test iterations");
  al->add_option("--seed", o.seed, "Seed for the bootstrap and permutations");

  auto* rp = app.add_subcommand("replay", "Re-run a subcommand from its manifest");
  rp->add_option("manifest", o.manifest, "Manifest JSON")->required();
  rp->add_flag("--check", o.check, "Verify that every recorded output is reproduced byte for byte");

  std::vector<std::string> storage{"lens"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return kError;
  }

  CLI::App* sub = app.get_subcommands().front();
  RunManifest m;
  m.subcommand = sub->get_name();
  m.params = detail::resolved_params(sub);
  m.argv = args;
  m.working_directory = std::filesystem::current_path().string();
  m.started = report::wall_clock_now();
  try {
    if (sub == ingest) return detail::cmd_ingest(o, m, out, err);
    if (sub == ov) return detail::cmd_overlap(o, m, err);
    if (sub == tr) return detail::cmd_trend(o, m, out, err);
    if (sub == tf) return detail::cmd_transfers(o, m, err);
    if (sub == di) return detail::cmd_dilution(o, m, out, err);
    if (sub == lo) return detail::cmd_loyalty(o, m, err);
    if (sub == pt) return detail::cmd_permtest(o, m, out, err);
    if (sub == si) return detail::cmd_simulate(o, m, out);
    if (sub == sc) return detail::cmd_score(o, m, out);
    if (sub == al) return detail::cmd_all(o, m, out, err);
    if (sub == rp) return detail::cmd_replay(o, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n\n" << sub->help();
    return kError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace lens::cli
