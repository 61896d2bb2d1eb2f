#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lens/error.hpp"
#include "lens/panel.hpp"
#include "lens/parallel.hpp"
#include "lens/rng.hpp"

namespace lens::permtest {

inline constexpr std::size_t kDefaultIterations = 1000;

// Stream placement used by the counter: live on [start, start + duration].
struct Placement {
  std::int64_t start;
  std::int64_t duration;
  ChannelIndex channel;
};

// Upper-triangular per-pair counts for n channels.
class PairCounts {
 public:
  explicit PairCounts(std::size_t channels = 0) : n_(channels), counts_(channels * channels, 0) {}

  std::size_t channels() const { return n_; }
  std::uint32_t get(ChannelIndex a, ChannelIndex b) const {
    if (a > b) std::swap(a, b);
    return counts_[a * n_ + b];
  }
  void add(ChannelIndex a, ChannelIndex b) {
    if (a > b) std::swap(a, b);
    ++counts_[a * n_ + b];
  }

 private:
  std::size_t n_;
  std::vector<std::uint32_t> counts_;
};

// One increment of the unordered pair {i, j} for every stream of channel i
// that starts while a stream of channel j is live (start <= t <= end).
// Streams starting on the same minute are live for each other.
inline PairCounts count_concurrent_starts(std::vector<Placement> placements, std::size_t channels) {
  std::sort(placements.begin(), placements.end(),
            [](const Placement& a, const Placement& b) { return a.start < b.start; });
  PairCounts counts(channels);
  std::vector<const Placement*> active;
  for (std::size_t i = 0; i < placements.size();) {
    const std::int64_t t = placements[i].start;
    std::erase_if(active, [t](const Placement* p) { return p->start + p->duration < t; });
    std::size_t j = i;
    while (j < placements.size() && placements[j].start == t) active.push_back(&placements[j++]);
    for (std::size_t a = i; a < j; ++a)
      for (const Placement* b : active)
        if (b != &placements[a] && b->channel != placements[a].channel) counts.add(placements[a].channel, b->channel);
    i = j;
  }
  return counts;
}

namespace detail {
inline std::vector<Placement> placements_of(const Panel& panel) {
  std::vector<Placement> out;
  for (StreamIndex s = 0; s < panel.stream_count(); ++s) {
    if (!panel.has_observations(s)) continue;
    const auto& r = panel.stream(s);
    out.push_back({r.actual_start.value, r.duration(), panel.channel_of(s)});
  }
  return out;
}
}  // namespace detail

inline PairCounts observed_concurrent_at_start(const Panel& panel) {
  return count_concurrent_starts(detail::placements_of(panel), panel.channel_count());
}

struct PairResult {
  std::string channel_a;
  std::string channel_b;
  std::uint32_t observed = 0;
  double null_mean = 0.0;
  double null_sd = 0.0;
  double p_value = 1.0;
};

struct PermTestResult {
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  Minute window_start;
  Minute window_end;
  std::vector<PairResult> pairs;  // every unordered channel pair, (a, b) in channel order

  std::size_t significant(double alpha) const {
    return static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [&](const PairResult& p) { return p.p_value < alpha; }));
  }
  double fraction_significant(double alpha) const {
    return pairs.empty() ? 0.0 : static_cast<double>(significant(alpha)) / static_cast<double>(pairs.size());
  }
};

// Uniform-scheduling null: every iteration redraws each stream's start
// uniformly (whole minutes) in [window start, window end - duration], keeping
// channel membership and durations, and recounts concurrent starts.
// p = (1 + #{null >= observed}) / (iterations + 1).
inline PermTestResult permutation_test(const Panel& panel, std::size_t iterations = kDefaultIterations,
                                       std::uint64_t seed = 0) {
  if (iterations < 100) throw Error("permutation test needs at least 100 iterations");
  const auto window = panel.observation_window();
  if (!window) throw DegenerateInput("panel has no observations");
  const auto base = detail::placements_of(panel);
  const std::int64_t span = window->second - window->first;
  for (const auto& p : base)
    if (p.duration > span) throw DegenerateInput("a stream is longer than the observation window");

  const std::size_t n = panel.channel_count();
  const PairCounts observed = count_concurrent_starts(base, n);

  std::vector<PairCounts> null_counts(iterations);
  parallel_for(iterations, [&](std::size_t it) {
    Rng rng(derive_seed(seed, it));
    std::vector<Placement> shuffled = base;
    for (auto& p : shuffled) p.start = window->first.value + rng.between(0, span - p.duration);
#ifndef NDEBUG
    for (std::size_t k = 0; k < base.size(); ++k)
      assert(shuffled[k].duration == base[k].duration && shuffled[k].channel == base[k].channel);
#endif
    null_counts[it] = count_concurrent_starts(std::move(shuffled), n);
  });

  PermTestResult out;
  out.iterations = iterations;
  out.seed = seed;
  out.window_start = window->first;
  out.window_end = window->second;
  for (ChannelIndex a = 0; a < n; ++a)
    for (ChannelIndex b = a + 1; b < n; ++b) {
      PairResult r;
      r.channel_a = panel.channel(a).id;
      r.channel_b = panel.channel(b).id;
      r.observed = observed.get(a, b);
      double sum = 0.0, sum_sq = 0.0;
      std::size_t at_least = 0;
      for (const auto& c : null_counts) {
        const double v = c.get(a, b);
        sum += v;
        sum_sq += v * v;
        at_least += c.get(a, b) >= r.observed;
      }
      const double it = static_cast<double>(iterations);
      r.null_mean = sum / it;
      r.null_sd = std::sqrt(std::max(0.0, sum_sq / it - r.null_mean * r.null_mean));
      r.p_value = (1.0 + static_cast<double>(at_least)) / (it + 1.0);
      out.pairs.push_back(std::move(r));
    }
  return out;
}

}  // namespace lens::permtest
