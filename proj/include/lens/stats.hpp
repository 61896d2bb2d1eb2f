#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "lens/error.hpp"
#include "lens/parallel.hpp"
#include "lens/rng.hpp"

namespace lens::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw EmptyInput("mean of empty sequence");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && xs[order[j]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw LengthMismatch("pearson: sequences differ in length");
  if (xs.size() < 2) throw DegenerateInput("pearson: need at least two pairs");
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw DegenerateInput("pearson: constant sequence");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Spearman's rho as the Pearson correlation of average ranks, which stays
// exact in the presence of ties.
inline double spearman_rho(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw LengthMismatch("spearman_rho: sequences differ in length");
  if (xs.size() < 2) throw DegenerateInput("spearman_rho: need at least two pairs");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

// Linear interpolation between order statistics at rank p/100 * (n - 1).
inline double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw EmptyInput("percentile of empty sequence");
  if (!(p >= 0.0 && p <= 100.0)) throw Error("percentile: p outside [0, 100]");
  const double r = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(r));
  const auto hi = static_cast<std::size_t>(std::ceil(r));
  const double frac = r - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double percentile(std::span<const double> xs, double p) {
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  return percentile_sorted(sorted, p);
}

inline double median(std::span<const double> xs) { return percentile(xs, 50.0); }

// Population standard deviation over the mean.
inline double coefficient_of_variation(std::span<const double> xs) {
  if (xs.size() < 2) throw DegenerateInput("coefficient_of_variation: need at least two values");
  const double m = mean(xs);
  if (!(m > 0.0)) throw DegenerateInput("coefficient_of_variation: mean must be positive");
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size())) / m;
}

struct BootstrapCI {
  double point_estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  std::size_t iterations = 0;
  std::size_t failed_iterations = 0;
  std::uint64_t seed = 0;
};

// Percentile interval from a set of bootstrap replicates. Replicates that are
// NaN count as failures; more than half failing is an error.
inline BootstrapCI percentile_interval(std::vector<double> replicates, double point, double level,
                                       std::uint64_t seed) {
  BootstrapCI ci;
  ci.point_estimate = point;
  ci.level = level;
  ci.iterations = replicates.size();
  ci.seed = seed;
  const auto bad = std::remove_if(replicates.begin(), replicates.end(), [](double v) { return std::isnan(v); });
  ci.failed_iterations = static_cast<std::size_t>(replicates.end() - bad);
  replicates.erase(bad, replicates.end());
  if (replicates.empty() || 2 * ci.failed_iterations > ci.iterations)
    throw DegenerateInput("bootstrap statistic undefined in more than half of the iterations");
  std::sort(replicates.begin(), replicates.end());
  const double tail = (1.0 - level) / 2.0 * 100.0;
  ci.lower = percentile_sorted(replicates, tail);
  ci.upper = percentile_sorted(replicates, 100.0 - tail);
  return ci;
}

// Block bootstrap over groups (calendar days in practice).
//
// Each iteration draws groups.size() group indices with replacement from
// Rng(derive_seed(seed, iteration)), concatenates their elements in draw
// order, and evaluates `statistic`. A statistic that throws DegenerateInput
// or returns NaN marks the iteration as failed.
template <typename T, typename Statistic>
BootstrapCI block_bootstrap_ci(std::span<const std::vector<T>> groups, Statistic&& statistic, std::size_t iterations,
                               double level, std::uint64_t seed) {
  if (groups.size() < 2) throw DegenerateInput("block bootstrap needs at least two groups");
  if (iterations < 100) throw Error("block bootstrap needs at least 100 iterations");
  if (!(level > 0.0 && level < 1.0)) throw Error("confidence level must lie in (0, 1)");

  std::vector<T> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  const double point = statistic(std::span<const T>(all));

  std::vector<double> replicates(iterations);
  parallel_for(iterations, [&](std::size_t it) {
    Rng rng(derive_seed(seed, it));
    std::vector<T> sample;
    sample.reserve(all.size());
    for (std::size_t k = 0; k < groups.size(); ++k) {
      const auto& g = groups[rng.below(groups.size())];
      sample.insert(sample.end(), g.begin(), g.end());
    }
    try {
      replicates[it] = statistic(std::span<const T>(sample));
    } catch (const DegenerateInput&) {
      replicates[it] = std::nan("");
    }
  });
  return percentile_interval(std::move(replicates), point, level, seed);
}

}  // namespace lens::stats
