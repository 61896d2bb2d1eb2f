#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "lens/concurrency.hpp"
#include "lens/error.hpp"
#include "lens/panel.hpp"
#include "lens/parallel.hpp"
#include "lens/rng.hpp"
#include "lens/stats.hpp"

namespace lens::dilution {

// One live (minute, stream) pair with an observation. k counts the in-scope
// streams live at that minute, the stream itself included.
struct Sample {
  Minute minute;
  std::int32_t k = 0;
  double viewers = 0.0;
};

struct MinuteTotal {
  Minute minute;
  std::int32_t k = 0;
  double total = 0.0;
};

struct Collected {
  std::vector<Sample> samples;
  std::vector<MinuteTotal> minutes;  // minutes with at least one sample
};

inline Collected collect(const Panel& panel, const ChannelScope& scope = ChannelScope::all()) {
  const ConcurrencyIndex index(panel, scope);
  Collected out;
  for (const auto& seg : index.segments()) {
    const auto live = index.live(seg);
    const auto k = static_cast<std::int32_t>(live.size());
    for (Minute m = seg.begin; m < seg.end; ++m) {
      double total = 0.0;
      bool any = false;
      for (StreamIndex s : live) {
        if (auto v = panel.series(s).at(m)) {
          out.samples.push_back({m, k, static_cast<double>(*v)});
          total += static_cast<double>(*v);
          any = true;
        }
      }
      if (any) out.minutes.push_back({m, k, total});
    }
  }
  return out;
}

struct Bucket {
  std::int32_t k = 0;
  std::size_t samples = 0;
  std::size_t minutes = 0;
  double per_stream_mean = 0.0;
  double total_mean = 0.0;
};

struct DilutionBuckets {
  std::vector<Bucket> buckets;  // ascending k, only populated buckets
};

inline DilutionBuckets dilution_buckets(const Collected& data) {
  std::map<std::int32_t, std::array<double, 4>> acc;  // samples, viewer sum, minutes, total sum
  for (const auto& s : data.samples) {
    auto& a = acc[s.k];
    a[0] += 1;
    a[1] += s.viewers;
  }
  for (const auto& m : data.minutes) {
    auto& a = acc[m.k];
    a[2] += 1;
    a[3] += m.total;
  }
  DilutionBuckets out;
  for (const auto& [k, a] : acc) {
    Bucket b;
    b.k = k;
    b.samples = static_cast<std::size_t>(a[0]);
    b.minutes = static_cast<std::size_t>(a[2]);
    b.per_stream_mean = a[0] > 0 ? a[1] / a[0] : 0.0;
    b.total_mean = a[2] > 0 ? a[3] / a[2] : 0.0;
    out.buckets.push_back(b);
  }
  return out;
}

inline DilutionBuckets dilution_buckets(const Panel& panel, const ChannelScope& scope = ChannelScope::all()) {
  return dilution_buckets(collect(panel, scope));
}

// Spearman over per-minute (k, total ecosystem viewers) pairs.
inline double raw_total_correlation(const Collected& data) {
  if (data.minutes.size() < 2) throw DegenerateInput("need at least two minutes");
  std::vector<double> ks, totals;
  ks.reserve(data.minutes.size());
  totals.reserve(data.minutes.size());
  for (const auto& m : data.minutes) {
    ks.push_back(m.k);
    totals.push_back(m.total);
  }
  return stats::spearman_rho(ks, totals);
}

inline double raw_total_correlation(const Panel& panel, const ChannelScope& scope = ChannelScope::all()) {
  return raw_total_correlation(collect(panel, scope));
}

struct ResidualSample {
  std::int64_t day = 0;
  double k_residual = 0.0;
  double viewers_residual = 0.0;
};

// Subtracts the hour-of-day bin mean of k and of viewers from every sample.
// Bins are hours of (UTC + tz_offset_minutes); the day key uses the same shift.
inline std::vector<ResidualSample> hour_residualize(std::span<const Sample> samples, std::int64_t tz_offset_minutes = 0) {
  if (samples.size() < 2) throw DegenerateInput("residualization needs at least two samples");
  std::array<double, 24> n{}, sk{}, sv{};
  for (const auto& s : samples) {
    const int h = hour_of_day(s.minute, tz_offset_minutes);
    n[h] += 1;
    sk[h] += s.k;
    sv[h] += s.viewers;
  }
  std::vector<ResidualSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const int h = hour_of_day(s.minute, tz_offset_minutes);
    out.push_back({day_index(s.minute, tz_offset_minutes), s.k - sk[h] / n[h], s.viewers - sv[h] / n[h]});
  }
  return out;
}

// Straightforward route: residualize, then rank-correlate.
inline double residual_rho(std::span<const Sample> samples, std::int64_t tz_offset_minutes = 0) {
  const auto res = hour_residualize(samples, tz_offset_minutes);
  std::vector<double> xs, ys;
  xs.reserve(res.size());
  ys.reserve(res.size());
  for (const auto& r : res) {
    xs.push_back(r.k_residual);
    ys.push_back(r.viewers_residual);
  }
  return stats::spearman_rho(xs, ys);
}

// Day-keyed groups of samples, ascending by day; the unit the bootstrap resamples.
inline std::vector<std::vector<Sample>> group_by_day(std::span<const Sample> samples, std::int64_t tz_offset_minutes = 0) {
  std::map<std::int64_t, std::vector<Sample>> by_day;
  for (const auto& s : samples) by_day[day_index(s.minute, tz_offset_minutes)].push_back(s);
  std::vector<std::vector<Sample>> out;
  out.reserve(by_day.size());
  for (auto& [day, g] : by_day) out.push_back(std::move(g));
  return out;
}

// Evaluates the residualized Spearman statistic on a day-resampled replicate
// without materialising it.
//
// A replicate is described by a multiplicity per day. Samples keep their
// identity and carry their day's multiplicity as a weight; hour-bin means are
// weighted means. Within one hour bin the order of viewer residuals equals
// the order of raw viewers, so each bin is sorted once up front and a
// replicate only needs a 24-way merge. Residual k takes one value per
// (hour, k) group, so its ranks come from sorting those groups. Ties get
// average ranks exactly as they would in the expanded sample.
class ResidualBootstrap {
 public:
  ResidualBootstrap(std::span<const Sample> samples, std::int64_t tz_offset_minutes = 0) {
    if (samples.size() < 2) throw DegenerateInput("residualization needs at least two samples");
    std::map<std::int64_t, std::uint32_t> day_ids;
    for (const auto& s : samples) day_ids.emplace(day_index(s.minute, tz_offset_minutes), 0);
    std::uint32_t next = 0;
    for (auto& [day, id] : day_ids) id = next++;
    days_ = day_ids.size();

    std::map<std::pair<int, std::int32_t>, std::uint32_t> group_ids;
    for (const auto& s : samples) group_ids.emplace(std::make_pair(hour_of_day(s.minute, tz_offset_minutes), s.k), 0);
    next = 0;
    for (auto& [key, id] : group_ids) {
      id = next++;
      group_bin_.push_back(key.first);
      group_k_.push_back(key.second);
    }

    bin_counts_.assign(24 * days_, 0.0);
    bin_sums_.assign(24 * days_, 0.0);
    std::vector<std::map<std::uint32_t, double>> day_groups(days_);
    std::array<std::vector<std::uint32_t>, 24> members;
    for (std::uint32_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const int h = hour_of_day(s.minute, tz_offset_minutes);
      const std::uint32_t d = day_ids[day_index(s.minute, tz_offset_minutes)];
      bin_counts_[h * days_ + d] += 1.0;
      bin_sums_[h * days_ + d] += s.viewers;
      day_groups[d][group_ids[{h, s.k}]] += 1.0;
      members[h].push_back(i);
    }
    day_group_offset_.push_back(0);
    for (const auto& g : day_groups) {
      for (const auto& [id, count] : g) day_group_entries_.push_back({id, count});
      day_group_offset_.push_back(day_group_entries_.size());
    }

    bin_offset_[0] = 0;
    for (int h = 0; h < 24; ++h) {
      auto& idx = members[h];
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return samples[a].viewers < samples[b].viewers; });
      for (std::uint32_t i : idx) {
        viewers_.push_back(samples[i].viewers);
        day_.push_back(day_ids[day_index(samples[i].minute, tz_offset_minutes)]);
        group_.push_back(group_ids[{h, samples[i].k}]);
      }
      bin_offset_[h + 1] = viewers_.size();
    }
  }

  std::size_t days() const { return days_; }
  std::size_t samples() const { return viewers_.size(); }

  // Statistic on the replicate with the given per-day multiplicities; NaN if
  // either residual is constant.
  double evaluate(std::span<const std::uint32_t> weight) const {
    const std::size_t G = group_k_.size();
    std::vector<double> group_weight(G, 0.0);
    for (std::size_t d = 0; d < days_; ++d) {
      if (weight[d] == 0) continue;
      for (std::size_t e = day_group_offset_[d]; e < day_group_offset_[d + 1]; ++e)
        group_weight[day_group_entries_[e].group] += weight[d] * day_group_entries_[e].count;
    }
    std::array<double, 24> bin_n{}, bin_v{}, bin_k{};
    for (int h = 0; h < 24; ++h)
      for (std::size_t d = 0; d < days_; ++d) {
        if (weight[d] == 0) continue;
        bin_n[h] += weight[d] * bin_counts_[h * days_ + d];
        bin_v[h] += weight[d] * bin_sums_[h * days_ + d];
      }
    for (std::size_t g = 0; g < G; ++g) bin_k[group_bin_[g]] += group_weight[g] * group_k_[g];

    // Ranks of k residuals, one per (hour, k) group.
    std::vector<std::pair<double, std::uint32_t>> kres;
    kres.reserve(G);
    for (std::size_t g = 0; g < G; ++g)
      if (group_weight[g] > 0)
        kres.emplace_back(group_k_[g] - bin_k[group_bin_[g]] / bin_n[group_bin_[g]], static_cast<std::uint32_t>(g));
    std::sort(kres.begin(), kres.end());
    std::vector<double> rank_k(G, 0.0);
    double pos = 0.0, sum_kk = 0.0;
    for (std::size_t i = 0; i < kres.size();) {
      std::size_t j = i;
      double tie_weight = 0.0;
      while (j < kres.size() && kres[j].first == kres[i].first) tie_weight += group_weight[kres[j++].second];
      const double r = pos + (tie_weight + 1.0) / 2.0;
      for (std::size_t t = i; t < j; ++t) rank_k[kres[t].second] = r;
      sum_kk += r * r * tie_weight;
      pos += tie_weight;
      i = j;
    }
    const double total = pos;

    // 24-way merge of viewer residuals.
    struct Head {
      double value;
      int bin;
    };
    std::array<Head, 24> heap{};
    std::array<std::size_t, 24> cursor{};
    std::array<double, 24> shift{};
    int heap_size = 0;
    auto advance = [&](int h) {
      std::size_t c = cursor[h];
      while (c < bin_offset_[h + 1] && weight[day_[c]] == 0) ++c;
      cursor[h] = c;
      return c < bin_offset_[h + 1];
    };
    auto less = [](const Head& a, const Head& b) { return a.value < b.value || (a.value == b.value && a.bin < b.bin); };
    auto sift_down = [&](int i) {
      while (true) {
        int smallest = i;
        const int l = 2 * i + 1, r = l + 1;
        if (l < heap_size && less(heap[l], heap[smallest])) smallest = l;
        if (r < heap_size && less(heap[r], heap[smallest])) smallest = r;
        if (smallest == i) return;
        std::swap(heap[i], heap[smallest]);
        i = smallest;
      }
    };
    for (int h = 0; h < 24; ++h) {
      if (bin_n[h] <= 0) continue;
      shift[h] = bin_v[h] / bin_n[h];
      cursor[h] = bin_offset_[h];
      if (advance(h)) heap[heap_size++] = {viewers_[cursor[h]] - shift[h], h};
    }
    for (int i = heap_size / 2 - 1; i >= 0; --i) sift_down(i);

    pos = 0.0;
    double sum_vv = 0.0, sum_kv = 0.0;
    double tie_value = 0.0, tie_weight = 0.0, tie_k = 0.0;
    auto flush = [&] {
      if (tie_weight == 0.0) return;
      const double r = pos + (tie_weight + 1.0) / 2.0;
      sum_vv += r * r * tie_weight;
      sum_kv += r * tie_k;
      pos += tie_weight;
      tie_weight = 0.0;
      tie_k = 0.0;
    };
    while (heap_size > 0) {
      const Head top = heap[0];
      const std::size_t c = cursor[top.bin];
      if (top.value != tie_value) {
        flush();
        tie_value = top.value;
      }
      const double w = weight[day_[c]];
      tie_weight += w;
      tie_k += w * rank_k[group_[c]];
      ++cursor[top.bin];
      if (advance(top.bin)) {
        heap[0] = {viewers_[cursor[top.bin]] - shift[top.bin], top.bin};
      } else {
        heap[0] = heap[--heap_size];
      }
      sift_down(0);
    }
    flush();

    const double mean_rank = (total + 1.0) / 2.0;
    const double sxy = sum_kv - total * mean_rank * mean_rank;
    const double sxx = sum_kk - total * mean_rank * mean_rank;
    const double syy = sum_vv - total * mean_rank * mean_rank;
    const double scale = total * total * total * 1e-12;
    if (total < 2 || sxx <= scale || syy <= scale) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  }

  double point_estimate() const {
    const std::vector<std::uint32_t> ones(days_, 1);
    return evaluate(ones);
  }

  // Replicate `iteration` draws days() day indices with replacement from
  // Rng(derive_seed(seed, iteration)), the same draw sequence as
  // stats::block_bootstrap_ci over the day groups.
  stats::BootstrapCI confidence_interval(std::size_t iterations, double level, std::uint64_t seed) const {
    if (days_ < 2) throw DegenerateInput("block bootstrap needs at least two days");
    if (iterations < 100) throw Error("block bootstrap needs at least 100 iterations");
    if (!(level > 0.0 && level < 1.0)) throw Error("confidence level must lie in (0, 1)");
    const double point = point_estimate();
    if (std::isnan(point)) throw DegenerateInput("residualized series is constant");
    std::vector<double> replicates(iterations);
    parallel_for(iterations, [&](std::size_t it) {
      Rng rng(derive_seed(seed, it));
      std::vector<std::uint32_t> weight(days_, 0);
      for (std::size_t k = 0; k < days_; ++k) ++weight[rng.below(days_)];
      replicates[it] = evaluate(weight);
    });
    return stats::percentile_interval(std::move(replicates), point, level, seed);
  }

 private:
  struct GroupCount {
    std::uint32_t group;
    double count;
  };

  std::size_t days_ = 0;
  std::vector<int> group_bin_;
  std::vector<std::int32_t> group_k_;
  std::vector<double> bin_counts_;  // [hour][day]
  std::vector<double> bin_sums_;    // [hour][day]
  std::vector<GroupCount> day_group_entries_;
  std::vector<std::size_t> day_group_offset_;
  std::array<std::size_t, 25> bin_offset_{};
  std::vector<double> viewers_;  // bin-major, ascending within bin
  std::vector<std::uint32_t> day_;
  std::vector<std::uint32_t> group_;
};

struct DilutionResult {
  DilutionBuckets buckets;
  double rho_total_vs_k = 0.0;
  double rho_residual = 0.0;
  stats::BootstrapCI residual_ci;
  std::size_t n_samples = 0;
  std::size_t n_days = 0;
  std::int64_t tz_offset_minutes = 0;
};

struct DilutionOptions {
  std::size_t iterations = 2000;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::int64_t tz_offset_minutes = 0;
};

// Everything except the bootstrap interval, which is filled with the point
// estimate only.
inline DilutionResult dilution_point(const Collected& data, const DilutionOptions& opt,
                                     const ResidualBootstrap& engine) {
  DilutionResult r;
  r.buckets = dilution_buckets(data);
  r.rho_total_vs_k = raw_total_correlation(data);
  r.rho_residual = engine.point_estimate();
  if (std::isnan(r.rho_residual)) throw DegenerateInput("residualized series is constant");
  r.n_samples = data.samples.size();
  r.n_days = engine.days();
  r.tz_offset_minutes = opt.tz_offset_minutes;
  r.residual_ci.point_estimate = r.rho_residual;
  r.residual_ci.lower = r.residual_ci.upper = r.rho_residual;
  r.residual_ci.level = opt.level;
  r.residual_ci.seed = opt.seed;
  return r;
}

inline DilutionResult residual_spearman_with_ci(const Panel& panel, const ChannelScope& scope,
                                                const DilutionOptions& opt = {}) {
  const auto data = collect(panel, scope);
  if (data.samples.size() < 2) throw DegenerateInput("scope has fewer than two samples");
  const ResidualBootstrap engine(data.samples, opt.tz_offset_minutes);
  auto r = dilution_point(data, opt, engine);
  r.residual_ci = engine.confidence_interval(opt.iterations, opt.level, opt.seed);
  return r;
}

}  // namespace lens::dilution
