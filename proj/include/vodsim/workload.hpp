#pragma once

// Video catalog and request arrival process.
//
// A video is a sequence of fixed-duration blocks (one block is one second of
// playback at the client bit rate) split into four contiguous strands. The
// first strand is the prefix. Requests arrive as a Poisson process and pick
// a video by Zipf popularity over ranks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vodsim/errors.hpp"
#include "vodsim/random.hpp"

namespace vodsim {

using VideoId = int;
using RequestId = std::int64_t;

struct BlockRange {
  int begin = 0;  // inclusive
  int end = 0;    // exclusive

  [[nodiscard]] int size() const { return end - begin; }
  [[nodiscard]] bool empty() const { return end <= begin; }
  [[nodiscard]] bool contains(int block) const { return block >= begin && block < end; }

  friend bool operator==(const BlockRange&, const BlockRange&) = default;
};

struct Video {
  VideoId id = 0;
  int length_blocks = 0;
  std::array<BlockRange, 4> strands{};  // S1..S4; S1 is the prefix
  double playback_rate_fps = 25.0;
  int popularity_rank = 1;  // 1 = most popular

  [[nodiscard]] const BlockRange& prefix() const { return strands[0]; }
  [[nodiscard]] bool is_prefix_block(int block) const { return strands[0].contains(block); }

  friend bool operator==(const Video&, const Video&) = default;
};

struct WorkloadConfig {
  int total_videos = 100;
  double mean_interarrival_s = 60.0;
  double zipf_theta = 1.0;
  int mean_length_blocks = 200;
  int min_length_blocks = 40;
  double client_bit_rate_bps = 300'000.0;
  double startup_tolerance_s = 30.0;
  double prefix_strand_fraction = 0.1;
  bool early_termination_enabled = false;
  double early_termination_prob = 0.9;
  double early_termination_extra_fraction = 0.2;

  void validate() const {
    if (total_videos <= 0) throw ConfigError("workload.total_videos must be positive");
    if (!(mean_interarrival_s > 0.0)) throw ConfigError("workload.mean_interarrival_s must be positive");
    if (!(zipf_theta >= 0.0)) throw ConfigError("workload.zipf_theta must be >= 0");
    if (min_length_blocks <= 0) throw ConfigError("workload.min_length_blocks must be positive");
    if (mean_length_blocks < min_length_blocks)
      throw ConfigError("workload.mean_length_blocks must be >= min_length_blocks");
    if (!(client_bit_rate_bps > 0.0)) throw ConfigError("workload.client_bit_rate_bps must be positive");
    if (!(startup_tolerance_s > 0.0)) throw ConfigError("workload.startup_tolerance_s must be positive");
    if (!(prefix_strand_fraction > 0.0 && prefix_strand_fraction <= 1.0))
      throw ConfigError("workload.prefix_strand_fraction must be in (0,1]");
    if (!(early_termination_prob >= 0.0 && early_termination_prob <= 1.0))
      throw ConfigError("workload.early_termination_prob must be in [0,1]");
    if (!(early_termination_extra_fraction >= 0.0))
      throw ConfigError("workload.early_termination_extra_fraction must be >= 0");
  }
};

struct Request {
  RequestId id = 0;
  VideoId video_id = 0;
  double arrival_time = 0.0;
  double bit_rate = 0.0;
  double deadline = 0.0;
};

// Zipf probability of `rank` among n ranks: rank^-theta / sum_k k^-theta.
inline double zipf_mass(int rank, double theta, int n) {
  if (n <= 0) throw DomainError("zipf_mass: n must be positive");
  if (rank < 1 || rank > n) throw DomainError("zipf_mass: rank " + std::to_string(rank) + " outside [1," + std::to_string(n) + "]");
  double norm = 0.0;
  for (int k = n; k >= 1; --k) norm += std::pow(static_cast<double>(k), -theta);
  return std::pow(static_cast<double>(rank), -theta) / norm;
}

// S1 = ceil(fraction * length) (at least 1); the remainder is split evenly
// over S2..S4 with leftover blocks going to the earlier strands.
inline std::array<BlockRange, 4> split_strands(int length_blocks, double prefix_fraction) {
  if (length_blocks <= 0) throw DomainError("split_strands: length must be positive");
  const int prefix = std::clamp(static_cast<int>(std::ceil(prefix_fraction * length_blocks - 1e-9)), 1, length_blocks);
  const int rest = length_blocks - prefix;
  std::array<BlockRange, 4> s{};
  s[0] = {0, prefix};
  int at = prefix;
  for (int i = 1; i < 4; ++i) {
    const int len = rest / 3 + (i - 1 < rest % 3 ? 1 : 0);
    s[i] = {at, at + len};
    at += len;
  }
  return s;
}

class Catalog {
 public:
  Catalog() = default;
  Catalog(std::vector<Video> videos, double zipf_theta) : videos_(std::move(videos)), zipf_theta_(zipf_theta) {
    const int n = total_videos();
    by_rank_.assign(n, 0);
    for (const auto& v : videos_) by_rank_.at(v.popularity_rank - 1) = v.id;
    cdf_.resize(n);
    double norm = 0.0;
    for (int k = n; k >= 1; --k) norm += std::pow(static_cast<double>(k), -zipf_theta_);
    double acc = 0.0;
    for (int k = 1; k <= n; ++k) {
      acc += std::pow(static_cast<double>(k), -zipf_theta_) / norm;
      cdf_[k - 1] = acc;
    }
    if (n > 0) cdf_.back() = 1.0;
  }

  [[nodiscard]] const std::vector<Video>& videos() const { return videos_; }
  [[nodiscard]] const Video& video(VideoId id) const { return videos_.at(static_cast<std::size_t>(id)); }
  [[nodiscard]] int total_videos() const { return static_cast<int>(videos_.size()); }
  [[nodiscard]] double zipf_theta() const { return zipf_theta_; }
  [[nodiscard]] VideoId video_at_rank(int rank) const { return by_rank_.at(rank - 1); }

  // Rank drawn from the Zipf pmf by inverse CDF.
  [[nodiscard]] int sample_rank(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const auto idx = std::min<std::ptrdiff_t>(it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1);
    return static_cast<int>(idx) + 1;
  }

  friend bool operator==(const Catalog& a, const Catalog& b) {
    return a.videos_ == b.videos_ && a.zipf_theta_ == b.zipf_theta_;
  }

 private:
  std::vector<Video> videos_;
  double zipf_theta_ = 1.0;
  std::vector<VideoId> by_rank_;
  std::vector<double> cdf_;
};

// Lengths are min_length + Geometric(mean - min_length), i.e. a geometric
// truncated below at min_length whose mean is exactly mean_length_blocks.
// Ranks are a seeded permutation of 1..N so popularity is decoupled from id.
inline Catalog build_catalog(const WorkloadConfig& config, std::uint64_t seed, int frames_per_block = 25) {
  config.validate();
  if (frames_per_block <= 0) throw ConfigError("disk.frames_per_block must be positive");
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const int n = config.total_videos;
  std::vector<Video> videos(static_cast<std::size_t>(n));
  const double tail_mean = static_cast<double>(config.mean_length_blocks - config.min_length_blocks);
  for (int i = 0; i < n; ++i) {
    auto& v = videos[static_cast<std::size_t>(i)];
    v.id = i;
    const auto extra = rng.geometric(tail_mean);
    v.length_blocks = config.min_length_blocks + static_cast<int>(std::min<std::uint64_t>(extra, 1'000'000));
    v.strands = split_strands(v.length_blocks, config.prefix_strand_fraction);
    v.playback_rate_fps = static_cast<double>(frames_per_block);
  }
  std::vector<int> ranks(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ranks[static_cast<std::size_t>(i)] = i + 1;
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(ranks[static_cast<std::size_t>(i)], ranks[static_cast<std::size_t>(j)]);
  }
  for (int i = 0; i < n; ++i) videos[static_cast<std::size_t>(i)].popularity_rank = ranks[static_cast<std::size_t>(i)];
  return Catalog(std::move(videos), config.zipf_theta);
}

// Draws the next request after `previous_arrival`.
inline Request next_arrival(Rng& rng, const Catalog& catalog, const WorkloadConfig& config,
                            double previous_arrival, RequestId id) {
  Request r;
  r.id = id;
  r.arrival_time = previous_arrival + rng.exponential(config.mean_interarrival_s);
  r.video_id = catalog.video_at_rank(catalog.sample_rank(rng));
  r.bit_rate = config.client_bit_rate_bps;
  r.deadline = r.arrival_time + config.startup_tolerance_s;
  return r;
}

// Number of blocks a client watches before leaving early, or nullopt when it
// watches to the end. Early leavers watch the prefix plus an exponential
// extra with mean extra_fraction * length.
inline std::optional<int> draw_watch_blocks(Rng& rng, const Video& video, const WorkloadConfig& config) {
  if (!config.early_termination_enabled) return std::nullopt;
  if (!rng.bernoulli(config.early_termination_prob)) return std::nullopt;
  const double extra = rng.exponential(config.early_termination_extra_fraction * video.length_blocks);
  const int watch = video.prefix().size() + static_cast<int>(std::ceil(extra));
  if (watch >= video.length_blocks) return std::nullopt;
  return watch;
}

}  // namespace vodsim
