#pragma once

// Block cache with a prefix partition and an interval-caching partition.
//
// Blocks are keyed by (video, block index) and tagged prefix when they fall
// in the video's first strand. Pinned blocks (held by the prefix set, a
// cached interval, an open batch or a channel) are never evicted. With
// prefix priority on, eviction prefers later suffix blocks of unpopular
// videos and touches prefix blocks last; with it off the cache is plain LRU
// and keeps no prefix set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "vodsim/errors.hpp"
#include "vodsim/workload.hpp"

namespace vodsim {

struct CacheConfig {
  int capacity_blocks = 2000;
  double prefix_fraction = 0.5;
  double cache_bandwidth_Bps = 1e9;
  double popularity_half_life_s = 600.0;
  double popularity_refresh_s = 60.0;
  bool prefix_priority = true;

  [[nodiscard]] int prefix_capacity() const {
    return static_cast<int>(std::floor(prefix_fraction * capacity_blocks + 1e-9));
  }
  [[nodiscard]] int interval_capacity() const { return capacity_blocks - prefix_capacity(); }

  void validate() const {
    if (capacity_blocks <= 0) throw ConfigError("cache.capacity_blocks must be positive");
    if (!(prefix_fraction >= 0.0 && prefix_fraction <= 1.0)) throw ConfigError("cache.prefix_fraction must be in [0,1]");
    if (!(cache_bandwidth_Bps > 0.0)) throw ConfigError("cache.cache_bandwidth_Bps must be positive");
    if (!(popularity_half_life_s > 0.0)) throw ConfigError("cache.popularity_half_life_s must be positive");
    if (!(popularity_refresh_s > 0.0)) throw ConfigError("cache.popularity_refresh_s must be positive");
  }
};

enum class BlockTag { prefix, suffix };

struct CachedBlock {
  VideoId video_id = 0;
  int block_index = 0;
  BlockTag tag = BlockTag::suffix;
  double insert_time = 0;
  double last_ref_time = 0;
};

struct IntervalEntry {
  VideoId video_id = 0;
  long long preceding_stream_id = 0;
  long long following_stream_id = 0;
  int length_blocks = 0;
  bool allocated = false;
};

// Position of an active stream (unicast or multicast channel) in its video.
struct StreamCursor {
  long long stream_id = 0;
  VideoId video_id = 0;
  int cursor = 0;  // next block to be delivered
};

// Pairs a new request with the nearest active stream ahead of it on the same
// video. The following stream starts at block 0, so the gap is the leader's
// cursor. Ties go to the lower stream id.
inline std::optional<IntervalEntry> find_interval(const Request& request, std::span<const StreamCursor> active,
                                                  long long following_stream_id) {
  std::optional<IntervalEntry> best;
  for (const auto& s : active) {
    if (s.video_id != request.video_id || s.cursor <= 0 || s.stream_id == following_stream_id) continue;
    if (!best || s.cursor < best->length_blocks ||
        (s.cursor == best->length_blocks && s.stream_id < best->preceding_stream_id)) {
      best = IntervalEntry{request.video_id, s.stream_id, following_stream_id, s.cursor, false};
    }
  }
  return best;
}

// Interval caching allocation: smallest intervals first, as many as fit.
inline std::vector<IntervalEntry> allocate_intervals(std::vector<IntervalEntry> candidates, int free_blocks) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const IntervalEntry& a, const IntervalEntry& b) {
    return std::tie(a.length_blocks, a.video_id, a.following_stream_id) <
           std::tie(b.length_blocks, b.video_id, b.following_stream_id);
  });
  std::vector<IntervalEntry> out;
  for (auto& c : candidates) {
    if (c.length_blocks < 1) continue;
    if (c.length_blocks <= free_blocks) {
      free_blocks -= c.length_blocks;
      c.allocated = true;
      out.push_back(c);
    }
  }
  return out;
}

// Nc = lambda_c * T_c.
inline double littles_law_estimate(double arrival_rate_per_s, double mean_cache_service_s) {
  if (arrival_rate_per_s < 0.0 || mean_cache_service_s < 0.0)
    throw DomainError("littles_law_estimate: arguments must be non-negative");
  return arrival_rate_per_s * mean_cache_service_s;
}

// Exponentially decayed request counts per video.
class PopularityTable {
 public:
  PopularityTable(int total_videos, double half_life_s)
      : counts_(static_cast<std::size_t>(total_videos), 0.0),
        stamp_(static_cast<std::size_t>(total_videos), 0.0),
        half_life_s_(half_life_s) {}

  void record(VideoId v, double now) {
    auto i = static_cast<std::size_t>(v);
    counts_.at(i) = decayed(i, now) + 1.0;
    stamp_[i] = now;
  }

  [[nodiscard]] double score(VideoId v, double now) const { return decayed(static_cast<std::size_t>(v), now); }

  // Most popular first; equal scores go to the lower video id.
  [[nodiscard]] std::vector<VideoId> ranking(double now) const {
    std::vector<std::pair<double, VideoId>> s;
    s.reserve(counts_.size());
    for (std::size_t i = 0; i < counts_.size(); ++i) s.emplace_back(decayed(i, now), static_cast<VideoId>(i));
    std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<VideoId> out;
    out.reserve(s.size());
    for (const auto& p : s) out.push_back(p.second);
    return out;
  }

  [[nodiscard]] int size() const { return static_cast<int>(counts_.size()); }

 private:
  [[nodiscard]] double decayed(std::size_t i, double now) const {
    const double dt = std::max(0.0, now - stamp_.at(i));
    return counts_[i] * std::exp2(-dt / half_life_s_);
  }

  std::vector<double> counts_;
  std::vector<double> stamp_;
  double half_life_s_;
};

struct PrefixUpdate {
  std::vector<VideoId> admitted;   // entered the prefix set
  std::vector<VideoId> displaced;  // left the prefix set
};

enum class CacheEventKind { admit, evict, hit, miss };

struct CacheEvent {
  double time = 0;
  CacheEventKind kind = CacheEventKind::hit;
  VideoId video_id = 0;
  int block_index = 0;
};

inline const char* to_string(CacheEventKind k) {
  switch (k) {
    case CacheEventKind::admit: return "admit";
    case CacheEventKind::evict: return "evict";
    case CacheEventKind::hit: return "hit";
    case CacheEventKind::miss: return "miss";
  }
  return "?";
}

class BlockCache {
 public:
  BlockCache(CacheConfig config, const Catalog& catalog)
      : config_(config),
        catalog_(&catalog),
        rank_(static_cast<std::size_t>(catalog.total_videos()), 0),
        wanted_(static_cast<std::size_t>(catalog.total_videos()), false),
        per_video_(static_cast<std::size_t>(catalog.total_videos())) {
    config_.validate();
    for (const auto& v : catalog.videos()) rank_[static_cast<std::size_t>(v.id)] = v.id + 1;
  }

  [[nodiscard]] const CacheConfig& config() const { return config_; }
  [[nodiscard]] int size() const { return static_cast<int>(entries_.size()); }
  [[nodiscard]] int prefix_resident() const { return prefix_count_; }
  [[nodiscard]] int pinned_blocks() const { return size() - static_cast<int>(evictable_.size()); }
  [[nodiscard]] int evictable_blocks() const { return static_cast<int>(evictable_.size()); }

  [[nodiscard]] bool contains(VideoId v, int block) const { return entries_.count(key(v, block)) != 0; }

  [[nodiscard]] int pins(VideoId v, int block) const {
    auto it = entries_.find(key(v, block));
    return it == entries_.end() ? 0 : it->second.pins;
  }

  [[nodiscard]] std::optional<CachedBlock> block(VideoId v, int b) const {
    auto it = entries_.find(key(v, b));
    if (it == entries_.end()) return std::nullopt;
    return CachedBlock{v, b, it->second.tag, it->second.insert_time, it->second.last_ref};
  }

  // Counts a hit or miss and refreshes the block's reference time.
  bool lookup(VideoId v, int b, double now) {
    auto it = entries_.find(key(v, b));
    if (it == entries_.end()) {
      ++misses_;
      log(now, CacheEventKind::miss, v, b);
      return false;
    }
    ++hits_;
    touch(it->second, v, b, now);
    log(now, CacheEventKind::hit, v, b);
    return true;
  }

  [[nodiscard]] long long hits() const { return hits_; }
  [[nodiscard]] long long misses() const { return misses_; }
  [[nodiscard]] long long lookups() const { return hits_ + misses_; }
  [[nodiscard]] double hit_ratio() const {
    return lookups() == 0 ? 0.0 : static_cast<double>(hits_) / static_cast<double>(lookups());
  }

  // Makes (v, b) resident, evicting as needed. Without `force` the block is
  // only admitted if it would not itself be the next eviction victim.
  // Returns false when nothing could be evicted to make room.
  bool insert(VideoId v, int b, double now, bool force = false) {
    if (contains(v, b)) return true;
    const auto& video = catalog_->video(v);
    if (b < 0 || b >= video.length_blocks) throw DomainError("insert: block index out of range");
    const BlockTag tag = video.is_prefix_block(b) ? BlockTag::prefix : BlockTag::suffix;
    const bool want_pin = tag == BlockTag::prefix && wanted_[static_cast<std::size_t>(v)] && config_.prefix_priority;
    force = force || want_pin;
    Entry incoming{tag, now, now, 0};
    if (config_.prefix_priority && tag == BlockTag::prefix && prefix_count_ >= config_.prefix_capacity()) {
      auto victim = evictable_.lower_bound(EvictKey{1, -1e300, -1e300, -1, -1});
      if (victim == evictable_.end()) return false;
      if (!force && make_key(incoming, v, b) < *victim) return false;
      erase(std::get<3>(*victim), std::get<4>(*victim), now);
    }
    if (size() >= config_.capacity_blocks) {
      if (evictable_.empty()) return false;
      const auto victim = *evictable_.begin();
      if (!force && make_key(incoming, v, b) < victim) return false;
      erase(std::get<3>(victim), std::get<4>(victim), now);
    }
    entries_.emplace(key(v, b), incoming);
    per_video_[static_cast<std::size_t>(v)].insert(b);
    if (tag == BlockTag::prefix) ++prefix_count_;
    evictable_.insert(make_key(incoming, v, b));
    log(now, CacheEventKind::admit, v, b);
    if (want_pin) pin(v, b);
    return true;
  }

  bool pin(VideoId v, int b) {
    auto it = entries_.find(key(v, b));
    if (it == entries_.end()) return false;
    if (it->second.pins++ == 0) evictable_.erase(make_key(it->second, v, b));
    return true;
  }

  void unpin(VideoId v, int b) {
    auto it = entries_.find(key(v, b));
    if (it == entries_.end() || it->second.pins == 0) throw StateError("unpin: block is not pinned");
    if (--it->second.pins == 0) evictable_.insert(make_key(it->second, v, b));
  }

  // Evicts exactly `needed` unpinned blocks in eviction order, or throws
  // CacheFullError (and evicts nothing) if fewer are evictable.
  std::vector<CachedBlock> evict(int needed, double now = 0) {
    if (needed > config_.capacity_blocks) throw DomainError("evict: request exceeds capacity");
    if (needed > evictable_blocks())
      throw CacheFullError("evict: need " + std::to_string(needed) + " blocks, only " +
                           std::to_string(evictable_blocks()) + " evictable");
    std::vector<CachedBlock> out;
    for (int i = 0; i < needed; ++i) {
      const auto k = *evictable_.begin();
      out.push_back(*block(std::get<3>(k), std::get<4>(k)));
      erase(std::get<3>(k), std::get<4>(k), now);
    }
    return out;
  }

  // Recomputes the prefix set from the popularity ranking: prefixes are
  // taken in rank order until the next one no longer fits the partition.
  PrefixUpdate update_prefix_set(const PopularityTable& pop, double now) {
    const auto order = pop.ranking(now);
    std::vector<int> new_rank(rank_.size());
    for (std::size_t i = 0; i < order.size(); ++i) new_rank[static_cast<std::size_t>(order[i])] = static_cast<int>(i) + 1;
    return apply_ranking(new_rank);
  }

  // Same as update_prefix_set but from an explicit rank per video (1 = best).
  PrefixUpdate apply_ranking(const std::vector<int>& rank_of_video) {
    if (rank_of_video.size() != rank_.size()) throw DomainError("apply_ranking: size mismatch");
    rebuild_eviction_index(rank_of_video);
    std::vector<VideoId> order(rank_.size());
    for (std::size_t i = 0; i < rank_.size(); ++i) order[static_cast<std::size_t>(rank_[i] - 1)] = static_cast<VideoId>(i);

    std::vector<bool> next(rank_.size(), false);
    if (config_.prefix_priority) {
      int budget = config_.prefix_capacity();
      for (VideoId v : order) {
        const int need = catalog_->video(v).prefix().size();
        if (need > budget) break;
        budget -= need;
        next[static_cast<std::size_t>(v)] = true;
      }
    }
    PrefixUpdate upd;
    for (VideoId v : order) {
      const auto i = static_cast<std::size_t>(v);
      if (wanted_[i] == next[i]) continue;
      const auto& p = catalog_->video(v).prefix();
      if (next[i]) {
        upd.admitted.push_back(v);
        for (int b = p.begin; b < p.end; ++b) pin(v, b);
      } else {
        upd.displaced.push_back(v);
        for (int b = p.begin; b < p.end; ++b)
          if (contains(v, b)) unpin(v, b);
      }
      wanted_[i] = next[i];
    }
    return upd;
  }

  [[nodiscard]] bool in_prefix_set(VideoId v) const { return wanted_.at(static_cast<std::size_t>(v)); }
  [[nodiscard]] int rank_of(VideoId v) const { return rank_.at(static_cast<std::size_t>(v)); }

  [[nodiscard]] bool prefix_fully_resident(VideoId v) const {
    const auto& p = catalog_->video(v).prefix();
    return resident_in_range(v, p.begin, p.end) == p.size();
  }

  [[nodiscard]] int resident_in_range(VideoId v, int begin, int end) const {
    const auto& s = per_video_.at(static_cast<std::size_t>(v));
    int n = 0;
    for (auto it = s.lower_bound(begin); it != s.end() && *it < end; ++it) ++n;
    return n;
  }

  // C_i: frames of the video resident at or after `cursor`.
  [[nodiscard]] double cached_frames(VideoId v, int cursor, int frames_per_block) const {
    const auto& s = per_video_.at(static_cast<std::size_t>(v));
    int n = 0;
    for (auto it = s.lower_bound(cursor); it != s.end(); ++it) ++n;
    return static_cast<double>(n) * frames_per_block;
  }

  // Throws StateError describing the first broken invariant.
  void audit() const {
    auto fail = [](const std::string& m) { throw StateError("cache audit: " + m); };
    if (size() > config_.capacity_blocks) fail("occupancy above capacity");
    if (config_.prefix_priority && prefix_count_ > config_.prefix_capacity()) fail("prefix partition overfull");
    int prefix = 0;
    std::size_t unpinned = 0;
    std::size_t indexed = 0;
    for (const auto& [k, e] : entries_) {
      if (e.tag == BlockTag::prefix) ++prefix;
      if (e.pins < 0) fail("negative pin count");
      if (e.pins == 0) {
        ++unpinned;
        const auto v = static_cast<VideoId>(k >> 32);
        const auto b = static_cast<int>(k & 0xffffffffULL);
        if (!evictable_.count(make_key(e, v, b))) fail("unpinned block missing from eviction index");
      }
    }
    for (const auto& s : per_video_) indexed += s.size();
    if (indexed != entries_.size()) fail("per-video index out of sync");
    if (prefix != prefix_count_) fail("prefix counter out of sync");
    if (unpinned != evictable_.size()) fail("eviction index holds pinned blocks");
    for (std::size_t v = 0; v < wanted_.size(); ++v) {
      if (!wanted_[v]) continue;
      const auto& p = catalog_->video(static_cast<VideoId>(v)).prefix();
      for (int b = p.begin; b < p.end; ++b)
        if (contains(static_cast<VideoId>(v), b) && pins(static_cast<VideoId>(v), b) < 1) fail("prefix-set block unpinned");
    }
  }

  void enable_event_log(bool on) { log_on_ = on; }
  [[nodiscard]] const std::vector<CacheEvent>& events() const { return events_; }

 private:
  struct Entry {
    BlockTag tag;
    double insert_time;
    double last_ref;
    int pins;
  };
  // Lexicographic eviction order; the last two fields are (video, block).
  using EvictKey = std::tuple<int, double, double, int, int>;

  static std::uint64_t key(VideoId v, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)) << 32) | static_cast<std::uint32_t>(b);
  }

  [[nodiscard]] EvictKey make_key(const Entry& e, VideoId v, int b) const {
    if (!config_.prefix_priority) return {0, e.last_ref, 0.0, v, b};
    const double rank = rank_[static_cast<std::size_t>(v)];
    // suffix: highest block first, then least popular; prefix: least popular first
    if (e.tag == BlockTag::suffix) return {0, -static_cast<double>(b), -rank, v, b};
    return {1, -rank, -static_cast<double>(b), v, b};
  }

  void touch(Entry& e, VideoId v, int b, double now) {
    if (e.pins == 0 && !config_.prefix_priority) {
      evictable_.erase(make_key(e, v, b));
      e.last_ref = now;
      evictable_.insert(make_key(e, v, b));
    } else {
      e.last_ref = now;
    }
  }

  void erase(VideoId v, int b, double now) {
    auto it = entries_.find(key(v, b));
    if (it->second.pins != 0) throw StateError("erase: block is pinned");
    evictable_.erase(make_key(it->second, v, b));
    if (it->second.tag == BlockTag::prefix) --prefix_count_;
    entries_.erase(it);
    per_video_[static_cast<std::size_t>(v)].erase(b);
    log(now, CacheEventKind::evict, v, b);
  }

  void rebuild_eviction_index(const std::vector<int>& rank_of_video) {
    rank_ = rank_of_video;
    evictable_.clear();
    for (const auto& [k, e] : entries_) {
      if (e.pins != 0) continue;
      evictable_.insert(make_key(e, static_cast<VideoId>(k >> 32), static_cast<int>(k & 0xffffffffULL)));
    }
  }

  void log(double now, CacheEventKind kind, VideoId v, int b) {
    if (log_on_) events_.push_back({now, kind, v, b});
  }

  CacheConfig config_;
  const Catalog* catalog_;
  std::unordered_map<std::uint64_t, Entry> entries_;
  std::set<EvictKey> evictable_;
  std::vector<int> rank_;
  std::vector<bool> wanted_;
  std::vector<std::set<int>> per_video_;
  int prefix_count_ = 0;
  long long hits_ = 0;
  long long misses_ = 0;
  bool log_on_ = false;
  std::vector<CacheEvent> events_;
};

}  // namespace vodsim
