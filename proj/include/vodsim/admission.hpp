#pragma once

// Admission control policies.
//
// A policy is a pure function from (request, server snapshot) to a decision;
// the engine applies the decision afterwards. Four policies are provided:
//
//   deterministic         worst-case: every stream is charged its full rate
//   statistical           windowed quantile of measured round load
//   pic                   popularity-aware interval caching, else deterministic
//   prefix-pic-multicast  batch on a cached prefix, else IC, else disk with
//                         cache credit

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vodsim/cache.hpp"
#include "vodsim/disk_model.hpp"
#include "vodsim/errors.hpp"
#include "vodsim/multicast.hpp"
#include "vodsim/workload.hpp"

namespace vodsim {

enum class Policy { deterministic, statistical, pic, prefix_pic_multicast };

inline constexpr std::array<std::string_view, 4> kPolicyNames = {"deterministic", "statistical", "pic",
                                                                 "prefix-pic-multicast"};

inline std::string_view to_string(Policy p) { return kPolicyNames[static_cast<std::size_t>(p)]; }

inline std::optional<Policy> parse_policy(std::string_view name) {
  for (std::size_t i = 0; i < kPolicyNames.size(); ++i)
    if (kPolicyNames[i] == name) return static_cast<Policy>(i);
  return std::nullopt;
}

enum class DecisionKind { admit_disk, admit_cache_interval, admit_batch, reject };
enum class RejectReason { none, disk_bound, network_bound, cache_full };
enum class BatchAction { none, join, open };

inline const char* to_string(DecisionKind k) {
  switch (k) {
    case DecisionKind::admit_disk: return "admit_disk";
    case DecisionKind::admit_cache_interval: return "admit_cache_interval";
    case DecisionKind::admit_batch: return "admit_batch";
    case DecisionKind::reject: return "reject";
  }
  return "?";
}

inline const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::none: return "none";
    case RejectReason::disk_bound: return "disk-bound";
    case RejectReason::network_bound: return "network-bound";
    case RejectReason::cache_full: return "cache-full";
  }
  return "?";
}

struct AdmissionDecision {
  DecisionKind kind = DecisionKind::reject;
  RejectReason reason = RejectReason::none;
  double charged_rate_bps = 0;  // disk-side rate reserved at admit time
  BatchAction batch = BatchAction::none;
  std::optional<BatchId> join_batch;
  std::optional<IntervalEntry> interval;
  std::optional<ActiveStream> reservation;  // disk stream to reserve, if any

  [[nodiscard]] bool admitted() const { return kind != DecisionKind::reject; }
};

// Recent per-round load ratios T/R, oldest first.
class LoadHistory {
 public:
  explicit LoadHistory(std::size_t window = 200) : window_(window) {
    if (window_ == 0) throw ConfigError("admission.statistical_window must be positive");
  }

  [[nodiscard]] std::size_t window() const { return window_; }
  [[nodiscard]] std::size_t size() const { return ratios_.size(); }
  [[nodiscard]] bool empty() const { return ratios_.empty(); }
  [[nodiscard]] const std::deque<double>& ratios() const { return ratios_; }
  // Per-stream load T/(R*n) for rounds recorded with a stream count.
  [[nodiscard]] const std::deque<double>& per_stream() const { return per_stream_; }

  // Nearest-rank empirical quantile.
  [[nodiscard]] double quantile(double q) const { return nearest_rank(ratios_, q); }
  [[nodiscard]] double per_stream_quantile(double q) const { return nearest_rank(per_stream_, q); }

  void record(double service_time_s, double round_s) {
    if (!(round_s > 0.0)) throw DomainError("record_round_load: R must be positive");
    if (service_time_s < 0.0) throw DomainError("record_round_load: T must be non-negative");
    ratios_.push_back(service_time_s / round_s);
    while (ratios_.size() > window_) ratios_.pop_front();
  }

  // Same, also remembering how many streams produced the load.
  void record(double service_time_s, double round_s, std::size_t streams) {
    record(service_time_s, round_s);
    if (streams == 0) return;
    per_stream_.push_back(service_time_s / round_s / static_cast<double>(streams));
    while (per_stream_.size() > window_) per_stream_.pop_front();
  }

 private:
  static double nearest_rank(const std::deque<double>& d, double q) {
    if (d.empty()) throw StateError("LoadHistory::quantile: empty history");
    std::vector<double> s(d.begin(), d.end());
    std::sort(s.begin(), s.end());
    const auto n = static_cast<double>(s.size());
    auto idx = static_cast<std::size_t>(std::max(1.0, std::ceil(q * n - 1e-9))) - 1;
    return s[std::min(idx, s.size() - 1)];
  }

  std::size_t window_;
  std::deque<double> ratios_;
  std::deque<double> per_stream_;
};

inline LoadHistory record_round_load(LoadHistory history, double service_time_s, double round_s) {
  history.record(service_time_s, round_s);
  return history;
}

// What a policy may look at when deciding on one request.
struct ServerSnapshot {
  Request request;
  int length_blocks = 0;
  int prefix_blocks = 0;
  int frames_per_block = 25;
  double playback_rate_fps = 25;
  DiskParams disk;                              // frame_size_bytes resolved
  std::span<const ActiveStream> committed;      // reserved plus committed-but-pending disk streams
  double network_free_bps = 0;
  double cached_frames = 0;                     // C_i at cursor 0
  bool prefix_resident = false;
  const Batch* open_batch = nullptr;            // open batch for the requested video
  bool commit_suffix_at_open = true;
  std::optional<IntervalEntry> interval;        // nearest preceding stream, if any
  int ic_free_blocks = 0;
  double interval_cached_frames = 0;            // credit the follower would get
  const LoadHistory* history = nullptr;
  double epsilon = 0.01;
  double pending_round_cost_s = 0;              // admitted since the last measured round
  int batch_wait_blocks = 0;                    // rounds a newly opened batch would wait before starting

  [[nodiscard]] double total_frames() const { return static_cast<double>(length_blocks) * frames_per_block; }

  [[nodiscard]] ActiveStream candidate(double cached = 0) const {
    ActiveStream s;
    s.stream_id = request.id;
    s.video_id = request.video_id;
    s.frames_per_round = frames_per_block;
    s.playback_rate_fps = playback_rate_fps;
    s.total_frames = total_frames();
    s.cached_frames = std::clamp(cached, 0.0, s.total_frames);
    s.source = StreamSource::disk;
    return s;
  }
};

namespace detail {

inline AdmissionDecision reject(RejectReason r) {
  AdmissionDecision d;
  d.kind = DecisionKind::reject;
  d.reason = r;
  return d;
}

inline AdmissionDecision disk_admission(const ServerSnapshot& s, double cached) {
  const ActiveStream cand = s.candidate(cached);
  if (!admission_feasible(s.committed, cand, s.disk).feasible) return reject(RejectReason::disk_bound);
  if (s.network_free_bps < s.request.bit_rate) return reject(RejectReason::network_bound);
  AdmissionDecision d;
  d.kind = DecisionKind::admit_disk;
  d.charged_rate_bps = cached > 0 ? reduced_bit_rate(cand.total_frames, cand.cached_frames, s.request.bit_rate)
                                  : s.request.bit_rate;
  d.reservation = cand;
  return d;
}

// Interval-caching path shared by pic and prefix-pic-multicast. Returns
// nullopt when no interval can be allocated.
inline std::optional<AdmissionDecision> interval_admission(const ServerSnapshot& s) {
  if (!s.interval) return std::nullopt;
  const auto alloc = allocate_intervals({*s.interval}, s.ic_free_blocks);
  if (alloc.empty()) return std::nullopt;
  if (s.network_free_bps < s.request.bit_rate) return std::nullopt;
  const ActiveStream cand = s.candidate(s.interval_cached_frames);
  AdmissionDecision d;
  d.kind = DecisionKind::admit_cache_interval;
  d.interval = alloc.front();
  d.charged_rate_bps = reduced_bit_rate(cand.total_frames, cand.cached_frames, s.request.bit_rate);
  if (d.charged_rate_bps > 0) {
    if (!admission_feasible(s.committed, cand, s.disk).feasible) return std::nullopt;
    d.reservation = cand;
  }
  return d;
}

inline bool interval_blocked_by_space(const ServerSnapshot& s) {
  return s.interval && s.interval->length_blocks > s.ic_free_blocks;
}

}  // namespace detail

// Worst-case cache performance: the candidate is charged its full rate.
inline AdmissionDecision decide_deterministic(const ServerSnapshot& s) { return detail::disk_admission(s, 0.0); }

// Admits when the projected load stays within alpha. The projection is the
// (1 - epsilon) quantile of measured per-stream load times the streams now
// committed, plus the candidate's full cost. Histories without stream counts
// use the quantile of T/R plus everything admitted since the last measured
// round. Falls back to the deterministic test with no history.
inline AdmissionDecision decide_statistical(const ServerSnapshot& s, const LoadHistory& history, double epsilon) {
  if (history.empty()) return decide_deterministic(s);
  const ActiveStream cand = s.candidate(0.0);
  double r = cand.frames_per_round / cand.playback_rate_fps;
  if (!s.committed.empty()) r = std::min(r, round_duration(s.committed));
  const double own = stream_round_cost(cand, s.disk) / r;
  const double projected =
      history.per_stream().empty()
          ? history.quantile(1.0 - epsilon) + s.pending_round_cost_s / r + own
          : history.per_stream_quantile(1.0 - epsilon) * static_cast<double>(s.committed.size()) + own;
  if (projected > s.disk.alpha * (1.0 + 1e-12)) return detail::reject(RejectReason::disk_bound);
  if (s.network_free_bps < s.request.bit_rate) return detail::reject(RejectReason::network_bound);
  AdmissionDecision d;
  d.kind = DecisionKind::admit_disk;
  d.charged_rate_bps = s.request.bit_rate;
  d.reservation = cand;
  return d;
}

inline AdmissionDecision decide_pic(const ServerSnapshot& s) {
  if (auto d = detail::interval_admission(s)) return *d;
  auto d = decide_deterministic(s);
  if (!d.admitted() && d.reason == RejectReason::disk_bound && detail::interval_blocked_by_space(s))
    d.reason = RejectReason::cache_full;
  return d;
}

inline AdmissionDecision decide_prefix_pic_multicast(const ServerSnapshot& s) {
  // 1. join an open batch for the same video
  if (s.open_batch && can_join(*s.open_batch, s.request)) {
    AdmissionDecision d;
    d.kind = DecisionKind::admit_batch;
    d.batch = BatchAction::join;
    d.join_batch = s.open_batch->batch_id;
    return d;
  }
  // 2. open a new batch on a cached prefix; its suffix follows a preceding
  // stream through the interval cache when one is close enough
  if (s.prefix_resident && !s.open_batch && s.network_free_bps >= s.request.bit_rate) {
    bool suffix_ok = true;
    std::optional<ActiveStream> suffix;
    std::optional<IntervalEntry> interval;
    if (s.length_blocks > s.prefix_blocks) {
      double credit = 0;
      if (s.interval) {
        IntervalEntry e = *s.interval;
        e.length_blocks += s.batch_wait_blocks;
        const auto alloc = allocate_intervals({e}, s.ic_free_blocks);
        if (!alloc.empty()) {
          interval = alloc.front();
          credit = s.interval_cached_frames;
        }
      }
      const ActiveStream cand = s.candidate(credit);
      if (!interval || reduced_bit_rate(cand.total_frames, cand.cached_frames, s.request.bit_rate) > 0) {
        suffix = cand;
        if (s.commit_suffix_at_open) suffix_ok = admission_feasible(s.committed, cand, s.disk).feasible;
      }
    }
    if (suffix_ok) {
      AdmissionDecision d;
      d.kind = DecisionKind::admit_batch;
      d.batch = BatchAction::open;
      d.reservation = suffix;
      d.interval = interval;
      return d;
    }
  }
  // 3. interval caching
  if (auto d = detail::interval_admission(s)) return *d;
  // 4. disk with whatever of the video is already cached
  auto d = detail::disk_admission(s, s.cached_frames);
  if (!d.admitted() && d.reason == RejectReason::disk_bound && detail::interval_blocked_by_space(s))
    d.reason = RejectReason::cache_full;
  return d;
}

inline AdmissionDecision decide(Policy p, const ServerSnapshot& s) {
  switch (p) {
    case Policy::deterministic: return decide_deterministic(s);
    case Policy::statistical: {
      if (s.history == nullptr) return decide_deterministic(s);
      return decide_statistical(s, *s.history, s.epsilon);
    }
    case Policy::pic: return decide_pic(s);
    case Policy::prefix_pic_multicast: return decide_prefix_pic_multicast(s);
  }
  return detail::reject(RejectReason::disk_bound);
}

}  // namespace vodsim
