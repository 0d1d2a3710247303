#pragma once

// Discrete-event simulation of the video server.
//
// Events are ordered by (time, kind rank, sequence number). Within one
// instant releases run first, then batch closes, prefetch reservations and
// arrivals, and the round tick last, so that anything started at a tick
// boundary is served in that tick. Each round tick delivers one block to
// every active stream and multicast channel; cache misses cost one disk
// positioning overhead plus one block transfer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vodsim/admission.hpp"
#include "vodsim/cache.hpp"
#include "vodsim/disk_model.hpp"
#include "vodsim/errors.hpp"
#include "vodsim/metrics.hpp"
#include "vodsim/multicast.hpp"
#include "vodsim/random.hpp"
#include "vodsim/workload.hpp"

namespace vodsim {

struct AdmissionConfig {
  std::size_t statistical_window = 200;
  double statistical_epsilon = 0.01;

  void validate() const {
    if (statistical_window == 0) throw ConfigError("admission.statistical_window must be positive");
    if (!(statistical_epsilon > 0.0 && statistical_epsilon < 1.0))
      throw ConfigError("admission.statistical_epsilon must be in (0,1)");
  }
};

struct SimConfig {
  double duration_s = 7200;
  double warmup_s = 600;
  std::uint64_t seed = 1;
  Policy policy = Policy::prefix_pic_multicast;
  double network_capacity_bps = 150e6;
  WorkloadConfig workload;
  DiskParams disk;
  CacheConfig cache;
  MulticastConfig multicast;
  AdmissionConfig admission;
  bool audit = false;  // full invariant audit after every event
  bool record_cache_events = false;

  void validate() const {
    if (duration_s < 0.0) throw ConfigError("sim.duration_s must be non-negative");
    if (warmup_s < 0.0) throw ConfigError("sim.warmup_s must be non-negative");
    if (duration_s > 0.0 && !(warmup_s < duration_s)) throw ConfigError("sim.warmup_s must be below sim.duration_s");
    if (!(network_capacity_bps > 0.0)) throw ConfigError("sim.network_capacity_bps must be positive");
    workload.validate();
    disk.validate();
    cache.validate();
    multicast.validate();
    admission.validate();
    if (workload.startup_tolerance_s < 1.0)
      throw ConfigError("workload.startup_tolerance_s must cover at least one round (1 s)");
  }

  // Disk parameters with the frame size filled in.
  [[nodiscard]] DiskParams resolved_disk() const {
    DiskParams d = disk;
    if (d.frame_size_bytes <= 0) d.frame_size_bytes = derived_frame_size_bytes(workload.client_bit_rate_bps, d.frames_per_block);
    return d;
  }
};

enum class EventKind { stream_complete, early_termination, session_expire, batch_close, suffix_prefetch, arrival, round_tick };

struct Event {
  double time = 0;
  long long seq = 0;
  EventKind kind = EventKind::round_tick;
  long long a = 0;  // flow / batch / channel id
  long long b = 0;  // request id where relevant
  Request request{};
};

struct EventAfter {
  bool operator()(const Event& x, const Event& y) const {
    if (x.time != y.time) return x.time > y.time;
    if (x.kind != y.kind) return static_cast<int>(x.kind) > static_cast<int>(y.kind);
    return x.seq > y.seq;
  }
};

class EventQueue {
 public:
  void push(Event e) {
    e.seq = next_seq_++;
    q_.push(std::move(e));
  }
  [[nodiscard]] bool empty() const { return q_.empty(); }
  [[nodiscard]] const Event& top() const { return q_.top(); }
  Event pop() {
    Event e = q_.top();
    q_.pop();
    return e;
  }
  [[nodiscard]] std::size_t size() const { return q_.size(); }

 private:
  std::priority_queue<Event, std::vector<Event>, EventAfter> q_;
  long long next_seq_ = 0;
};

// Whole-run bookkeeping used by the invariant checks.
struct RunAudit {
  long long admitted_total = 0;
  long long completed_total = 0;
  long long terminated_total = 0;
  long long active_at_end = 0;
  long long continuity_violations_total = 0;
  long long deadline_misses_total = 0;
  long long startup_deadline_violations_total = 0;
  long long events_processed = 0;
  long long interval_breaks = 0;
  double max_network_used_bps = 0;
  double max_reserved_round_s = 0;
  int max_cache_occupancy = 0;
  int max_prefix_occupancy = 0;
  bool clock_monotonic = true;
};

class Simulator {
 public:
  static constexpr double kRoundSeconds = 1.0;  // one block of playback

  explicit Simulator(SimConfig config)
      : config_((config.validate(), config)),
        disk_(config_.resolved_disk()),
        catalog_(build_catalog(config_.workload, config_.seed, config_.disk.frames_per_block)),
        cache_(cache_config_for(config_), catalog_),
        popularity_(catalog_.total_videos(), config_.cache.popularity_half_life_s),
        multicast_(config_.multicast),
        network_(config_.network_capacity_bps),
        history_(config_.admission.statistical_window),
        arrival_rng_(config_.seed),
        termination_rng_(config_.seed ^ 0xd1b54a32d192ed03ULL) {
    cache_.enable_event_log(config_.record_cache_events);
    block_bytes_ = disk_.frame_size_bytes * disk_.frames_per_block;
    ActiveStream one_block;
    one_block.frames_per_round = disk_.frames_per_block;
    one_block.playback_rate_fps = disk_.frames_per_block;
    one_block.total_frames = disk_.frames_per_block;
    read_cost_s_ = stream_round_cost(one_block, disk_);
  }

  // The prefix partition and its priority eviction belong to the proposed
  // policy; the baselines run the cache without them. All policies keep
  // the same interval-caching budget.
  static CacheConfig cache_config_for(const SimConfig& c) {
    CacheConfig cc = c.cache;
    if (c.policy != Policy::prefix_pic_multicast) cc.prefix_priority = false;
    return cc;
  }

  MetricsReport run() {
    if (ran_) throw StateError("Simulator::run called twice");
    ran_ = true;
    MetricsReport m;
    m.policy = std::string(to_string(config_.policy));
    m.seed = config_.seed;
    if (config_.duration_s <= 0.0) return m;

    schedule_arrival(0.0);
    push({0.0, 0, EventKind::round_tick});
    while (!queue_.empty()) {
      const Event e = queue_.pop();
      if (e.time >= config_.duration_s) break;
      if (e.time < clock_) audit_.clock_monotonic = false;
      clock_ = e.time;
      dispatch(e);
      ++audit_.events_processed;
      check_ledgers();
      if (config_.audit) full_audit();
    }
    clock_ = config_.duration_s;
    return finish(m);
  }

  [[nodiscard]] const SimConfig& config() const { return config_; }
  [[nodiscard]] const Catalog& catalog() const { return catalog_; }
  [[nodiscard]] const BlockCache& cache() const { return cache_; }
  [[nodiscard]] const MulticastState& multicast() const { return multicast_; }
  [[nodiscard]] const RunAudit& audit() const { return audit_; }
  [[nodiscard]] const LoadHistory& history() const { return history_; }

  // Every session profile seen during the run, closed ones first.
  [[nodiscard]] std::vector<SessionProfile> session_profiles() const {
    std::vector<SessionProfile> out = multicast_.archived_profiles();
    for (const auto& [id, p] : multicast_.profiles()) out.push_back(p);
    return out;
  }

 private:
  enum class FlowKind { unicast, channel };
  enum class Prefetch { none, waiting, pending, reserved };

  struct Flow {
    long long id = 0;
    FlowKind kind = FlowKind::unicast;
    VideoId video = 0;
    int length = 0;
    int prefix_end = 0;
    int cursor = 0;
    bool reading_done = false;
    bool waiting = false;  // channel whose batch has not closed yet
    BatchId batch = 0;
    RequestId request = -1;  // unicast only
    ChannelId channel = 0;   // channel only
    std::set<RequestId> members;
    std::vector<long long> followers;
    std::optional<long long> leader;
    std::deque<int> interval_pins;
    int interval_reserved = 0;
    std::deque<int> prefix_pins;
    Prefetch prefetch = Prefetch::none;
    double rate_bps = 0;
  };

  struct Client {
    double arrival = 0;
    double start = 0;
    bool cache_user = false;
    long long flow = 0;
  };

  // Time average of a piecewise-constant quantity over the metrics window.
  class TimeAverage {
   public:
    TimeAverage(double from, double to) : from_(from), to_(to) {}
    void add(double now, double delta) {
      advance(now);
      value_ += delta;
    }
    void advance(double now) {
      const double a = std::clamp(last_, from_, to_);
      const double b = std::clamp(now, from_, to_);
      area_ += value_ * (b - a);
      last_ = now;
    }
    [[nodiscard]] double mean() const { return to_ > from_ ? area_ / (to_ - from_) : 0.0; }

   private:
    double from_, to_;
    double last_ = 0, value_ = 0, area_ = 0;
  };

  [[nodiscard]] bool in_window(double t) const { return t >= config_.warmup_s && t < config_.duration_s; }

  static double next_tick(double t) { return std::ceil(t / kRoundSeconds - 1e-12) * kRoundSeconds; }

  // Batches close on a round boundary so the channel starts with that round.
  [[nodiscard]] double batch_close_time(const Request& r, double now) const {
    const double close = std::min(r.deadline, now + config_.multicast.max_batch_window_s);
    const double aligned = std::floor(close / kRoundSeconds + 1e-12) * kRoundSeconds;
    return aligned >= now ? aligned : close;
  }

  void push(Event e) { queue_.push(std::move(e)); }

  void schedule_arrival(double after) {
    Request r = next_arrival(arrival_rng_, catalog_, config_.workload, after, next_request_id_++);
    if (r.arrival_time >= config_.duration_s) return;
    Event e{r.arrival_time, 0, EventKind::arrival};
    e.request = r;
    push(std::move(e));
  }

  void dispatch(const Event& e) {
    switch (e.kind) {
      case EventKind::arrival: on_arrival(e.request); break;
      case EventKind::round_tick: on_round_tick(e.time); break;
      case EventKind::batch_close: on_batch_close(e.a); break;
      case EventKind::suffix_prefetch: on_suffix_prefetch(e.a); break;
      case EventKind::stream_complete: on_stream_complete(e.a); break;
      case EventKind::early_termination: on_early_termination(e.a, e.b); break;
      case EventKind::session_expire: on_session_expire(); break;
    }
  }

  // ---- disk ledger ----

  [[nodiscard]] std::vector<ActiveStream> committed_streams() const {
    std::vector<ActiveStream> v;
    v.reserve(reserved_.size() + committed_pending_.size());
    for (const auto& [id, s] : reserved_) v.push_back(s);
    for (const auto& [id, s] : committed_pending_) v.push_back(s);
    return v;
  }

  void reserve(long long flow_id, const ActiveStream& s) {
    reserved_[flow_id] = s;
    recompute_reserved_cost();
  }

  void release_reservation(long long flow_id) {
    bool changed = reserved_.erase(flow_id) > 0;
    changed = committed_pending_.erase(flow_id) > 0 || changed;
    prefetch_queue_.erase(std::remove(prefetch_queue_.begin(), prefetch_queue_.end(), flow_id), prefetch_queue_.end());
    if (changed) recompute_reserved_cost();
  }

  void recompute_reserved_cost() {
    double t = 0;
    for (const auto& [id, s] : reserved_) t += stream_round_cost(s, disk_);
    for (const auto& [id, s] : committed_pending_) t += stream_round_cost(s, disk_);
    reserved_cost_ = t;
    audit_.max_reserved_round_s = std::max(audit_.max_reserved_round_s, reserved_cost_);
  }

  [[nodiscard]] ActiveStream full_stream(long long id, const Flow& f) const {
    ActiveStream s;
    s.stream_id = id;
    s.video_id = f.video;
    s.frames_per_round = disk_.frames_per_block;
    s.playback_rate_fps = catalog_.video(f.video).playback_rate_fps;
    s.total_frames = static_cast<double>(f.length) * disk_.frames_per_block;
    return s;
  }

  // ---- clients ----

  void client_start(RequestId id, double arrival, double start, bool cache_user, long long flow) {
    clients_[id] = Client{arrival, start, cache_user, flow};
    ++audit_.admitted_total;
    users_.add(start, 1);
    if (cache_user) {
      cache_users_.add(start, 1);
      if (in_window(start)) ++cache_entries_;
    }
    const double first = next_tick(start);
    if (in_window(arrival)) {
      startup_delay_sum_ += first - arrival;
      ++startup_count_;
    }
    if (first > arrival + config_.workload.startup_tolerance_s + 1e-9) {
      ++audit_.startup_deadline_violations_total;
      if (in_window(arrival)) ++startup_violations_w_;
    }
  }

  void client_end(RequestId id, bool completed) {
    auto it = clients_.find(id);
    if (it == clients_.end()) return;
    const Client c = it->second;
    clients_.erase(it);
    users_.add(clock_, -1);
    if (c.cache_user) {
      cache_users_.add(clock_, -1);
      if (in_window(c.start)) {
        cache_sojourn_sum_ += clock_ - c.start;
        ++cache_sojourn_count_;
      }
    }
    if (completed) {
      ++audit_.completed_total;
      if (in_window(clock_)) ++streamed_w_;
    } else {
      ++audit_.terminated_total;
      if (in_window(clock_)) ++terminated_w_;
    }
  }

  void maybe_schedule_termination(RequestId id, long long flow_id, VideoId v, double start) {
    const auto watch = draw_watch_blocks(termination_rng_, catalog_.video(v), config_.workload);
    if (!watch) return;
    Event e{next_tick(start) + *watch * kRoundSeconds, 0, EventKind::early_termination, flow_id, id};
    push(std::move(e));
  }

  // ---- arrivals ----

  void count_reject(const Request& r, RejectReason reason) {
    if (!in_window(r.arrival_time)) return;
    ++rejected_w_;
    switch (reason) {
      case RejectReason::disk_bound: ++rejected_disk_w_; break;
      case RejectReason::network_bound: ++rejected_network_w_; break;
      case RejectReason::cache_full: ++rejected_cache_w_; break;
      case RejectReason::none: throw StateError("rejection without a reason");
    }
  }

  void on_arrival(const Request& r) {
    const double now = r.arrival_time;
    popularity_.record(r.video_id, now);
    if (in_window(now)) ++requests_w_;

    const Video& video = catalog_.video(r.video_id);
    const auto committed = committed_streams();
    ServerSnapshot s;
    s.request = r;
    s.length_blocks = video.length_blocks;
    s.prefix_blocks = video.prefix().size();
    s.frames_per_block = disk_.frames_per_block;
    s.playback_rate_fps = video.playback_rate_fps;
    s.disk = disk_;
    s.committed = committed;
    s.network_free_bps = network_.free();
    s.history = &history_;
    s.epsilon = config_.admission.statistical_epsilon;
    s.pending_round_cost_s = pending_round_cost_;
    s.commit_suffix_at_open = config_.multicast.commit_suffix_at_open;
    const bool cache_aware = config_.policy == Policy::pic || config_.policy == Policy::prefix_pic_multicast;
    if (config_.policy == Policy::prefix_pic_multicast) {
      s.cached_frames = cache_.cached_frames(r.video_id, 0, disk_.frames_per_block);
      s.prefix_resident = cache_.prefix_fully_resident(r.video_id);
      s.open_batch = multicast_.open_batch_for(r.video_id);
      s.batch_wait_blocks = static_cast<int>(next_tick(batch_close_time(r, now)) - next_tick(now));
    }
    if (cache_aware) {
      std::vector<StreamCursor> cursors;
      for (const auto& [id, f] : flows_)
        if (f.video == r.video_id && !f.reading_done && !f.waiting) cursors.push_back({id, f.video, f.cursor});
      s.interval = find_interval(r, cursors, next_flow_id_);
      s.ic_free_blocks = config_.cache.interval_capacity() - ic_used_;
      if (s.interval) {
        const int g = s.interval->length_blocks;
        const int missing = g - cache_.resident_in_range(r.video_id, 0, g);
        s.interval_cached_frames = static_cast<double>(video.length_blocks - missing) * disk_.frames_per_block;
      }
    }

    const AdmissionDecision d = decide(config_.policy, s);
    apply(d, r, video);
    schedule_arrival(now);
  }

  Flow& new_unicast(const Request& r, const Video& video) {
    const long long id = next_flow_id_++;
    Flow f;
    f.id = id;
    f.kind = FlowKind::unicast;
    f.video = r.video_id;
    f.length = video.length_blocks;
    f.prefix_end = video.prefix().end;
    f.request = r.id;
    f.rate_bps = r.bit_rate;
    return flows_.emplace(id, std::move(f)).first->second;
  }

  void apply(const AdmissionDecision& d, const Request& r, const Video& video) {
    const double now = r.arrival_time;
    switch (d.kind) {
      case DecisionKind::reject: count_reject(r, d.reason); return;
      case DecisionKind::admit_disk: {
        Flow& f = new_unicast(r, video);
        if (d.reservation) {
          ActiveStream s = *d.reservation;
          s.stream_id = f.id;
          reserve(f.id, s);
          pending_round_cost_ += stream_round_cost(s, disk_);
        }
        if (!network_.try_charge(r.bit_rate)) throw StateError("admitted stream exceeds network capacity");
        client_start(r.id, r.arrival_time, now, false, f.id);
        maybe_schedule_termination(r.id, f.id, f.video, now);
        return;
      }
      case DecisionKind::admit_cache_interval: {
        Flow& f = new_unicast(r, video);
        attach_follower(f, *d.interval, now);
        if (d.reservation) {
          ActiveStream s = *d.reservation;
          s.stream_id = f.id;
          reserve(f.id, s);
        }
        if (!network_.try_charge(r.bit_rate)) throw StateError("admitted stream exceeds network capacity");
        client_start(r.id, r.arrival_time, now, true, f.id);
        maybe_schedule_termination(r.id, f.id, f.video, now);
        return;
      }
      case DecisionKind::admit_batch: {
        if (d.batch == BatchAction::join) {
          if (!multicast_.try_join(r, now)) throw StateError("join decision for a batch that does not accept it");
          return;
        }
        const Batch& b = multicast_.open_batch(r, now, cache_.prefix_fully_resident(r.video_id));
        const double close = batch_close_time(r, now);
        multicast_.advance_close(b.batch_id, close);
        const long long fid = next_flow_id_++;
        Flow f;
        f.id = fid;
        f.kind = FlowKind::channel;
        f.video = r.video_id;
        f.length = video.length_blocks;
        f.prefix_end = video.prefix().end;
        f.waiting = true;
        f.batch = b.batch_id;
        const auto& p = video.prefix();
        for (int blk = p.begin; blk < p.end; ++blk)
          if (cache_.pin(r.video_id, blk)) f.prefix_pins.push_back(blk);
        Flow& placed = flows_.emplace(fid, std::move(f)).first->second;
        if (d.interval) attach_follower(placed, *d.interval, now);
        if (d.reservation) {
          placed.prefetch = Prefetch::waiting;
          if (config_.multicast.commit_suffix_at_open) {
            ActiveStream s = *d.reservation;
            s.stream_id = fid;
            committed_pending_[fid] = s;
            recompute_reserved_cost();
          }
        }
        batch_flow_[b.batch_id] = fid;
        push({close, 0, EventKind::batch_close, b.batch_id});
        return;
      }
    }
  }

  void attach_follower(Flow& f, const IntervalEntry& iv, double now) {
    Flow& leader = flows_.at(iv.preceding_stream_id);
    leader.followers.push_back(f.id);
    f.leader = leader.id;
    for (int b = 0; b < leader.cursor; ++b)
      if (cache_.pin(f.video, b)) f.interval_pins.push_back(b);
    f.interval_reserved = iv.length_blocks;
    ic_used_ += iv.length_blocks;
    if (in_window(now)) ++intervals_w_;
  }

  // ---- multicast ----

  void on_batch_close(BatchId id) {
    const Batch batch = multicast_.batch(id);
    const Video& video = catalog_.video(batch.video_id);
    const double rate = config_.workload.client_bit_rate_bps;
    const double expiration =
        clock_ + play_time(static_cast<double>(video.length_blocks) * disk_.frames_per_block, rate, disk_.frame_size_bytes);
    const CloseResult res = multicast_.close_batch(id, clock_, network_, rate, expiration);
    const long long fid = batch_flow_.at(id);
    batch_flow_.erase(id);
    if (!res.channel) {
      teardown(fid, false);
      for (std::size_t i = 0; i < batch.members.size(); ++i) {
        Request r;
        r.id = batch.members[i];
        r.arrival_time = batch.member_arrivals[i];
        count_reject(r, RejectReason::network_bound);
      }
      return;
    }
    Flow& f = flows_.at(fid);
    f.waiting = false;
    f.channel = res.channel->channel_id;
    f.rate_bps = rate;
    f.members.insert(batch.members.begin(), batch.members.end());
    channel_flow_[res.channel->channel_id] = fid;
    for (std::size_t i = 0; i < batch.members.size(); ++i) {
      client_start(batch.members[i], batch.member_arrivals[i], clock_, true, fid);
      maybe_schedule_termination(batch.members[i], fid, batch.video_id, clock_);
    }
    if (in_window(clock_)) {
      ++channels_w_;
      batch_members_w_ += static_cast<long long>(batch.members.size());
    }
    if (f.prefetch == Prefetch::waiting) {
      const int lead = config_.multicast.prefetch_lead_rounds;
      const double at = clock_ + std::max(0, video.prefix().size() - lead) * kRoundSeconds;
      push({at, 0, EventKind::suffix_prefetch, fid});
    }
    push({expiration, 0, EventKind::session_expire, res.channel->channel_id});
  }

  void on_suffix_prefetch(long long fid) {
    auto it = flows_.find(fid);
    if (it == flows_.end()) return;
    Flow& f = it->second;
    if (f.prefetch != Prefetch::waiting) return;
    if (auto c = committed_pending_.find(fid); c != committed_pending_.end()) {
      reserved_[fid] = c->second;
      committed_pending_.erase(c);
      recompute_reserved_cost();
      f.prefetch = Prefetch::reserved;
      return;
    }
    f.prefetch = Prefetch::pending;
    prefetch_queue_.push_back(fid);
    retry_prefetches();
  }

  // Pending prefetches get released disk capacity before new arrivals.
  void retry_prefetches() {
    for (auto it = prefetch_queue_.begin(); it != prefetch_queue_.end();) {
      auto fit = flows_.find(*it);
      if (fit == flows_.end()) {
        it = prefetch_queue_.erase(it);
        continue;
      }
      const ActiveStream s = full_stream(*it, fit->second);
      const auto committed = committed_streams();
      if (admission_feasible(committed, s, disk_).feasible) {
        reserve(*it, s);
        fit->second.prefetch = Prefetch::reserved;
        it = prefetch_queue_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void on_session_expire() {
    for (ChannelId ch : multicast_.expire_sessions(clock_)) {
      auto it = channel_flow_.find(ch);
      if (it == channel_flow_.end()) continue;
      const long long fid = it->second;
      auto members = flows_.at(fid).members;
      for (RequestId m : members) client_end(m, true);
      teardown(fid, true);
    }
  }

  // ---- rounds ----

  void on_round_tick(double now) {
    retry_prefetches();
    int reads = 0;
    long long hits = 0;
    std::vector<ActiveStream> playing;
    playing.reserve(flows_.size());
    for (auto& [id, f] : flows_) {
      if (f.waiting) continue;
      playing.push_back(full_stream(id, f));
      if (f.reading_done) continue;
      deliver(f, now, reads, hits);
    }
    if (!playing.empty()) {
      const double round = round_duration(playing);
      const double service = reads * read_cost_s_;
      history_.record(service, round, playing.size());
      if (service > round * (1.0 + 1e-12)) {
        ++audit_.continuity_violations_total;
        if (in_window(now)) ++continuity_w_;
      }
      if (in_window(now)) {
        disk_busy_w_ += std::min(service, round);
        cache_busy_w_ += std::min(static_cast<double>(hits) * block_bytes_ / config_.cache.cache_bandwidth_Bps, round);
      }
    }
    pending_round_cost_ = 0;
    if (now >= next_refresh_) {
      cache_.update_prefix_set(popularity_, now);
      next_refresh_ = now + config_.cache.popularity_refresh_s;
    }
    audit_.max_cache_occupancy = std::max(audit_.max_cache_occupancy, cache_.size());
    audit_.max_prefix_occupancy = std::max(audit_.max_prefix_occupancy, cache_.prefix_resident());
    if (now + kRoundSeconds < config_.duration_s) push({now + kRoundSeconds, 0, EventKind::round_tick});
  }

  void deliver(Flow& f, double now, int& reads, long long& hits) {
    const int b = f.cursor;
    const bool hit = cache_.lookup(f.video, b, now);
    if (in_window(now)) {
      // every client receiving the block counts as one lookup
      const long long clients = f.kind == FlowKind::channel ? static_cast<long long>(f.members.size()) : 1;
      lookups_w_ += clients;
      if (hit) hits_w_ += clients;
    }
    bool delivered = true;
    if (hit) {
      ++hits;
    } else if (f.kind == FlowKind::channel && b >= f.prefix_end && f.prefetch != Prefetch::reserved) {
      delivered = false;
      ++audit_.deadline_misses_total;
      if (in_window(now)) ++deadline_misses_w_;
    } else {
      ++reads;
      cache_.insert(f.video, b, now, !f.followers.empty());
    }
    if (delivered && !f.followers.empty() && cache_.contains(f.video, b)) {
      for (long long fid : f.followers) {
        cache_.pin(f.video, b);
        flows_.at(fid).interval_pins.push_back(b);
      }
    }
    while (!f.interval_pins.empty() && f.interval_pins.front() <= b) {
      cache_.unpin(f.video, f.interval_pins.front());
      f.interval_pins.pop_front();
      if (!f.leader && f.interval_reserved > 0) {
        --f.interval_reserved;
        --ic_used_;
      }
    }
    while (!f.prefix_pins.empty() && f.prefix_pins.front() <= b) {
      cache_.unpin(f.video, f.prefix_pins.front());
      f.prefix_pins.pop_front();
    }
    ++f.cursor;
    if (f.kind == FlowKind::channel) multicast_.channel(f.channel).cursor = f.cursor;
    if (f.cursor >= f.length) {
      f.reading_done = true;
      push({now + kRoundSeconds, 0, EventKind::stream_complete, f.id});
    }
  }

  // ---- departures ----

  void on_stream_complete(long long fid) {
    auto it = flows_.find(fid);
    if (it == flows_.end()) return;
    if (it->second.kind == FlowKind::unicast) {
      client_end(it->second.request, true);
    } else {
      const auto members = it->second.members;
      for (RequestId m : members) client_end(m, true);
    }
    teardown(fid, true);
  }

  void on_early_termination(long long fid, RequestId rid) {
    auto it = flows_.find(fid);
    if (it == flows_.end()) return;
    Flow& f = it->second;
    if (f.kind == FlowKind::unicast) {
      client_end(rid, false);
      teardown(fid, false);
      return;
    }
    if (!f.members.erase(rid)) return;
    client_end(rid, false);
    if (multicast_.remove_member(f.channel, rid)) teardown(fid, false);
  }

  void teardown(long long fid, bool finished_reading) {
    Flow f = std::move(flows_.at(fid));
    flows_.erase(fid);
    release_reservation(fid);
    network_.release(f.rate_bps);
    for (long long follower_id : f.followers) {
      auto fit = flows_.find(follower_id);
      if (fit == flows_.end()) continue;
      Flow& fo = fit->second;
      fo.leader.reset();
      const int shrink = fo.interval_reserved - static_cast<int>(fo.interval_pins.size());
      if (shrink > 0) {
        fo.interval_reserved -= shrink;
        ic_used_ -= shrink;
      }
      if (!f.reading_done && !finished_reading) {
        // The leader left early; blocks past its cursor will not be cached.
        ++audit_.interval_breaks;
        ActiveStream s = full_stream(follower_id, fo);
        s.cached_frames = cache_.cached_frames(fo.video, fo.cursor, disk_.frames_per_block);
        s.total_frames = std::max(s.total_frames, s.cached_frames);
        reserved_.erase(follower_id);
        committed_pending_.erase(follower_id);
        prefetch_queue_.erase(std::remove(prefetch_queue_.begin(), prefetch_queue_.end(), follower_id),
                              prefetch_queue_.end());
        const auto committed = committed_streams();
        if (admission_feasible(committed, s, disk_).feasible) {
          reserved_[follower_id] = s;
          if (fo.kind == FlowKind::channel) fo.prefetch = Prefetch::reserved;
        } else if (fo.kind == FlowKind::channel) {
          fo.prefetch = Prefetch::pending;
          prefetch_queue_.push_back(follower_id);
        }
        recompute_reserved_cost();
      }
    }
    if (f.leader) {
      auto lit = flows_.find(*f.leader);
      if (lit != flows_.end()) {
        auto& fl = lit->second.followers;
        fl.erase(std::remove(fl.begin(), fl.end(), fid), fl.end());
      }
    }
    for (int b : f.interval_pins) cache_.unpin(f.video, b);
    ic_used_ -= f.interval_reserved;
    for (int b : f.prefix_pins) cache_.unpin(f.video, b);
    if (f.kind == FlowKind::channel) {
      multicast_.teardown(f.channel);
      channel_flow_.erase(f.channel);
    }
    retry_prefetches();
  }

  // ---- audits ----

  void check_ledgers() {
    audit_.max_network_used_bps = std::max(audit_.max_network_used_bps, network_.used());
    if (network_.used() > network_.capacity() * (1.0 + 1e-9)) throw StateError("network ledger above capacity");
    if (cache_.size() > config_.cache.capacity_blocks) throw StateError("cache above capacity");
    if (config_.policy != Policy::statistical && reserved_cost_ > disk_.alpha * kRoundSeconds * (1.0 + 1e-9))
      throw StateError("disk reservations above alpha * R");
  }

  void full_audit() const {
    cache_.audit();
    if (ic_used_ < 0 || ic_used_ > config_.cache.interval_capacity()) throw StateError("interval partition out of bounds");
    int sum = 0;
    for (const auto& [id, f] : flows_) {
      sum += f.interval_reserved;
      if (f.kind == FlowKind::channel && !f.waiting) {
        const auto& ch = multicast_.channels().at(f.channel);
        if (ch.member_count < 1) throw StateError("live channel without members");
        if (ch.member_count != static_cast<int>(f.members.size())) throw StateError("channel membership out of sync");
        const auto& prof = multicast_.profiles().at(f.channel);
        if (prof.members.size() != f.members.size()) throw StateError("session profile out of sync");
        if (ch.stream_rate_bps != config_.workload.client_bit_rate_bps) throw StateError("channel rate depends on members");
      }
    }
    if (sum != ic_used_) throw StateError("interval reservations out of sync");
    if (multicast_.profiles().size() != multicast_.channels().size()) throw StateError("profiles and channels not bijective");
  }

  MetricsReport finish(MetricsReport m) {
    users_.advance(config_.duration_s);
    cache_users_.advance(config_.duration_s);
    long long open_members = 0;
    for (const auto& [vid, bid] : open_batches_view()) open_members += static_cast<long long>(multicast_.batch(bid).members.size());
    audit_.active_at_end = static_cast<long long>(clients_.size());
    audit_.admitted_total += open_members;
    audit_.active_at_end += open_members;

    const double w = config_.duration_s - config_.warmup_s;
    m.window_s = w;
    m.requests = requests_w_;
    m.rejected = rejected_w_;
    m.rejected_disk_bound = rejected_disk_w_;
    m.rejected_network_bound = rejected_network_w_;
    m.rejected_cache_full = rejected_cache_w_;
    m.admitted = requests_w_ - rejected_w_;
    m.videos_streamed = streamed_w_;
    m.terminated = terminated_w_;
    m.disk_busy_s = disk_busy_w_;
    m.disk_utilization_pct = w > 0 ? std::clamp(100.0 * disk_busy_w_ / w, 0.0, 100.0) : 0.0;
    m.cache_utilization_pct = w > 0 ? std::clamp(100.0 * cache_busy_w_ / w, 0.0, 100.0) : 0.0;
    m.cache_hits = hits_w_;
    m.cache_lookups = lookups_w_;
    m.hit_ratio_pct = lookups_w_ > 0 ? 100.0 * static_cast<double>(hits_w_) / static_cast<double>(lookups_w_) : 0.0;
    m.continuity_violations = continuity_w_;
    m.deadline_misses = deadline_misses_w_;
    m.startup_deadline_violations = startup_violations_w_;
    m.mean_startup_delay_s = startup_count_ > 0 ? startup_delay_sum_ / static_cast<double>(startup_count_) : 0.0;
    m.concurrent_users_mean = users_.mean();
    m.cache_users_mean = cache_users_.mean();
    m.cache_arrival_rate = w > 0 ? static_cast<double>(cache_entries_) / w : 0.0;
    m.cache_mean_service_s =
        cache_sojourn_count_ > 0 ? cache_sojourn_sum_ / static_cast<double>(cache_sojourn_count_) : 0.0;
    m.littles_law_predicted_Nc = littles_law_estimate(m.cache_arrival_rate, m.cache_mean_service_s);
    m.channels_started = channels_w_;
    m.mean_batch_size = channels_w_ > 0 ? static_cast<double>(batch_members_w_) / static_cast<double>(channels_w_) : 0.0;
    m.intervals_allocated = intervals_w_;
    return m;
  }

  [[nodiscard]] std::vector<std::pair<VideoId, BatchId>> open_batches_view() const {
    std::vector<std::pair<VideoId, BatchId>> out;
    for (const auto& v : catalog_.videos())
      if (const Batch* b = multicast_.open_batch_for(v.id)) out.emplace_back(v.id, b->batch_id);
    return out;
  }

  SimConfig config_;
  DiskParams disk_;
  Catalog catalog_;
  BlockCache cache_;
  PopularityTable popularity_;
  MulticastState multicast_;
  NetworkLedger network_;
  LoadHistory history_;
  Rng arrival_rng_;
  Rng termination_rng_;
  EventQueue queue_;
  RunAudit audit_;

  double clock_ = 0;
  bool ran_ = false;
  double block_bytes_ = 0;
  double read_cost_s_ = 0;
  double next_refresh_ = 0;
  double pending_round_cost_ = 0;
  double reserved_cost_ = 0;
  int ic_used_ = 0;
  RequestId next_request_id_ = 1;
  long long next_flow_id_ = 1;

  std::map<long long, Flow> flows_;
  std::map<long long, ActiveStream> reserved_;
  std::map<long long, ActiveStream> committed_pending_;
  std::vector<long long> prefetch_queue_;
  std::map<BatchId, long long> batch_flow_;
  std::map<ChannelId, long long> channel_flow_;
  std::map<RequestId, Client> clients_;

  TimeAverage users_{config_.warmup_s, config_.duration_s};
  TimeAverage cache_users_{config_.warmup_s, config_.duration_s};
  long long cache_entries_ = 0;
  double cache_sojourn_sum_ = 0;
  long long cache_sojourn_count_ = 0;

  long long requests_w_ = 0, rejected_w_ = 0, rejected_disk_w_ = 0, rejected_network_w_ = 0, rejected_cache_w_ = 0;
  long long streamed_w_ = 0, terminated_w_ = 0;
  long long hits_w_ = 0, lookups_w_ = 0;
  long long continuity_w_ = 0, deadline_misses_w_ = 0, startup_violations_w_ = 0;
  long long channels_w_ = 0, batch_members_w_ = 0, intervals_w_ = 0;
  double disk_busy_w_ = 0, cache_busy_w_ = 0;
  double startup_delay_sum_ = 0;
  long long startup_count_ = 0;
};

// Convenience wrapper: build, run, report.
inline MetricsReport run(const SimConfig& config) { return Simulator(config).run(); }

}  // namespace vodsim
