#pragma once

// Batching of same-video requests and multicast channel bookkeeping.
//
// A batch collects requests for one video until the first member's deadline
// (or the batching window) runs out; closing it starts one multicast channel
// that costs a single stream's network bandwidth however many members it
// has. Each channel carries a session profile with one record per member.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vodsim/errors.hpp"
#include "vodsim/workload.hpp"

namespace vodsim {

using BatchId = long long;
using ChannelId = long long;

struct MulticastConfig {
  double max_batch_window_s = 30.0;
  int prefetch_lead_rounds = 5;
  // Count a batch's suffix disk demand against admission from the moment the
  // batch opens (no prefetch can then miss). When off, the demand is only
  // claimed when the prefetch is requested and may have to wait.
  bool commit_suffix_at_open = true;

  void validate() const {
    if (!(max_batch_window_s > 0.0)) throw ConfigError("multicast.max_batch_window_s must be positive");
    if (prefetch_lead_rounds < 0) throw ConfigError("multicast.prefetch_lead_rounds must be >= 0");
  }
};

class NetworkLedger {
 public:
  explicit NetworkLedger(double capacity_bps) : capacity_(capacity_bps) {}

  [[nodiscard]] double capacity() const { return capacity_; }
  [[nodiscard]] double used() const { return used_; }
  [[nodiscard]] double free() const { return capacity_ - used_; }
  [[nodiscard]] bool can_carry(double rate) const { return used_ + rate <= capacity_ * (1.0 + 1e-12); }

  bool try_charge(double rate) {
    if (!can_carry(rate)) return false;
    used_ += rate;
    return true;
  }

  void release(double rate) {
    used_ -= rate;
    if (used_ < 1e-6) used_ = std::max(0.0, used_);
  }

 private:
  double capacity_;
  double used_ = 0;
};

enum class BatchState { open, closed };

struct Batch {
  BatchId batch_id = 0;
  VideoId video_id = 0;
  std::vector<RequestId> members;
  std::vector<double> member_arrivals;
  std::vector<double> member_deadlines;
  double open_time = 0;
  double close_deadline = 0;  // first member's deadline
  double close_time = 0;      // when the batch-close event fires
  BatchState state = BatchState::open;
};

struct MulticastChannel {
  ChannelId channel_id = 0;
  VideoId video_id = 0;
  int member_count = 0;
  double stream_rate_bps = 0;
  double start_time = 0;
  int cursor = 0;
};

struct MemberRecord {
  RequestId client_id = 0;
  double start_time = 0;
  ChannelId multicast_channel = 0;
  double establishment_time = 0;
};

struct SessionProfile {
  VideoId movie = 0;
  ChannelId channel_id = 0;
  std::vector<MemberRecord> members;
  double expiration_time = 0;
};

struct SessionPacket {
  RequestId source_id = 0;
  double timestamp = 0;
  BatchId batch_id = 0;
};

struct CloseResult {
  std::optional<MulticastChannel> channel;
  std::vector<RequestId> rejected;  // non-empty when the network could not carry the channel
  std::string reason;               // "network-bound" on rejection
};

// A joiner must never wait past its own deadline.
inline bool can_join(const Batch& batch, const Request& request) {
  return batch.state == BatchState::open && batch.video_id == request.video_id && batch.close_time <= request.deadline;
}

class MulticastState {
 public:
  explicit MulticastState(MulticastConfig config = {}) : config_(config) { config_.validate(); }

  [[nodiscard]] const MulticastConfig& config() const { return config_; }

  // Opens a batch whose close event fires at
  // min(first deadline, now + max_batch_window).
  const Batch& open_batch(const Request& request, double now, bool prefix_resident) {
    if (!prefix_resident) throw StateError("open_batch: prefix of video " + std::to_string(request.video_id) + " not resident");
    if (open_by_video_.count(request.video_id))
      throw StateError("open_batch: video " + std::to_string(request.video_id) + " already has an open batch");
    Batch b;
    b.batch_id = next_batch_++;
    b.video_id = request.video_id;
    b.open_time = now;
    b.close_deadline = request.deadline;
    b.close_time = std::min(request.deadline, now + config_.max_batch_window_s);
    add_member(b, request);
    open_by_video_[b.video_id] = b.batch_id;
    return batches_.emplace(b.batch_id, std::move(b)).first->second;
  }

  // Joins the open batch for the same video when it closes no later than
  // the request's own deadline. Records the session packet exchange.
  std::optional<BatchId> try_join(const Request& request, double now) {
    auto it = open_by_video_.find(request.video_id);
    if (it == open_by_video_.end()) return std::nullopt;
    Batch& b = batches_.at(it->second);
    if (!can_join(b, request)) return std::nullopt;
    add_member(b, request);
    packets_.push_back({request.id, now, b.batch_id});
    return b.batch_id;
  }

  [[nodiscard]] const Batch* open_batch_for(VideoId v) const {
    auto it = open_by_video_.find(v);
    return it == open_by_video_.end() ? nullptr : &batches_.at(it->second);
  }

  [[nodiscard]] const Batch& batch(BatchId id) const { return batches_.at(id); }

  // Pulls the close event earlier (e.g. onto a round boundary).
  void advance_close(BatchId id, double t) {
    Batch& b = batches_.at(id);
    if (t > b.close_time || t < b.open_time) throw StateError("advance_close: time outside [open, close]");
    b.close_time = t;
  }

  // Starts the channel for a batch, charging one stream rate to the network.
  // `expiration_time` is start + full play time of the video.
  CloseResult close_batch(BatchId id, double now, NetworkLedger& network, double stream_rate_bps,
                          double expiration_time) {
    Batch& b = batches_.at(id);
    if (b.state != BatchState::open) throw StateError("close_batch: batch already closed");
    b.state = BatchState::closed;
    open_by_video_.erase(b.video_id);
    CloseResult res;
    if (!network.try_charge(stream_rate_bps)) {
      res.rejected = b.members;
      res.reason = "network-bound";
      return res;
    }
    MulticastChannel ch;
    ch.channel_id = next_channel_++;
    ch.video_id = b.video_id;
    ch.member_count = static_cast<int>(b.members.size());
    ch.stream_rate_bps = stream_rate_bps;
    ch.start_time = now;
    SessionProfile p;
    p.movie = b.video_id;
    p.channel_id = ch.channel_id;
    p.expiration_time = std::max(expiration_time, now);
    for (RequestId m : b.members) p.members.push_back({m, now, ch.channel_id, now});
    profiles_.emplace(ch.channel_id, std::move(p));
    channels_.emplace(ch.channel_id, ch);
    res.channel = ch;
    return res;
  }

  [[nodiscard]] MulticastChannel& channel(ChannelId id) { return channels_.at(id); }
  [[nodiscard]] const std::map<ChannelId, MulticastChannel>& channels() const { return channels_; }
  [[nodiscard]] const std::map<ChannelId, SessionProfile>& profiles() const { return profiles_; }
  [[nodiscard]] const std::vector<SessionPacket>& packets() const { return packets_; }
  [[nodiscard]] const std::vector<SessionProfile>& archived_profiles() const { return archive_; }

  // Drops a member that left; returns true when the channel is now empty.
  bool remove_member(ChannelId id, RequestId client) {
    auto& p = profiles_.at(id);
    auto it = std::find_if(p.members.begin(), p.members.end(), [&](const MemberRecord& r) { return r.client_id == client; });
    if (it == p.members.end()) throw StateError("remove_member: client not in channel");
    departed_[id].push_back(*it);
    p.members.erase(it);
    auto& ch = channels_.at(id);
    --ch.member_count;
    return ch.member_count == 0;
  }

  // Tears down channels whose expiration time has passed (inclusive).
  std::vector<ChannelId> expire_sessions(double now) {
    std::vector<ChannelId> out;
    for (const auto& [id, p] : profiles_)
      if (p.expiration_time <= now) out.push_back(id);
    for (ChannelId id : out) teardown(id);
    return out;
  }

  // Removes a channel and archives its full member history.
  void teardown(ChannelId id) {
    auto it = profiles_.find(id);
    if (it == profiles_.end()) return;
    SessionProfile done = it->second;
    auto d = departed_.find(id);
    if (d != departed_.end()) {
      done.members.insert(done.members.end(), d->second.begin(), d->second.end());
      departed_.erase(d);
    }
    std::sort(done.members.begin(), done.members.end(),
              [](const MemberRecord& a, const MemberRecord& b) { return a.client_id < b.client_id; });
    archive_.push_back(std::move(done));
    profiles_.erase(it);
    channels_.erase(id);
  }

 private:
  static void add_member(Batch& b, const Request& r) {
    b.members.push_back(r.id);
    b.member_arrivals.push_back(r.arrival_time);
    b.member_deadlines.push_back(r.deadline);
  }

  MulticastConfig config_;
  std::map<BatchId, Batch> batches_;
  std::map<VideoId, BatchId> open_by_video_;
  std::map<ChannelId, MulticastChannel> channels_;
  std::map<ChannelId, SessionProfile> profiles_;
  std::map<ChannelId, std::vector<MemberRecord>> departed_;
  std::vector<SessionProfile> archive_;
  std::vector<SessionPacket> packets_;
  BatchId next_batch_ = 1;
  ChannelId next_channel_ = 1;
};

}  // namespace vodsim
