#pragma once

// Round-based disk service model.
//
// Every round the server fetches f_i frames for each disk-served stream i.
// The round lasts R = min_i f_i / P_i seconds (P_i = playback rate in fps)
// and the disk must finish all fetches of a round within it. A stream costs
// one positioning overhead (seek + rotation) per round plus the transfer of
// its frames; the cached fraction C_i / F_i of a stream is not fetched.

#include <algorithm>
#include <limits>
#include <span>
#include <string>

#include "vodsim/errors.hpp"

namespace vodsim {

struct DiskParams {
  double bandwidth_Bps = 10'000'000.0;
  double t_seek_s = 0.003;
  double t_rot_s = 0.003;
  double alpha = 0.8;           // share of the round the disk may spend on admitted streams
  int frames_per_block = 25;
  double frame_size_bytes = 0;  // 0: derived from the client bit rate (block bytes / frames_per_block)
  bool literal_overhead_form = false;  // charge F_i * (seek + rot) instead of one overhead per round

  [[nodiscard]] double overhead_s() const { return t_seek_s + t_rot_s; }

  void validate() const {
    if (!(bandwidth_Bps > 0.0)) throw ConfigError("disk.bandwidth_Bps must be positive");
    if (t_seek_s < 0.0 || t_rot_s < 0.0) throw ConfigError("disk.t_seek_s/t_rot_s must be non-negative");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("disk.alpha must be in (0,1]");
    if (frames_per_block <= 0) throw ConfigError("disk.frames_per_block must be positive");
    if (frame_size_bytes < 0.0) throw ConfigError("disk.frame_size_bytes must be non-negative");
  }
};

// Frame size implied by "one block = one second at the client bit rate".
inline double derived_frame_size_bytes(double client_bit_rate_bps, int frames_per_block) {
  return client_bit_rate_bps / 8.0 / static_cast<double>(frames_per_block);
}

enum class StreamSource { disk, cache, multicast_member };

struct ActiveStream {
  long long stream_id = 0;
  int video_id = 0;
  double frames_per_round = 0;    // f_i
  double playback_rate_fps = 0;   // P_R^i
  double cached_frames = 0;       // C_i
  double total_frames = 0;        // F_i
  StreamSource source = StreamSource::disk;

  // Share of the stream that still has to come off the disk, (F_i - C_i) / F_i.
  [[nodiscard]] double uncached_fraction() const {
    if (total_frames <= 0) return 1.0;
    return std::clamp((total_frames - cached_frames) / total_frames, 0.0, 1.0);
  }
};

inline double round_duration(std::span<const ActiveStream> streams) {
  if (streams.empty()) throw StateError("round_duration: no active streams");
  double r = std::numeric_limits<double>::infinity();
  for (const auto& s : streams) {
    if (!(s.playback_rate_fps > 0.0))
      throw DomainError("round_duration: stream " + std::to_string(s.stream_id) + " has non-positive playback rate");
    r = std::min(r, s.frames_per_round / s.playback_rate_fps);
  }
  return r;
}

// Disk time charged to one stream per round. Cache- and multicast-served
// streams cost nothing; a partially cached stream pays the overhead and
// transfers only its uncached share.
inline double stream_round_cost(const ActiveStream& s, const DiskParams& disk) {
  if (s.source != StreamSource::disk) return 0.0;
  const double share = s.uncached_fraction();
  if (share <= 0.0 || s.frames_per_round <= 0.0) return 0.0;
  return disk.overhead_s() + s.frames_per_round * share * disk.frame_size_bytes / disk.bandwidth_Bps;
}

inline double round_service_time(std::span<const ActiveStream> streams, const DiskParams& disk) {
  double t = 0.0;
  for (const auto& s : streams) t += stream_round_cost(s, disk);
  return t;
}

// Left-hand side of the residual bandwidth inequality.
inline double positioning_overhead(std::span<const ActiveStream> streams, const DiskParams& disk) {
  double t = 0.0;
  for (const auto& s : streams) {
    if (s.source != StreamSource::disk) continue;
    if (disk.literal_overhead_form) {
      t += s.total_frames * disk.overhead_s();
    } else if (s.uncached_fraction() > 0.0 && s.frames_per_round > 0.0) {
      t += disk.overhead_s();
    }
  }
  return t;
}

struct Feasibility {
  bool feasible = false;
  bool overhead_ok = false;    // sum of positioning overhead < alpha * R
  bool service_ok = false;     // T <= alpha * R
  bool continuity_ok = false;  // T <= R
  double overhead_s = 0;
  double service_time_s = 0;
  double round_s = 0;
  std::string reason;  // empty when feasible, otherwise "disk-bound"
};

inline Feasibility admission_feasible(std::span<const ActiveStream> streams, const ActiveStream& candidate,
                                      const DiskParams& disk) {
  constexpr double kSlack = 1e-12;
  Feasibility f;
  if (!(candidate.playback_rate_fps > 0.0)) throw DomainError("admission_feasible: candidate playback rate must be positive");
  double r = candidate.frames_per_round / candidate.playback_rate_fps;
  if (!streams.empty()) r = std::min(r, round_duration(streams));
  f.round_s = r;
  f.overhead_s = positioning_overhead(streams, disk) + positioning_overhead(std::span(&candidate, 1), disk);
  f.service_time_s = round_service_time(streams, disk) + stream_round_cost(candidate, disk);
  const double budget = disk.alpha * r;
  f.overhead_ok = f.overhead_s < budget;
  f.service_ok = f.service_time_s <= budget * (1.0 + kSlack);
  f.continuity_ok = f.service_time_s <= r * (1.0 + kSlack);
  f.feasible = f.overhead_ok && f.service_ok;
  if (!f.feasible) f.reason = "disk-bound";
  return f;
}

// t_i = F_i * frame_size * 8 / r_i, the time to play a stream of F_i frames.
inline double play_time(double total_frames, double bit_rate_bps, double frame_size_bytes) {
  if (!(bit_rate_bps > 0.0)) throw DomainError("play_time: bit rate must be positive");
  if (total_frames < 0.0) throw DomainError("play_time: negative frame count");
  return total_frames * frame_size_bytes * 8.0 / bit_rate_bps;
}

// t_i = (F_i - C_i) * frame_size * 8 / r_i.
inline double cached_play_time(double total_frames, double cached_frames, double bit_rate_bps, double frame_size_bytes) {
  if (cached_frames < 0.0 || cached_frames > total_frames)
    throw DomainError("cached_play_time: cached frames must lie in [0, F_i]");
  return play_time(total_frames - cached_frames, bit_rate_bps, frame_size_bytes);
}

// r'_i = (F_i - C_i) / F_i * r_i.
inline double reduced_bit_rate(double total_frames, double cached_frames, double bit_rate_bps) {
  if (!(total_frames > 0.0)) throw DomainError("reduced_bit_rate: F_i must be positive");
  if (cached_frames < 0.0 || cached_frames > total_frames)
    throw DomainError("reduced_bit_rate: cached frames must lie in [0, F_i]");
  return (total_frames - cached_frames) / total_frames * bit_rate_bps;
}

}  // namespace vodsim
