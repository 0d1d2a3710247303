#pragma once

#include <cstdint>
#include <string>

namespace vodsim {

// Steady-state figures for one run. Everything is measured over
// [warmup_s, duration_s); requests are attributed by arrival time.
struct MetricsReport {
  std::string policy;
  std::uint64_t seed = 0;
  double window_s = 0;

  long long requests = 0;
  long long admitted = 0;
  long long videos_streamed = 0;  // playbacks that reached the end of the video
  long long terminated = 0;       // clients that left early
  long long rejected = 0;
  long long rejected_disk_bound = 0;
  long long rejected_network_bound = 0;
  long long rejected_cache_full = 0;

  double disk_utilization_pct = 0;  // time-weighted disk busy share
  double disk_busy_s = 0;
  double cache_utilization_pct = 0;
  double hit_ratio_pct = 0;
  long long cache_hits = 0;
  long long cache_lookups = 0;

  long long continuity_violations = 0;  // rounds with T > R
  long long deadline_misses = 0;        // blocks a channel reached before they were fetched
  long long startup_deadline_violations = 0;
  double mean_startup_delay_s = 0;

  double concurrent_users_mean = 0;
  double cache_users_mean = 0;       // measured N_c
  double cache_arrival_rate = 0;     // measured lambda_c (1/s)
  double cache_mean_service_s = 0;   // measured T_c
  double littles_law_predicted_Nc = 0;

  long long channels_started = 0;
  double mean_batch_size = 0;
  long long intervals_allocated = 0;
};

}  // namespace vodsim
