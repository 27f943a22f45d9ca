#pragma once

#include "tegrid/chain/types.hpp"
#include "tegrid/net/sim.hpp"

#include <iosfwd>

namespace tegrid::net {

struct BenchConfig {
  std::size_t validators = 5;
  std::int64_t block_interval_ms = 100;
  std::uint32_t max_block_txs = 20;
  LatencyModel latency{5.0, 5.0, 7};
  /// Offered loads in tx/s, one measurement each.
  std::vector<double> offered_tps{1, 50, 100, 150, 200, 250, 300, 400};
  double duration_s = 20.0;
  double warmup_s = 5.0;
  std::size_t client_accounts = 64;
  std::size_t nop_payload_bytes = 64;
};

struct BenchPoint {
  double offered_tps = 0;
  double committed_tps = 0;
  double mean_tcd_ms = 0;
  double p50_tcd_ms = 0;
  double p95_tcd_ms = 0;
  std::size_t submitted = 0;
  std::size_t finalized = 0;  // submitted in the window and finalized by the end
  std::size_t censored = 0;   // submitted in the window, never finalized
};

struct BenchResult {
  BenchConfig config;
  std::vector<BenchPoint> points;
  double capacity_tps = 0;  // max_block_txs / block_interval
  double plateau_tps = 0;
  double idle_tcd_ms = 0;   // TCD at the lowest offered load
};

/// One load level on a fresh simulated committee: nop transactions arrive at
/// `offered_tps` (evenly spaced, round-robin over validators); throughput is
/// committed transactions per second of block time in the measurement window
/// and TCD is finalization minus submission at the receiving node.
BenchPoint measure_load(const BenchConfig& config, double offered_tps);
BenchResult run_bench(const BenchConfig& config);

/// Throughput level the curve settles at: mean of the points within 5% of
/// the best committed rate.
double plateau(const std::vector<BenchPoint>& points);

/// Tab-separated table: offered, committed, TCD statistics.
void write_table(std::ostream& os, const BenchResult& r);

}  // namespace tegrid::net
