#include "tegrid/net/bench.hpp"

#include "tegrid/chain/node.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

namespace tegrid::net {

namespace {

/// Ledger application for load tests: every call succeeds, no state.
class NullApp final : public chain::Application {
 public:
  std::unique_ptr<chain::Application> clone() const override {
    return std::make_unique<NullApp>();
  }
  void begin_block(std::uint64_t) override {}
  chain::CallOutcome execute(const AccountId&, ByteView, std::uint64_t) override {
    return chain::CallOutcome::success();
  }
  void encode_state(ByteWriter&) const override {}
};

struct DigestHash {
  std::size_t operator()(const Digest& d) const {
    std::size_t h;
    std::memcpy(&h, d.data(), sizeof h);
    return h;
  }
};

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(i, v.size() - 1)];
}

}  // namespace

BenchPoint measure_load(const BenchConfig& cfg, double offered_tps) {
  if (offered_tps <= 0) throw std::invalid_argument("offered load must be positive");
  if (cfg.warmup_s < 0 || cfg.duration_s <= cfg.warmup_s) {
    throw std::invalid_argument("duration must exceed warmup");
  }
  chain::GenesisConfig g;
  g.chain_id = "bench";
  std::vector<chain::KeyPair> keys;
  for (std::size_t i = 0; i < cfg.validators; ++i) {
    keys.push_back(chain::KeyPair::from_label("bench-validator-" + std::to_string(i)));
    g.validators.push_back(keys.back().public_key);
  }
  g.block_interval_ms = cfg.block_interval_ms;
  g.max_block_txs = cfg.max_block_txs;
  g.mempool_limit = 1'000'000;

  auto cache = std::make_shared<chain::SignatureCache>();
  std::vector<std::unique_ptr<chain::Node>> nodes;
  std::vector<std::unique_ptr<NodeEndpoint>> endpoints;
  SimNetwork net(cfg.latency);
  for (std::size_t i = 0; i < cfg.validators; ++i) {
    nodes.push_back(std::make_unique<chain::Node>(
        g, std::make_unique<NullApp>(),
        chain::NodeOptions{static_cast<std::uint32_t>(i), keys[i], cache}));
    endpoints.push_back(std::make_unique<NodeEndpoint>(*nodes.back()));
    net.attach(*endpoints.back());
  }
  Inbox client;
  const std::uint32_t client_id = net.attach(client);

  std::vector<chain::KeyPair> accounts;
  for (std::size_t a = 0; a < cfg.client_accounts; ++a) {
    accounts.push_back(chain::KeyPair::from_label("bench-client-" + std::to_string(a)));
  }
  std::vector<std::uint64_t> nonces(accounts.size(), 0);
  const Bytes payload = chain::encode_call(chain::NopCall{Bytes(cfg.nop_payload_bytes, 0xEE)});

  struct Sent {
    std::int64_t at_us;
    std::uint32_t node;
  };
  std::unordered_map<Digest, Sent, DigestHash> sent;
  const std::int64_t start_us = g.genesis_time_ms * 1000;
  const std::int64_t end_us = start_us + static_cast<std::int64_t>(cfg.duration_s * 1e6);
  const std::int64_t warm_us = start_us + static_cast<std::int64_t>(cfg.warmup_s * 1e6);
  const double gap_us = 1e6 / offered_tps;

  std::size_t k = 0;
  for (;; ++k) {
    const auto at = start_us + static_cast<std::int64_t>(std::llround(gap_us * static_cast<double>(k)));
    if (at >= end_us) break;
    net.run_until(at);
    const std::size_t a = k % accounts.size();
    const chain::Tx tx = chain::Tx::make(accounts[a], ++nonces[a], payload);
    const auto node = static_cast<std::uint32_t>(k % cfg.validators);
    if (at >= warm_us) sent.emplace(tx.hash(), Sent{at, node});
    net.post(client_id, node, {MessageKind::TxBroadcast, client_id, chain::encode_tx_broadcast(tx)});
  }
  // Drain: let the backlog of the window reach finality where it can.
  const std::int64_t grace_us = 3 * cfg.block_interval_ms * 1000;
  net.run_until(end_us + grace_us);

  BenchPoint p;
  p.offered_tps = offered_tps;
  p.submitted = sent.size();
  const auto& ref = *nodes.front();
  std::size_t window_txs = 0;
  std::vector<double> tcd;
  for (const auto& b : ref.blocks()) {
    const std::int64_t ts_us = b.header.timestamp_ms * 1000;
    if (ts_us >= warm_us && ts_us < end_us) window_txs += b.txs.size();
    for (const auto& tx : b.txs) {
      const auto it = sent.find(tx.hash());
      if (it == sent.end()) continue;
      const auto fin = nodes[it->second.node]->finalized_at(b.header.height);
      if (!fin) continue;
      tcd.push_back(static_cast<double>(*fin * 1000 - it->second.at_us) / 1000.0);
    }
  }
  p.committed_tps = static_cast<double>(window_txs) / (cfg.duration_s - cfg.warmup_s);
  p.finalized = tcd.size();
  p.censored = p.submitted - p.finalized;
  if (!tcd.empty()) {
    double sum = 0;
    for (double v : tcd) sum += v;
    p.mean_tcd_ms = sum / static_cast<double>(tcd.size());
    p.p50_tcd_ms = percentile(tcd, 0.5);
    p.p95_tcd_ms = percentile(tcd, 0.95);
  }
  return p;
}

double plateau(const std::vector<BenchPoint>& points) {
  double best = 0;
  for (const auto& p : points) best = std::max(best, p.committed_tps);
  double sum = 0;
  int n = 0;
  for (const auto& p : points) {
    if (p.committed_tps >= 0.95 * best) sum += p.committed_tps, ++n;
  }
  return n ? sum / n : 0;
}

BenchResult run_bench(const BenchConfig& cfg) {
  if (cfg.offered_tps.empty()) throw std::invalid_argument("no offered loads");
  BenchResult r;
  r.config = cfg;
  r.capacity_tps = cfg.max_block_txs * 1000.0 / static_cast<double>(cfg.block_interval_ms);
  for (double tps : cfg.offered_tps) r.points.push_back(measure_load(cfg, tps));
  r.plateau_tps = plateau(r.points);
  const auto idle = std::min_element(r.points.begin(), r.points.end(),
                                     [](const auto& a, const auto& b) { return a.offered_tps < b.offered_tps; });
  r.idle_tcd_ms = idle->mean_tcd_ms;
  return r;
}

void write_table(std::ostream& os, const BenchResult& r) {
  os << "# validators=" << r.config.validators << " block_interval_ms=" << r.config.block_interval_ms
     << " max_block_txs=" << r.config.max_block_txs << " capacity_tps=" << r.capacity_tps
     << " plateau_tps=" << r.plateau_tps << " idle_tcd_ms=" << r.idle_tcd_ms << "\n";
  os << "offered_tps\tcommitted_tps\tmean_tcd_ms\tp50_tcd_ms\tp95_tcd_ms\tsubmitted\tfinalized\tcensored\n";
  for (const auto& p : r.points) {
    os << p.offered_tps << '\t' << p.committed_tps << '\t' << p.mean_tcd_ms << '\t' << p.p50_tcd_ms
       << '\t' << p.p95_tcd_ms << '\t' << p.submitted << '\t' << p.finalized << '\t' << p.censored << '\n';
  }
}

}  // namespace tegrid::net
