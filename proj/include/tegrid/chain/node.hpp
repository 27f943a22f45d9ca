#pragma once

#include "tegrid/chain/ledger.hpp"
#include "tegrid/chain/mempool.hpp"
#include "tegrid/net/wire.hpp"

#include <limits>
#include <map>
#include <optional>

namespace tegrid::chain {

inline constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

using net::Outbound;

struct SubmitResult {
  Digest tx_hash{};
  bool accepted = false;
  std::string reason;
};

/// Who put a TxBroadcast on the wire. Clients get an Ack back. A validator
/// that admits a transaction forwarded by a normal node gossips it once more,
/// so it reaches validators the normal node is not peered with.
enum class TxOrigin : std::uint8_t { Client = 0, Validator = 1, NormalNode = 2 };

/// TxBroadcast payload: [origin u8][tx].
Bytes encode_tx_broadcast(const Tx& tx, TxOrigin origin = TxOrigin::Client);
std::pair<Tx, TxOrigin> decode_tx_broadcast(ByteView payload);
Bytes encode_submit_result(const SubmitResult& r);
SubmitResult decode_submit_result(ByteView payload);

struct NodeOptions {
  std::uint32_t index = 0;       // sender id on the wire
  std::optional<KeyPair> key;    // validator key; observers have none
  std::shared_ptr<SignatureCache> cache;
};

struct NodeStats {
  std::uint64_t blocks_rejected = 0;
  std::uint64_t txs_rejected = 0;
  std::string last_block_rejection;
};

/// Consensus participant as a pure state machine. The caller owns the clock
/// and the transport: it delivers messages to handle(), calls tick() at
/// next_deadline(), and sends whatever both return.
class Node {
 public:
  Node(GenesisConfig genesis, std::unique_ptr<Application> app, NodeOptions options);

  std::vector<Outbound> handle(const net::WireMessage& msg, std::int64_t now_ms);
  std::vector<Outbound> tick(std::int64_t now_ms);
  /// Next time tick() has work; kNever for observers.
  std::int64_t next_deadline(std::int64_t now_ms) const;

  /// Admission of a locally submitted transaction; gossip goes to `out`.
  SubmitResult submit(const Tx& tx, std::vector<Outbound>& out);

  /// BlockBroadcast messages for every committed block, for peer catch-up.
  std::vector<net::WireMessage> history() const;

  std::uint32_t index() const { return options_.index; }
  const Ledger& ledger() const { return ledger_; }
  const Mempool& mempool() const { return mempool_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const NodeStats& stats() const { return stats_; }
  std::int64_t committed_at(std::uint64_t height) const { return committed_at_.at(height - 1); }
  std::optional<std::int64_t> finalized_at(std::uint64_t height) const;
  std::uint64_t finalized_count() const { return finalized_.size(); }

 private:
  net::WireMessage wrap(net::MessageKind kind, Bytes payload) const;
  std::int64_t skip_timeout() const { return ledger_.genesis().effective_skip_timeout(); }
  std::uint32_t current_skip(std::int64_t now_ms) const;
  bool my_turn(std::uint32_t skip) const;

  void on_tx(const net::WireMessage& msg, std::vector<Outbound>& out);
  void on_block(Block block, std::int64_t now_ms, std::vector<Outbound>& out);
  void on_ack(const BlockAck& ack, std::int64_t now_ms);
  bool commit(const Block& block, std::int64_t now_ms, std::vector<Outbound>& out);
  void try_finalize(std::uint64_t height, std::int64_t now_ms);

  NodeOptions options_;
  Ledger ledger_;
  Mempool mempool_;
  NodeStats stats_;
  std::vector<Block> blocks_;
  std::vector<std::int64_t> committed_at_;
  std::map<std::uint64_t, Block> future_;
  std::map<std::uint64_t, std::map<AccountId, Digest>> acks_;
  std::map<std::uint64_t, std::vector<AccountId>> voters_;  // committee per unfinalized height
  std::map<std::uint64_t, std::int64_t> finalized_;
  std::optional<std::pair<std::uint64_t, std::uint32_t>> last_proposal_;
};

}  // namespace tegrid::chain
