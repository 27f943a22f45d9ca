#pragma once

#include "tegrid/chain/crypto.hpp"

#include <string>
#include <variant>
#include <vector>

namespace tegrid::chain {

// --- Transactions ---------------------------------------------------------

struct Tx {
  AccountId sender{};
  std::uint64_t nonce = 0;
  Bytes call;  // LedgerCall encoding
  Signature signature{};

  /// Bytes covered by the signature: domain tag, sender, nonce, call.
  Bytes signing_bytes() const;
  Digest hash() const;

  static Tx make(const KeyPair& key, std::uint64_t nonce, Bytes call);
  bool operator==(const Tx&) const = default;
};

void encode_tx(ByteWriter& w, const Tx& tx);
Tx decode_tx(ByteReader& r);
Bytes encode_tx(const Tx& tx);
Tx decode_tx(ByteView bytes);

/// Committee membership vote; only validators may cast it.
struct VoteCall {
  AccountId candidate{};
  bool add = true;  // false: remove
};

/// Opaque payload for the hosted application.
struct AppCall {
  Bytes payload;
};

/// Filler used by load generators; executes as a no-op.
struct NopCall {
  Bytes padding;
};

using LedgerCall = std::variant<VoteCall, AppCall, NopCall>;

Bytes encode_call(const LedgerCall& call);
LedgerCall decode_call(ByteView bytes);

// --- Blocks ---------------------------------------------------------------

struct BlockHeader {
  std::uint64_t height = 0;
  Digest parent_hash{};
  AccountId proposer{};
  std::int64_t timestamp_ms = 0;
  std::uint32_t skip = 0;  // in-turn proposers skipped after timeouts
  Digest tx_root{};
  Digest state_root{};

  Digest hash() const;
  bool operator==(const BlockHeader&) const = default;
};

struct Block {
  BlockHeader header;
  std::vector<Tx> txs;
  Signature signature{};  // proposer's signature over header.hash()

  Digest hash() const { return header.hash(); }
  bool operator==(const Block&) const = default;
};

Digest tx_root(const std::vector<Tx>& txs);

void encode_block(ByteWriter& w, const Block& b);
Block decode_block(ByteReader& r);
Bytes encode_block(const Block& b);
Block decode_block(ByteView bytes);

/// Finality acknowledgement of a committed block by a validator.
struct BlockAck {
  std::uint64_t height = 0;
  Digest block_hash{};
  AccountId validator{};
  Signature signature{};

  Bytes signing_bytes() const;
  static BlockAck make(const KeyPair& key, std::uint64_t height, const Digest& hash);
};

Bytes encode_ack(const BlockAck& a);
BlockAck decode_ack(ByteView bytes);

// --- Genesis --------------------------------------------------------------

struct GenesisConfig {
  std::string chain_id = "tegrid-local";
  std::vector<AccountId> validators;
  std::int64_t genesis_time_ms = 0;
  std::int64_t block_interval_ms = 1000;
  /// Extra wait per skipped proposer; 0 selects 2 * block_interval_ms.
  std::int64_t skip_timeout_ms = 0;
  std::uint32_t max_block_txs = 256;
  std::uint32_t mempool_limit = 100'000;

  std::int64_t effective_skip_timeout() const {
    return skip_timeout_ms > 0 ? skip_timeout_ms : 2 * block_interval_ms;
  }
  void validate() const;
  Bytes encode() const;
  Digest hash() const;
};

}  // namespace tegrid::chain
