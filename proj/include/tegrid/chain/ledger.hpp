#pragma once

#include "tegrid/chain/committee.hpp"

#include <map>
#include <memory>
#include <optional>

namespace tegrid::chain {

/// Why a transaction cannot enter a block at the current state.
enum class TxError { None, BadSignature, StaleNonce, Malformed };
const char* to_string(TxError e);

/// Everything the state root commits to.
struct LedgerState {
  Committee committee;
  std::map<AccountId, std::uint64_t> nonces;
  std::unique_ptr<Application> app;

  LedgerState clone() const;
  Digest root() const;
};

struct BlockResult {
  bool ok = false;
  std::string error;
  std::vector<CallOutcome> outcomes;  // one per tx when ok
};

/// Replicated state of one node: verifies, executes and commits blocks.
class Ledger {
 public:
  Ledger(GenesisConfig genesis, std::unique_ptr<Application> app,
         std::shared_ptr<SignatureCache> cache = nullptr);

  const GenesisConfig& genesis() const { return genesis_; }
  std::uint64_t height() const { return height_; }
  const Digest& head_hash() const { return head_hash_; }
  std::int64_t head_time() const { return head_time_; }
  const Committee& committee() const { return state_.committee; }
  const Application& app() const { return *state_.app; }
  Digest state_root() const { return state_.root(); }
  std::optional<std::uint64_t> nonce(const AccountId& id) const;

  /// Earliest timestamp allowed for the next block after `skip` timeouts.
  std::int64_t min_timestamp(std::uint32_t skip) const;

  TxError check_tx(const Tx& tx) const;

  /// Full validation; commits only if every check passes.
  BlockResult apply(const Block& block);
  /// Validation without committing.
  BlockResult verify(const Block& block) const;

  /// Builds and signs the next block from `candidates` (in order), skipping
  /// transactions that are invalid at that point.
  Block build(const KeyPair& proposer, std::int64_t timestamp, std::uint32_t skip,
              const std::vector<Tx>& candidates) const;

 private:
  bool verify_sig(const AccountId& key, ByteView msg, const Signature& sig) const;
  static TxError check_nonce(const LedgerState& s, const Tx& tx);
  CallOutcome execute(LedgerState& s, const Tx& tx, std::uint64_t height) const;
  BlockResult run(const Block& block, LedgerState& scratch) const;

  GenesisConfig genesis_;
  std::shared_ptr<SignatureCache> cache_;
  LedgerState state_;
  std::uint64_t height_ = 0;
  Digest head_hash_{};
  std::int64_t head_time_ = 0;
};

}  // namespace tegrid::chain
