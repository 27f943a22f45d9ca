#pragma once

#include "tegrid/chain/types.hpp"

#include <deque>
#include <functional>
#include <map>
#include <set>

namespace tegrid::chain {

enum class Admission { Accepted, Duplicate, Full, Rejected };
const char* to_string(Admission a);

/// Pending transactions in arrival order, unique by hash and by
/// (sender, nonce).
class Mempool {
 public:
  explicit Mempool(std::size_t limit) : limit_(limit) {}

  Admission add(const Tx& tx);
  /// Up to `max` transactions, oldest first.
  std::vector<Tx> peek(std::size_t max) const;
  /// Drops every transaction for which `stale` holds.
  void prune(const std::function<bool(const Tx&)>& stale);

  std::size_t size() const { return queue_.size(); }
  bool contains(const Digest& hash) const { return by_hash_.count(hash) != 0; }

 private:
  std::size_t limit_;
  std::deque<std::pair<Digest, Tx>> queue_;
  std::set<Digest> by_hash_;
  std::set<std::pair<AccountId, std::uint64_t>> by_nonce_;
};

}  // namespace tegrid::chain
