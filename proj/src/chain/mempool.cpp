#include "tegrid/chain/mempool.hpp"

namespace tegrid::chain {

const char* to_string(Admission a) {
  switch (a) {
    case Admission::Accepted: return "accepted";
    case Admission::Duplicate: return "duplicate";
    case Admission::Full: return "mempool full";
    case Admission::Rejected: return "rejected";
  }
  return "?";
}

Admission Mempool::add(const Tx& tx) {
  const Digest h = tx.hash();
  if (by_hash_.count(h) || by_nonce_.count({tx.sender, tx.nonce})) return Admission::Duplicate;
  if (queue_.size() >= limit_) return Admission::Full;
  queue_.emplace_back(h, tx);
  by_hash_.insert(h);
  by_nonce_.insert({tx.sender, tx.nonce});
  return Admission::Accepted;
}

std::vector<Tx> Mempool::peek(std::size_t max) const {
  std::vector<Tx> out;
  out.reserve(std::min(max, queue_.size()));
  for (const auto& [_, tx] : queue_) {
    if (out.size() >= max) break;
    out.push_back(tx);
  }
  return out;
}

void Mempool::prune(const std::function<bool(const Tx&)>& stale) {
  std::deque<std::pair<Digest, Tx>> kept;
  for (auto& entry : queue_) {
    if (stale(entry.second)) {
      by_hash_.erase(entry.first);
      by_nonce_.erase({entry.second.sender, entry.second.nonce});
    } else {
      kept.push_back(std::move(entry));
    }
  }
  queue_ = std::move(kept);
}

}  // namespace tegrid::chain
