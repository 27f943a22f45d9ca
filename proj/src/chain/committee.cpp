#include "tegrid/chain/committee.hpp"

#include <algorithm>

namespace tegrid::chain {

Committee::Committee(std::vector<AccountId> validators) : validators_(std::move(validators)) {
  if (validators_.empty()) throw std::invalid_argument("committee cannot be empty");
}

bool Committee::contains(const AccountId& id) const {
  return std::find(validators_.begin(), validators_.end(), id) != validators_.end();
}

const AccountId& Committee::proposer(std::uint64_t height, std::uint32_t skip) const {
  if (height < anchor_) throw std::out_of_range("height precedes committee anchor");
  const std::uint64_t n = validators_.size();
  return validators_[(height - anchor_ + skip) % n];
}

CallOutcome Committee::vote(const AccountId& voter, const VoteCall& call,
                            std::uint64_t height) {
  if (!contains(voter)) return CallOutcome::failure("voter is not a validator");
  const bool member = contains(call.candidate);
  if (call.add && member) return CallOutcome::failure("candidate already a validator");
  if (!call.add && !member) return CallOutcome::failure("candidate is not a validator");
  if (!call.add && validators_.size() == 1) {
    return CallOutcome::failure("cannot remove the last validator");
  }

  auto& voters = pending_[{call.candidate, call.add}];
  voters.insert(voter);
  if (voters.size() < quorum()) return CallOutcome::success();

  if (call.add) {
    validators_.push_back(call.candidate);
  } else {
    validators_.erase(std::find(validators_.begin(), validators_.end(), call.candidate));
  }
  anchor_ = height + 1;
  // Tallies were counted against the old set.
  pending_.clear();
  return CallOutcome::success();
}

std::size_t Committee::pending_votes(const VoteCall& call) const {
  const auto it = pending_.find({call.candidate, call.add});
  return it == pending_.end() ? 0 : it->second.size();
}

void Committee::encode(ByteWriter& w) const {
  w.u32(static_cast<std::uint32_t>(validators_.size()));
  for (const auto& v : validators_) w.fixed(v);
  w.u64(anchor_);
  w.u32(static_cast<std::uint32_t>(pending_.size()));
  for (const auto& [motion, voters] : pending_) {
    w.fixed(motion.first);
    w.boolean(motion.second);
    w.u32(static_cast<std::uint32_t>(voters.size()));
    for (const auto& v : voters) w.fixed(v);
  }
}

}  // namespace tegrid::chain
