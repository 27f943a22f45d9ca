#pragma once

#include "tegrid/chain/application.hpp"
#include "tegrid/chain/types.hpp"

#include <map>
#include <set>

namespace tegrid::chain {

/// Validator set with round-robin proposer rotation and majority-vote
/// membership changes.
class Committee {
 public:
  Committee() = default;
  explicit Committee(std::vector<AccountId> validators);

  const std::vector<AccountId>& validators() const { return validators_; }
  std::size_t size() const { return validators_.size(); }
  bool contains(const AccountId& id) const;
  /// Strict majority: floor(n / 2) + 1.
  std::size_t quorum() const { return validators_.size() / 2 + 1; }

  /// Proposer for `height` after `skip` timed-out turns. Rotation restarts
  /// at the first block after the last membership change.
  const AccountId& proposer(std::uint64_t height, std::uint32_t skip) const;

  /// Records a vote cast in block `height`. A passing vote changes the set
  /// immediately, so the new committee governs block height + 1.
  CallOutcome vote(const AccountId& voter, const VoteCall& call, std::uint64_t height);

  std::uint64_t anchor() const { return anchor_; }
  std::size_t pending_votes(const VoteCall& call) const;

  void encode(ByteWriter& w) const;

 private:
  using Motion = std::pair<AccountId, bool>;
  std::vector<AccountId> validators_;
  std::uint64_t anchor_ = 1;
  std::map<Motion, std::set<AccountId>> pending_;
};

}  // namespace tegrid::chain
