#pragma once

#include "tegrid/common/bytes.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace tegrid::chain {

struct CallOutcome {
  bool ok = true;
  std::string error;

  static CallOutcome success() { return {}; }
  static CallOutcome failure(std::string why) { return {false, std::move(why)}; }
};

/// Deterministic state machine hosted by the ledger. A failed call must
/// leave the state untouched.
class Application {
 public:
  virtual ~Application() = default;

  virtual std::unique_ptr<Application> clone() const = 0;
  virtual void begin_block(std::uint64_t height) = 0;
  virtual CallOutcome execute(const AccountId& sender, ByteView call,
                              std::uint64_t height) = 0;
  /// Canonical encoding; the ledger hashes it into the state root.
  virtual void encode_state(ByteWriter& out) const = 0;
};

}  // namespace tegrid::chain
