#pragma once

#include "tegrid/common/bytes.hpp"

#include <memory>
#include <mutex>
#include <string_view>
#include <unordered_set>

namespace tegrid::chain {

using Signature = std::array<std::uint8_t, 64>;

Digest sha256(ByteView data);
Digest sha256(std::string_view text);

/// Ed25519 key pair. The public key is the account id.
struct KeyPair {
  AccountId public_key{};
  std::array<std::uint8_t, 64> secret_key{};

  static KeyPair from_seed(const std::array<std::uint8_t, 32>& seed);
  /// Deterministic key derived from sha256(label); for fixtures and demos.
  static KeyPair from_label(std::string_view label);

  Signature sign(ByteView message) const;
};

bool verify(const AccountId& key, ByteView message, const Signature& sig);

/// Remembers signatures that already verified. Nodes sharing one process
/// (the simulated network) share an instance so each signature is checked
/// once; the result is identical because verification is a pure function.
class SignatureCache {
 public:
  bool verify(const AccountId& key, ByteView message, const Signature& sig);

 private:
  struct DigestHash {
    std::size_t operator()(const Digest& d) const {
      std::size_t h;
      std::memcpy(&h, d.data(), sizeof h);
      return h;
    }
  };
  std::mutex mu_;
  std::unordered_set<Digest, DigestHash> seen_;
};

}  // namespace tegrid::chain
