#include "tegrid/chain/crypto.hpp"

#include <sodium.h>

#include <stdexcept>

namespace tegrid::chain {
namespace {

void ensure_init() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

}  // namespace

Digest sha256(ByteView data) {
  Digest out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

Digest sha256(std::string_view text) {
  return sha256(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

KeyPair KeyPair::from_seed(const std::array<std::uint8_t, 32>& seed) {
  ensure_init();
  KeyPair kp;
  crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), seed.data());
  return kp;
}

KeyPair KeyPair::from_label(std::string_view label) { return from_seed(sha256(label)); }

Signature KeyPair::sign(ByteView message) const {
  Signature sig;
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_key.data());
  return sig;
}

bool verify(const AccountId& key, ByteView message, const Signature& sig) {
  ensure_init();
  return crypto_sign_verify_detached(sig.data(), message.data(), message.size(), key.data()) ==
         0;
}

bool SignatureCache::verify(const AccountId& key, ByteView message, const Signature& sig) {
  ByteWriter w;
  w.fixed(key);
  w.fixed(sig);
  w.raw(message);
  const Digest id = sha256(w.data());
  {
    std::lock_guard lock(mu_);
    if (seen_.contains(id)) return true;
  }
  if (!chain::verify(key, message, sig)) return false;
  std::lock_guard lock(mu_);
  seen_.insert(id);
  return true;
}

}  // namespace tegrid::chain
