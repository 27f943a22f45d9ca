#pragma once

#include "tegrid/common/bytes.hpp"

#include <cstdint>
#include <optional>

namespace tegrid::net {

enum class MessageKind : std::uint8_t {
  TxBroadcast = 1,
  BlockBroadcast = 2,
  VoteBroadcast = 3,
  Ack = 4,
};

inline constexpr std::size_t kMaxPayload = 1u << 20;
inline constexpr std::size_t kHeaderSize = 9;

/// Frame: [kind u8][sender u32 LE][len u32 LE][payload].
struct WireMessage {
  MessageKind kind = MessageKind::Ack;
  std::uint32_t sender = 0;
  Bytes payload;

  bool operator==(const WireMessage&) const = default;
};

/// A message to send; no target means every peer.
struct Outbound {
  std::optional<std::uint32_t> to;
  WireMessage msg;
};

Bytes encode(const WireMessage& m);
/// Rejects unknown kinds, oversize payloads, truncation and trailing bytes.
WireMessage decode(ByteView frame);

struct FrameHeader {
  MessageKind kind;
  std::uint32_t sender;
  std::uint32_t length;
};
/// Parses and checks the fixed 9-byte header (stream transports).
FrameHeader decode_header(ByteView header);

}  // namespace tegrid::net
