#include "tegrid/net/wire.hpp"

namespace tegrid::net {

Bytes encode(const WireMessage& m) {
  if (m.payload.size() > kMaxPayload) throw std::invalid_argument("payload exceeds 1 MiB");
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(m.kind));
  w.u32(m.sender);
  w.bytes(m.payload);
  return std::move(w).take();
}

FrameHeader decode_header(ByteView header) {
  ByteReader r(header);
  const std::uint8_t kind = r.u8();
  if (kind < 1 || kind > 4) throw DecodeError("unknown message kind");
  FrameHeader h{static_cast<MessageKind>(kind), r.u32(), r.u32()};
  if (h.length > kMaxPayload) throw DecodeError("payload exceeds 1 MiB");
  return h;
}

WireMessage decode(ByteView frame) {
  if (frame.size() < kHeaderSize) throw DecodeError("truncated input");
  const FrameHeader h = decode_header(frame.first(kHeaderSize));
  if (frame.size() - kHeaderSize < h.length) throw DecodeError("truncated input");
  if (frame.size() - kHeaderSize > h.length) throw DecodeError("trailing bytes");
  const ByteView body = frame.subspan(kHeaderSize);
  return {h.kind, h.sender, Bytes(body.begin(), body.end())};
}

}  // namespace tegrid::net
