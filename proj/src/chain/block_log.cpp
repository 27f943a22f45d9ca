#include "tegrid/chain/block_log.hpp"

#include <fstream>

namespace tegrid::chain {

void write_block_log(const std::filesystem::path& path, const std::vector<Block>& blocks) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  for (const auto& b : blocks) {
    ByteWriter w;
    const Bytes body = encode_block(b);
    w.bytes(body);
    const Bytes& rec = w.data();
    f.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::vector<Block> read_block_log(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  const Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ByteReader r(data);
  std::vector<Block> out;
  while (r.remaining() > 0) {
    const Bytes body = r.bytes(std::size_t{64} << 20);
    out.push_back(decode_block(body));
  }
  return out;
}

Digest replay(const GenesisConfig& genesis, const Application& prototype,
              const std::vector<Block>& blocks) {
  Ledger ledger(genesis, prototype.clone(), std::make_shared<SignatureCache>());
  for (const auto& b : blocks) {
    const BlockResult r = ledger.apply(b);
    if (!r.ok) {
      throw std::runtime_error("block " + std::to_string(b.header.height) + " rejected: " +
                               r.error);
    }
  }
  return ledger.state_root();
}

}  // namespace tegrid::chain
