#pragma once

#include "tegrid/chain/ledger.hpp"

#include <filesystem>

namespace tegrid::chain {

/// File of [u32 length][encoded block] records.
void write_block_log(const std::filesystem::path& path, const std::vector<Block>& blocks);
std::vector<Block> read_block_log(const std::filesystem::path& path);

/// Re-executes `blocks` on a fresh ledger; throws std::runtime_error naming
/// the first block that fails. Returns the final state root.
Digest replay(const GenesisConfig& genesis, const Application& prototype,
              const std::vector<Block>& blocks);

}  // namespace tegrid::chain
