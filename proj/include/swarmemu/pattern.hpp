#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "swarmemu/memory.hpp"

namespace swarmemu {

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Keyed hash of (seed, a, b).
inline std::uint64_t keyed_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(seed ^ 0xA0761D6478BD642Full) ^ mix64(a * 0xE7037ED1A0B428DBull + b));
}

/// Word `w` of block `block` of the backing store content.
inline std::uint64_t pattern_word(std::uint64_t seed, std::uint64_t block, std::uint64_t w) {
  return keyed_hash(seed, block, w);
}

/// Fills `out` with the content of one block. out.size() must be a multiple of 8.
void fill_block(std::uint64_t seed, std::uint64_t block, std::span<std::byte> out);

/// Reference content of block `block`; throws std::out_of_range when the block
/// is beyond `capacity_blocks`.
std::vector<std::byte> read_block_oracle(std::uint64_t seed, std::uint64_t block,
                                         std::uint32_t block_bytes, std::uint64_t capacity_blocks);

struct VerifyResult {
  bool ok = true;
  std::size_t first_bad_offset = 0;
};

/// Checks that `buffer` holds blocks slba..slba+nlb (nlb zero-based).
VerifyResult verify_read(std::span<const std::byte> buffer, std::uint64_t slba, std::uint32_t nlb,
                         std::uint64_t seed, std::uint32_t block_bytes);

/// Emulated flash address space kept in memory.
class BackingStore {
 public:
  BackingStore(std::uint64_t capacity_blocks, std::uint32_t block_bytes, std::uint64_t seed);

  std::uint64_t capacity_blocks() const { return capacity_blocks_; }
  std::uint32_t block_bytes() const { return block_bytes_; }
  std::uint64_t seed() const { return seed_; }
  std::span<std::byte> bytes() { return data_.span(); }
  std::span<const std::byte> block(std::uint64_t b) const {
    return data_.span().subspan(b * block_bytes_, block_bytes_);
  }

 private:
  std::uint64_t capacity_blocks_;
  std::uint32_t block_bytes_;
  std::uint64_t seed_;
  Buffer data_;
};

}  // namespace swarmemu
