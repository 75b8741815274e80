#include "swarmemu/pattern.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

namespace swarmemu {

void fill_block(std::uint64_t seed, std::uint64_t block, std::span<std::byte> out) {
  if (out.size() % 8 != 0) throw std::invalid_argument("block size must be a multiple of 8 bytes");
  for (std::size_t w = 0; w < out.size() / 8; ++w) {
    const std::uint64_t v = pattern_word(seed, block, w);
    std::memcpy(out.data() + w * 8, &v, 8);
  }
}

std::vector<std::byte> read_block_oracle(std::uint64_t seed, std::uint64_t block,
                                         std::uint32_t block_bytes, std::uint64_t capacity_blocks) {
  if (block >= capacity_blocks) {
    throw std::out_of_range("block " + std::to_string(block) + " beyond capacity " +
                            std::to_string(capacity_blocks));
  }
  std::vector<std::byte> out(block_bytes);
  fill_block(seed, block, out);
  return out;
}

VerifyResult verify_read(std::span<const std::byte> buffer, std::uint64_t slba, std::uint32_t nlb,
                         std::uint64_t seed, std::uint32_t block_bytes) {
  const std::size_t blocks = std::size_t{nlb} + 1;
  if (buffer.size() < blocks * block_bytes) return {false, buffer.size()};
  const std::size_t words = block_bytes / 8;
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t w = 0; w < words; ++w) {
      const std::size_t off = b * block_bytes + w * 8;
      const std::uint64_t expect = pattern_word(seed, slba + b, w);
      std::uint64_t got;
      std::memcpy(&got, buffer.data() + off, 8);
      if (got != expect) {
        // Narrow down to the first differing byte.
        for (std::size_t i = 0; i < 8; ++i) {
          if (((got >> (8 * i)) & 0xFF) != ((expect >> (8 * i)) & 0xFF)) return {false, off + i};
        }
      }
    }
  }
  return {};
}

BackingStore::BackingStore(std::uint64_t capacity_blocks, std::uint32_t block_bytes, std::uint64_t seed)
    : capacity_blocks_(capacity_blocks),
      block_bytes_(block_bytes),
      seed_(seed),
      data_(capacity_blocks * block_bytes) {
  for (std::uint64_t b = 0; b < capacity_blocks; ++b) {
    fill_block(seed, b, data_.span().subspan(b * block_bytes, block_bytes));
  }
}

}  // namespace swarmemu
