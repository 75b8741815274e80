#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>

namespace swarmemu::nvme {

static_assert(std::endian::native == std::endian::little,
              "queue entry layouts are defined little-endian");

inline constexpr std::size_t kSqeBytes = 64;
inline constexpr std::size_t kCqeBytes = 16;

inline constexpr std::uint8_t kOpcodeRead = 0x02;
inline constexpr std::uint32_t kNamespaceId = 1;

/// Status codes carried in bits 1..15 of the completion status word.
enum class Status : std::uint16_t {
  kSuccess = 0x0,
  kInvalidOpcode = 0x1,
  kInvalidField = 0x2,
  kDataTransferError = 0x4,
  kInvalidNamespace = 0xB,
  kLbaOutOfRange = 0x80,
};

/// Decoded view of a 64-byte submission entry.
struct Command {
  std::uint8_t opcode = kOpcodeRead;
  std::uint16_t cid = 0;
  std::uint32_t nsid = kNamespaceId;
  std::uint64_t data_ptr = 0;
  std::uint64_t slba = 0;
  std::uint16_t nlb = 0;  // zero-based block count

  std::uint32_t block_count() const { return std::uint32_t{nlb} + 1; }
  friend bool operator==(const Command&, const Command&) = default;
};

/// Decoded view of a 16-byte completion entry.
struct Completion {
  std::uint16_t sq_head = 0;
  std::uint16_t sq_id = 0;
  std::uint16_t cid = 0;
  std::uint16_t status = 0;  // bit 0 phase, bits 1..15 status code

  bool phase() const { return (status & 1u) != 0; }
  std::uint16_t status_code() const { return static_cast<std::uint16_t>(status >> 1); }
  bool ok() const { return status_code() == 0; }
  friend bool operator==(const Completion&, const Completion&) = default;
};

namespace detail {
template <typename T>
void put(std::span<std::byte> out, std::size_t off, T v) {
  std::memcpy(out.data() + off, &v, sizeof(T));
}
template <typename T>
T get(std::span<const std::byte> in, std::size_t off) {
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  return v;
}
}  // namespace detail

/// Writes all 64 bytes: opcode@0, CID@2, NSID@4, PRP1@24, SLBA@40, NLB@48.
inline void encode(const Command& cmd, std::span<std::byte, kSqeBytes> out) {
  std::memset(out.data(), 0, kSqeBytes);
  detail::put<std::uint8_t>(out, 0, cmd.opcode);
  detail::put<std::uint16_t>(out, 2, cmd.cid);
  detail::put<std::uint32_t>(out, 4, cmd.nsid);
  detail::put<std::uint64_t>(out, 24, cmd.data_ptr);
  detail::put<std::uint64_t>(out, 40, cmd.slba);
  detail::put<std::uint16_t>(out, 48, cmd.nlb);
}

inline Command decode(std::span<const std::byte, kSqeBytes> in) {
  Command cmd;
  cmd.opcode = detail::get<std::uint8_t>(in, 0);
  cmd.cid = detail::get<std::uint16_t>(in, 2);
  cmd.nsid = detail::get<std::uint32_t>(in, 4);
  cmd.data_ptr = detail::get<std::uint64_t>(in, 24);
  cmd.slba = detail::get<std::uint64_t>(in, 40);
  cmd.nlb = detail::get<std::uint16_t>(in, 48);
  return cmd;
}

/// Bytes 0..7 zero, SQ head@8, SQ id@10, CID@12, status@14.
inline void encode(const Completion& c, std::span<std::byte, kCqeBytes> out) {
  std::memset(out.data(), 0, 8);
  detail::put<std::uint16_t>(out, 8, c.sq_head);
  detail::put<std::uint16_t>(out, 10, c.sq_id);
  detail::put<std::uint16_t>(out, 12, c.cid);
  detail::put<std::uint16_t>(out, 14, c.status);
}

inline Completion decode_completion(std::span<const std::byte, kCqeBytes> in) {
  return {detail::get<std::uint16_t>(in, 8), detail::get<std::uint16_t>(in, 10),
          detail::get<std::uint16_t>(in, 12), detail::get<std::uint16_t>(in, 14)};
}

inline std::uint16_t make_status(Status code, bool phase) {
  return static_cast<std::uint16_t>((static_cast<std::uint16_t>(code) << 1) | (phase ? 1u : 0u));
}

/// One line of space-separated hex bytes.
std::string hex_dump(std::span<const std::byte> entry);

}  // namespace swarmemu::nvme
