#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace swarmemu {

using RegionId = std::uint32_t;

/// Owned, zero-initialized, cache-line aligned byte buffer.
class Buffer {
 public:
  Buffer() = default;
  explicit Buffer(std::size_t bytes);

  std::byte* data() { return data_.get(); }
  const std::byte* data() const { return data_.get(); }
  std::size_t size() const { return size_; }
  std::span<std::byte> span() { return {data_.get(), size_}; }
  std::span<const std::byte> span() const { return {data_.get(), size_}; }

 private:
  struct Free {
    void operator()(std::byte* p) const;
  };
  std::unique_ptr<std::byte, Free> data_;
  std::size_t size_ = 0;
};

/// (region, offset) address understood by the copy engine.
struct RegionAddress {
  RegionId region = 0;
  std::uint64_t offset = 0;
};

/// Table of memory regions reachable by copy descriptors.
///
/// Regions are registered during setup; lookups afterwards are lock-free
/// reads of an immutable table, so registration must finish before engines
/// start executing descriptors.
class MemoryRegistry {
 public:
  RegionId add(std::span<std::byte> memory, std::string name);

  /// Resolves a range; empty span when out of bounds or unknown region.
  std::span<std::byte> resolve(RegionAddress at, std::size_t len) const;

  std::size_t size() const { return regions_.size(); }
  const std::string& name(RegionId id) const { return regions_.at(id).name; }

 private:
  struct Region {
    std::span<std::byte> memory;
    std::string name;
  };
  std::vector<Region> regions_;
};

/// Flat "host physical" address space built from registered data regions.
///
/// Models the addresses a submitter places in the data pointer of an SQE:
/// region k starts at a 4 KiB aligned base after region k-1.
class HostAddressSpace {
 public:
  struct Mapping {
    std::uint64_t base = 0;
    std::span<std::byte> memory;
    RegionId region = 0;
  };

  std::uint64_t map(std::span<std::byte> memory, RegionId region);

  /// Translates [addr, addr+len) to a region address. Returns false if the
  /// range is not fully inside one region.
  bool translate(std::uint64_t addr, std::size_t len, RegionAddress& out) const;

  std::span<std::byte> view(std::uint64_t addr, std::size_t len) const;

  const std::vector<Mapping>& mappings() const { return mappings_; }

 private:
  const Mapping* find(std::uint64_t addr, std::size_t len) const;

  std::vector<Mapping> mappings_;
  std::uint64_t next_base_ = 0x1000;
};

}  // namespace swarmemu
