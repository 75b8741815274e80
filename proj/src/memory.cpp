#include "swarmemu/memory.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <new>

namespace swarmemu {

Buffer::Buffer(std::size_t bytes) : size_(bytes) {
  if (bytes == 0) return;
  const std::size_t rounded = (bytes + 63) / 64 * 64;
  void* p = std::aligned_alloc(64, rounded);
  if (p == nullptr) throw std::bad_alloc();
  std::memset(p, 0, rounded);
  data_.reset(static_cast<std::byte*>(p));
}

void Buffer::Free::operator()(std::byte* p) const { std::free(p); }

RegionId MemoryRegistry::add(std::span<std::byte> memory, std::string name) {
  regions_.push_back({memory, std::move(name)});
  return static_cast<RegionId>(regions_.size() - 1);
}

std::span<std::byte> MemoryRegistry::resolve(RegionAddress at, std::size_t len) const {
  if (at.region >= regions_.size()) return {};
  const auto& mem = regions_[at.region].memory;
  if (at.offset > mem.size() || len > mem.size() - at.offset) return {};
  return mem.subspan(at.offset, len);
}

std::uint64_t HostAddressSpace::map(std::span<std::byte> memory, RegionId region) {
  const std::uint64_t base = next_base_;
  mappings_.push_back({base, memory, region});
  next_base_ = (base + memory.size() + 0x1FFF) & ~std::uint64_t{0xFFF};
  return base;
}

const HostAddressSpace::Mapping* HostAddressSpace::find(std::uint64_t addr,
                                                        std::size_t len) const {
  auto it = std::upper_bound(mappings_.begin(), mappings_.end(), addr,
                             [](std::uint64_t a, const Mapping& m) { return a < m.base; });
  if (it == mappings_.begin()) return nullptr;
  --it;
  const std::uint64_t off = addr - it->base;
  if (off > it->memory.size() || len > it->memory.size() - off) return nullptr;
  return &*it;
}

bool HostAddressSpace::translate(std::uint64_t addr, std::size_t len, RegionAddress& out) const {
  const Mapping* m = find(addr, len);
  if (m == nullptr) return false;
  out = {m->region, addr - m->base};
  return true;
}

std::span<std::byte> HostAddressSpace::view(std::uint64_t addr, std::size_t len) const {
  const Mapping* m = find(addr, len);
  if (m == nullptr) return {};
  return m->memory.subspan(addr - m->base, len);
}

}  // namespace swarmemu
