// SPDX-FileCopyrightText: Copyright (c) 2026 The trigsim authors
// SPDX-License-Identifier: Apache-2.0

#include "trigsim/memory.hpp"

namespace trigsim {

void MemoryPool::add_rank(std::uint64_t device_bytes, std::uint64_t host_bytes) {
  RankMem mem;
  mem.device.assign(device_bytes, 0);
  mem.host.assign(host_bytes, 0);
  ranks_.push_back(std::move(mem));
}

Result<MemoryRegion> MemoryPool::register_region(RankId rank, Space space, std::uint64_t base,
                                                 std::uint64_t length) {
  if (rank >= ranks_.size()) return SimError::OutOfBounds;
  const auto& bytes = bytes_for(rank, space);
  if (base > bytes.size() || length > bytes.size() - base) return SimError::OutOfBounds;
  return MemoryRegion{rank, space, base, length};
}

std::vector<std::uint8_t>& MemoryPool::bytes_for(RankId rank, Space space) {
  return space == Space::Device ? ranks_[rank].device : ranks_[rank].host;
}

const std::vector<std::uint8_t>& MemoryPool::bytes_for(RankId rank, Space space) const {
  return space == Space::Device ? ranks_[rank].device : ranks_[rank].host;
}

bool MemoryPool::in_bounds(const MemAddr& addr, std::uint64_t len) const {
  if (addr.rank >= ranks_.size()) return false;
  const auto& bytes = bytes_for(addr.rank, addr.space);
  return addr.offset <= bytes.size() && len <= bytes.size() - addr.offset;
}

Status MemoryPool::check_range(const MemAddr& addr, std::uint64_t len) const {
  return in_bounds(addr, len) ? Status::Ok() : Status::Fail(SimError::OutOfBounds);
}

Status MemoryPool::write(const MemAddr& addr, std::span<const std::uint8_t> data) {
  if (!in_bounds(addr, data.size())) return Status::Fail(SimError::OutOfBounds);
  if (!data.empty()) {
    std::memcpy(bytes_for(addr.rank, addr.space).data() + addr.offset, data.data(), data.size());
    notify_range(addr, data.size());
  }
  return Status::Ok();
}

Status MemoryPool::read(const MemAddr& addr, std::span<std::uint8_t> out) const {
  if (!in_bounds(addr, out.size())) return Status::Fail(SimError::OutOfBounds);
  if (!out.empty())
    std::memcpy(out.data(), bytes_for(addr.rank, addr.space).data() + addr.offset, out.size());
  return Status::Ok();
}

Status MemoryPool::write_u64(const MemAddr& addr, std::uint64_t value) {
  std::uint8_t buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(value >> (8 * i));
  return write(addr, buf);
}

Result<std::uint64_t> MemoryPool::read_u64(const MemAddr& addr) const {
  std::uint8_t buf[8];
  Status st = read(addr, buf);
  if (!st.ok()) return st.err;
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return value;
}

Result<std::uint64_t> MemoryPool::fetch_add_u64(const MemAddr& addr, std::uint64_t delta) {
  Result<std::uint64_t> cur = read_u64(addr);
  if (!cur.ok()) return cur;
  const std::uint64_t next = cur.value() + delta;
  Status st = write_u64(addr, next);
  if (!st.ok()) return st.err;
  return next;
}

Result<bool> MemoryPool::watch_u64(const MemAddr& addr, CmpOp cmp, std::uint64_t value,
                                   WakeFn wake) {
  Result<std::uint64_t> cur = read_u64(addr);
  if (!cur.ok()) return cur.error();
  if (cmp_eval(cmp, cur.value(), value)) return true;
  watchers_[WordKey{addr.rank, addr.space, addr.offset}].push_back(
      Watcher{cmp, value, std::move(wake)});
  return false;
}

void MemoryPool::notify_range(const MemAddr& addr, std::uint64_t len) {
  if (watchers_.empty()) return;
  // A watched word overlaps the write iff word_offset+8 > offset and
  // word_offset < offset+len. Satisfied wakes are collected first and fired
  // after the scan: a wake may register new watchers.
  const std::uint64_t lo = addr.offset >= 7 ? addr.offset - 7 : 0;
  const std::uint64_t hi = addr.offset + len;  // exclusive
  std::vector<WakeFn> fired;
  auto it = watchers_.lower_bound(WordKey{addr.rank, addr.space, lo});
  while (it != watchers_.end()) {
    const WordKey& key = it->first;
    if (key.rank != addr.rank || key.space != addr.space || key.word_offset >= hi) break;
    Result<std::uint64_t> word = read_u64(MemAddr{key.rank, key.space, key.word_offset});
    auto& list = it->second;
    for (std::size_t i = 0; i < list.size();) {
      if (word.ok() && cmp_eval(list[i].cmp, word.value(), list[i].value)) {
        fired.push_back(std::move(list[i].wake));
        list.erase(list.begin() + static_cast<std::ptrdiff_t>(i));
      } else {
        ++i;
      }
    }
    if (list.empty())
      it = watchers_.erase(it);
    else
      ++it;
  }
  for (WakeFn& fn : fired) fn();
}

std::uint64_t MemoryPool::space_size(RankId rank, Space space) const {
  if (rank >= ranks_.size()) return 0;
  return bytes_for(rank, space).size();
}

}  // namespace trigsim
