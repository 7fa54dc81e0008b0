#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <type_traits>

namespace cmcrd {

/// 64-bit FNV-1a. Used for config hashes and dataset fingerprints, which
/// must be stable across runs and platforms.
class Fnv1a {
 public:
  void add_bytes(const void* p, std::size_t n) noexcept {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= b[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void add(std::string_view s) noexcept {
    add_bytes(s.data(), s.size());
    add_value(s.size());
  }
  template <typename T>
  void add_value(const T& v) noexcept {
    static_assert(std::is_trivially_copyable_v<T>);
    add_bytes(&v, sizeof v);
  }
  std::uint64_t value() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t hash_string(std::string_view s) {
  Fnv1a h;
  h.add_bytes(s.data(), s.size());
  return h.value();
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Derives an independent stream seed from a base seed and a tag, so that
/// e.g. the shuffle stream of fold 3 does not depend on which other streams
/// were consumed.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
  Fnv1a h;
  h.add_value(base);
  h.add(tag);
  h.add_value(index);
  // splitmix64 finaliser
  std::uint64_t z = h.value() + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace cmcrd
