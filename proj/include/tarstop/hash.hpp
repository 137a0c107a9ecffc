#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tarstop {

/// Incremental 64-bit FNV-1a. Used for archive checksums and run fingerprints.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (v >> (8 * i)) & 0xffU;
      state_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// splitmix64 finalizer; mixes a parent seed with a stream index.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream);

std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);

}  // namespace tarstop
