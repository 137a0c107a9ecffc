#include "tarstop/hash.hpp"

#include <fmt/format.h>

namespace tarstop {

std::string Fnv1a::hex() const { return fmt::format("{:016x}", state_); }

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  std::uint64_t z = parent + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) {
  Fnv1a h;
  h.update(label);
  return derive_seed(parent, h.digest());
}

}  // namespace tarstop
