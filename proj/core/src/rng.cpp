#include "apl/rng.hpp"

namespace apl {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::uint64_t a, std::uint64_t b) noexcept {
  // FNV-1a over the stream name
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = mix64(base ^ mix64(h));
  s = mix64(s ^ mix64(a + 0x632be59bd9b4e019ULL));
  s = mix64(s ^ mix64(b + 0x85157af5ULL));
  return s;
}

}  // namespace apl
