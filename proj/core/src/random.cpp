#include "ddfire/random.hpp"

namespace ddfire {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t hash_tag(std::string_view tag) {
  // FNV-1a
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RandomStream::RandomStream(std::uint64_t seed) : key_(mix64(seed + kGolden)) {}

RandomStream::result_type RandomStream::operator()() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

RandomStream RandomStream::derive(std::uint64_t index) const {
  RandomStream child;
  child.key_ = mix64(key_ ^ mix64(index * kGolden + 0x632BE59BD9B4E019ULL));
  return child;
}

RandomStream RandomStream::derive(std::string_view tag) const {
  return derive(hash_tag(tag));
}

double RandomStream::uniform() {
  // 53 random bits -> [0, 1)
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() { return normal_(*this); }

Vector RandomStream::normal(Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal_(*this);
  return v;
}

}  // namespace ddfire
