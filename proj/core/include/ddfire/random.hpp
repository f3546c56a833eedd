#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "ddfire/types.hpp"

namespace ddfire {

/// Counter-based pseudo-random stream.
///
/// Each stream is identified by a 64-bit key; the n-th draw is a pure
/// function of (key, n), so child streams derived with `derive` never
/// share state with their parent and cannot be reordered by concurrency.
/// Keys are built by hashing (seed, trial, module, call-site tag).
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

  RandomStream derive(std::uint64_t index) const;
  RandomStream derive(std::string_view tag) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  double uniform();
  double normal();
  Vector normal(Index n);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t hash_tag(std::string_view tag);

}  // namespace ddfire
