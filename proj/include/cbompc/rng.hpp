#pragma once

#include <cstdint>
#include <limits>

namespace cbompc {

/// SplitMix64 bit generator (UniformRandomBitGenerator).
///
/// Construction is a single word copy, so a fresh engine can be derived for
/// every (seed, agent, step) triple. This makes the noise an agent sees a
/// function of its coordinates only, independent of evaluation order and of
/// how agents are partitioned across threads.
class StreamEngine {
 public:
  using result_type = std::uint64_t;

  explicit constexpr StreamEngine(std::uint64_t state) noexcept : state_(state) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += kGolden;
    return mix(state_);
  }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t state_;
};

/// Stream for the noise of `agent` at CBO step `step`.
constexpr StreamEngine agent_stream(std::uint64_t seed, std::uint64_t agent,
                                    std::uint64_t step) noexcept {
  std::uint64_t h = StreamEngine::mix(seed ^ 0x243f6a8885a308d3ULL);
  h = StreamEngine::mix(h ^ (agent * 0x9e3779b97f4a7c15ULL));
  h = StreamEngine::mix(h ^ (step * 0xc2b2ae3d27d4eb4fULL + 0x165667b19e3779f9ULL));
  return StreamEngine(h);
}

/// Stream reserved for initial-ensemble sampling; disjoint from agent streams
/// by construction of the tag.
constexpr StreamEngine sampler_stream(std::uint64_t seed) noexcept {
  return StreamEngine(StreamEngine::mix(StreamEngine::mix(seed ^ 0x13198a2e03707344ULL) ^
                                        0xa4093822299f31d0ULL));
}

}  // namespace cbompc
