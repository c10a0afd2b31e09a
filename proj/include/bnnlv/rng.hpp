#pragma once

#include <cstdint>
#include <cmath>

namespace bnnlv {

// Splittable counter-style RNG. A stream is identified by (seed, stream id);
// the draw sequence depends only on that identity, never on which other
// streams exist or in which order tasks run. Children are derived by hashing
// the parent identity with a substream index.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  // Independent stream for a subtask. Derivation uses only the immutable
  // (seed, stream) identity, not the current draw position.
  RngStream derive(std::uint64_t substream) const;

  std::uint64_t next_u64();
  double uniform01();                       // [0, 1)
  double uniform(double lo, double hi);
  double normal();                          // N(0, 1)
  double exponential(double rate);
  int uniform_int(int n);                   // {0, ..., n-1}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bnnlv
