#pragma once

#include <array>
#include <cstdint>

namespace fbsde::sim {

// Philox-4x32-10 counter-based generator. Each (key, counter) pair maps to
// four independent 32-bit words, so any draw in a run is addressable by
// (path, station, index) without sequential state. That makes batches
// reproducible under any execution order or worker count.
std::array<uint32_t, 4> philox4x32(const std::array<uint32_t, 4>& counter,
                                   const std::array<uint32_t, 2>& key);

uint64_t splitmix64(uint64_t x);

// A keyed random stream. Streams for different purposes within one run are
// derived from the run seed with disjoint domain tags, so e.g. verification
// noise never overlaps training noise.
class RngStream {
 public:
  static RngStream training(uint64_t seed, uint64_t step);
  static RngStream verification(uint64_t seed);
  static RngStream neighborhood(uint64_t seed);
  static RngStream param_init(uint64_t seed);
  static RngStream named(uint64_t seed, uint64_t domain);

  // Uniform in (0, 1], never 0.
  double uniform(uint64_t path, uint32_t station, uint32_t index) const;
  // Standard normal via Box-Muller on two uniforms.
  double gaussian(uint64_t path, uint32_t station, uint32_t index) const;
  // Both Box-Muller outputs of one pair draw.
  void gaussian_pair(uint64_t path, uint32_t station, uint32_t pair_index,
                     double& z0, double& z1) const;

  uint64_t key() const { return key_; }

 private:
  explicit RngStream(uint64_t key) : key_(key) {}
  uint64_t key_;
};

}  // namespace fbsde::sim
