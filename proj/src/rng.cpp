#include "fbsde/rng.hpp"

#include <cmath>
#include <numbers>

namespace fbsde::sim {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr uint64_t kDomainTraining = 0x747261696e000000ull;
constexpr uint64_t kDomainVerify = 0x7665726966790000ull;
constexpr uint64_t kDomainNeighborhood = 0x6e65696768620000ull;
constexpr uint64_t kDomainInit = 0x696e697400000000ull;

inline void philox_round(std::array<uint32_t, 4>& ctr,
                         std::array<uint32_t, 2>& key) {
  const uint64_t p0 = (uint64_t)kPhiloxM0 * ctr[0];
  const uint64_t p1 = (uint64_t)kPhiloxM1 * ctr[2];
  const uint32_t hi0 = (uint32_t)(p0 >> 32), lo0 = (uint32_t)p0;
  const uint32_t hi1 = (uint32_t)(p1 >> 32), lo1 = (uint32_t)p1;
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  key[0] += kPhiloxW0;
  key[1] += kPhiloxW1;
}

inline double u64_to_unit(uint64_t x) {
  // 53-bit mantissa, shifted into (0, 1].
  return (double)((x >> 11) + 1) * 0x1.0p-53;
}

}  // namespace

std::array<uint32_t, 4> philox4x32(const std::array<uint32_t, 4>& counter,
                                   const std::array<uint32_t, 2>& key) {
  std::array<uint32_t, 4> ctr = counter;
  std::array<uint32_t, 2> k = key;
  for (int round = 0; round < 10; ++round) philox_round(ctr, k);
  return ctr;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RngStream RngStream::training(uint64_t seed, uint64_t step) {
  return RngStream(splitmix64(splitmix64(seed ^ kDomainTraining) + step));
}

RngStream RngStream::verification(uint64_t seed) {
  return RngStream(splitmix64(seed ^ kDomainVerify));
}

RngStream RngStream::neighborhood(uint64_t seed) {
  return RngStream(splitmix64(seed ^ kDomainNeighborhood));
}

RngStream RngStream::param_init(uint64_t seed) {
  return RngStream(splitmix64(seed ^ kDomainInit));
}

RngStream RngStream::named(uint64_t seed, uint64_t domain) {
  return RngStream(splitmix64(splitmix64(seed) ^ domain));
}

double RngStream::uniform(uint64_t path, uint32_t station,
                          uint32_t index) const {
  const std::array<uint32_t, 4> ctr = {(uint32_t)path, (uint32_t)(path >> 32),
                                       station, index};
  const std::array<uint32_t, 2> key = {(uint32_t)key_, (uint32_t)(key_ >> 32)};
  const auto r = philox4x32(ctr, key);
  return u64_to_unit(((uint64_t)r[0] << 32) | r[1]);
}

void RngStream::gaussian_pair(uint64_t path, uint32_t station,
                              uint32_t pair_index, double& z0,
                              double& z1) const {
  const std::array<uint32_t, 4> ctr = {(uint32_t)path, (uint32_t)(path >> 32),
                                       station, pair_index};
  const std::array<uint32_t, 2> key = {(uint32_t)key_, (uint32_t)(key_ >> 32)};
  const auto r = philox4x32(ctr, key);
  const double u1 = u64_to_unit(((uint64_t)r[0] << 32) | r[1]);
  const double u2 = u64_to_unit(((uint64_t)r[2] << 32) | r[3]);
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * std::numbers::pi * u2;
  z0 = rad * std::cos(ang);
  z1 = rad * std::sin(ang);
}

double RngStream::gaussian(uint64_t path, uint32_t station,
                           uint32_t index) const {
  double z0, z1;
  gaussian_pair(path, station, index / 2, z0, z1);
  return (index % 2 == 0) ? z0 : z1;
}

}  // namespace fbsde::sim
