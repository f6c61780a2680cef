#pragma once

#include <cstdint>
#include <random>

namespace lattice_spde {

/// Independent random stream keyed by (seed, index, tag). Any stream can be
/// reconstructed without generating the ones before it, so Monte Carlo
/// batches give identical results whatever order they run in.
inline std::mt19937_64 keyed_stream(std::uint64_t seed, std::uint64_t index, std::uint32_t tag = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), tag};
  return std::mt19937_64(seq);
}

// Stream tags, one per consumer, so streams for different purposes never collide.
namespace stream_tag {
inline constexpr std::uint32_t noise = 0x4e4f4953;
inline constexpr std::uint32_t kernel_points = 0x4b45524e;
inline constexpr std::uint32_t quadrature = 0x51554144;
inline constexpr std::uint32_t bootstrap = 0x424f4f54;
}  // namespace stream_tag

}  // namespace lattice_spde
