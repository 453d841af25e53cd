#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace tomo {

using Rng = std::mt19937_64;

/// Reproducibility record attached to generated data.
struct SeedProvenance {
  std::uint64_t root_seed = 0;
  std::string stream;
  std::uint64_t index = 0;
};

namespace rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Seed for the stream (root, tag, index). Streams with different tags or
/// indices are statistically independent for practical purposes.
inline constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                                           std::uint64_t index = 0) {
  return splitmix64(splitmix64(root ^ fnv1a(tag)) + splitmix64(index + 0x5851F42D4C957F2Dull));
}

inline Rng make_rng(std::uint64_t root, std::string_view tag, std::uint64_t index = 0) {
  return Rng(derive_seed(root, tag, index));
}

inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& gen) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  // Row-major fill order so that prefixes of a stream stay stable when the
  // number of rows changes.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = nd(gen);
  return m;
}

}  // namespace rng
}  // namespace tomo
