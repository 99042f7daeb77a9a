#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace bape {

// Reproducible random streams.
//
// Engine: std::mt19937_64, whose output sequence is fixed by the C++
// standard. Variates are produced by Boost.Random distributions, which are
// header-only and therefore give identical streams on every platform
// (unlike the implementation-defined std:: distributions).
//
// Stream splitting: a run is identified by a 64-bit seed; every independent
// consumer draws from the sub-stream (domain, index), seeded with
//
//   splitmix64(splitmix64(seed) + ((domain << 32) | index) * 0x9E3779B97F4A7C15)
//
// Datasets use one sub-stream per class (index = class), so the samples of
// class j do not depend on how many draws other classes consumed.
enum class StreamDomain : std::uint32_t {
  Root = 0,
  ClassSamples = 1,
  ClassCenters = 2,
  ClassKappas = 3,
  EtfBasis = 4,
  Shuffle = 5,
  Init = 6,
  TestSamples = 7,
};

std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t stream_seed(std::uint64_t seed, StreamDomain domain, std::uint32_t index);

class Rng {
public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, StreamDomain domain, std::uint32_t index);

  double uniform();                 // [0, 1)
  double normal();                  // N(0, 1)
  double beta(double a, double b);  // Beta(a, b), a, b > 0
  std::uint64_t uniform_index(std::uint64_t n);  // {0, ..., n-1}

  Eigen::VectorXd normal_vector(Eigen::Index n);
  // Uniform on the unit sphere S^{n-1}.
  Eigen::VectorXd unit_vector(Eigen::Index n);

  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
};

}  // namespace bape
