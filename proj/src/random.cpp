#include "bape/random.hpp"

#include <boost/random/beta_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace bape {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, StreamDomain domain, std::uint32_t index) {
  const std::uint64_t key =
      (static_cast<std::uint64_t>(domain) << 32) | static_cast<std::uint64_t>(index);
  return splitmix64(splitmix64(seed) + key * 0x9E3779B97F4A7C15ULL);
}

Rng::Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

Rng::Rng(std::uint64_t seed, StreamDomain domain, std::uint32_t index)
    : engine_(stream_seed(seed, domain, index)) {}

double Rng::uniform() {
  // 53 random mantissa bits; exact and platform independent.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  boost::random::normal_distribution<double> dist(0.0, 1.0);
  return dist(engine_);
}

double Rng::beta(double a, double b) {
  boost::random::beta_distribution<double> dist(a, b);
  return dist(engine_);
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  boost::random::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
  return dist(engine_);
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

Eigen::VectorXd Rng::unit_vector(Eigen::Index n) {
  for (;;) {
    Eigen::VectorXd v = normal_vector(n);
    const double norm = v.norm();
    if (norm > 1e-12) return v / norm;
  }
}

}  // namespace bape
