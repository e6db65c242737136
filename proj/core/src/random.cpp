#include "netalloc/random.hpp"

#include <algorithm>
#include <stdexcept>

namespace netalloc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t s = derive_seed(seed, stream);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

Eigen::VectorXd standard_normal_vector(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
  return z;
}

double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("truncated_normal: empty interval");
  if (sd <= 0.0) return std::clamp(mean, lo, hi);
  std::normal_distribution<double> normal(mean, sd);
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    const double x = normal(rng);
    if (x >= lo && x <= hi) return x;
  }
  throw std::runtime_error("truncated_normal: acceptance region has negligible mass");
}

}  // namespace netalloc
