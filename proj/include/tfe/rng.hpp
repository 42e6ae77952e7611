#pragma once
#include <cstdint>
#include <random>

namespace tfe {

// Derives an independent stream seed from a base seed (splitmix64 round).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

// Random source with self-contained sampling algorithms. std::mt19937_64 is
// bit-exact everywhere; the distributions in <random> are not, so the few
// samplers we need are written out here and results stay reproducible across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Unbiased uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller; one value per call, no cached spare.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Poisson count by Knuth's product-of-uniforms, chunked for large lambda.
  std::uint64_t poisson(double lambda);

 private:
  std::mt19937_64 eng_;
};

}  // namespace tfe
