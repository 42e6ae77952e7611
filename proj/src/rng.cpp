#include "tfe/rng.hpp"

#include <cmath>

#include "tfe/errors.hpp"

namespace tfe {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ValidationError("Rng::below: n must be positive");
  // Rejection from the largest multiple of n below 2^64.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = eng_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t Rng::poisson(double lambda) {
  if (lambda < 0.0) throw ValidationError("Rng::poisson: lambda must be >= 0");
  std::uint64_t total = 0;
  // exp(-chunk) stays well inside double range.
  while (lambda > 500.0) {
    total += poisson(500.0);
    lambda -= 500.0;
  }
  const double threshold = std::exp(-lambda);
  double p = 1.0;
  std::uint64_t k = 0;
  do {
    ++k;
    p *= uniform();
  } while (p > threshold);
  return total + k - 1;
}

}  // namespace tfe
