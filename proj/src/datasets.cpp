#include "gsure/datasets.hpp"

#include <algorithm>
#include <cmath>

#include "gsure/error.hpp"

namespace gsure {

std::vector<std::vector<double>> two_deltas(std::size_t count, Rng& rng, std::size_t dim) {
  std::vector<std::vector<double>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.emplace_back(dim, rng.bernoulli(0.5) ? 1.0 : -1.0);
  return out;
}

std::vector<std::vector<double>> isotropic_gaussian(std::size_t count, std::size_t dim, Rng& rng, double variance) {
  if (!(variance >= 0.0)) throw DomainError("isotropic gaussian: variance must be non-negative");
  const double sd = std::sqrt(variance);
  std::vector<std::vector<double>> out(count, std::vector<double>(dim));
  for (auto& x : out)
    for (double& v : x) v = sd * rng.normal();
  return out;
}

std::vector<std::vector<double>> synthetic_shapes(std::size_t count, std::size_t height, std::size_t width, Rng& rng) {
  if (height < 2 || width < 2) throw DomainError("synthetic shapes: grid must be at least 2x2");
  std::vector<std::vector<double>> out;
  out.reserve(count);
  const long h = static_cast<long>(height), w = static_cast<long>(width);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> img(height * width, -1.0);
    const long shapes = rng.uniform_int(1, 3);
    for (long k = 0; k < shapes; ++k) {
      // Intensity in [0.25, 1) so every shape stands out from the background.
      const double value = 2.0 * (0.25 + 0.75 * rng.uniform()) - 1.0;
      if (rng.bernoulli(0.5)) {
        const long r0 = rng.uniform_int(0, h - 2), c0 = rng.uniform_int(0, w - 2);
        const long r1 = rng.uniform_int(r0 + 1, h - 1), c1 = rng.uniform_int(c0 + 1, w - 1);
        for (long r = r0; r <= r1; ++r)
          for (long c = c0; c <= c1; ++c) img[r * w + c] = value;
      } else {
        const double cr = rng.uniform() * (h - 1), cc = rng.uniform() * (w - 1);
        const double rad = 1.0 + rng.uniform() * (std::min(h, w) / 3.0);
        for (long r = 0; r < h; ++r)
          for (long c = 0; c < w; ++c) {
            if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= rad * rad) img[r * w + c] = value;
          }
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace gsure
