#pragma once

#include <cstdint>
#include <vector>

#include "gsure/rng.hpp"

namespace gsure {

// Equiprobable point masses at (1, ..., 1) and (-1, ..., -1).
std::vector<std::vector<double>> two_deltas(std::size_t count, Rng& rng, std::size_t dim = 2);

std::vector<std::vector<double>> isotropic_gaussian(std::size_t count, std::size_t dim, Rng& rng,
                                                    double variance = 1.0);

// height x width images in [-1, 1]: a -1 background with one to three
// axis-aligned rectangles or discs of intensity 2u - 1, u in [0.25, 1). Row-major.
std::vector<std::vector<double>> synthetic_shapes(std::size_t count, std::size_t height, std::size_t width, Rng& rng);

}  // namespace gsure
