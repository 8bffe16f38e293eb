#pragma once

#include <cstddef>

#include "hansnet/rng.hpp"
#include "hansnet/tensor.hpp"

namespace hansnet {

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng);

/// U(-sqrt(6/fan_in), sqrt(6/fan_in)); keeps activation scale through ReLU-free stacks.
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng);

/// n x n identity plus N(0, noise^2) entries.
Tensor near_identity(std::size_t n, double noise, Rng& rng);

}  // namespace hansnet
