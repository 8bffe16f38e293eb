#include "hansnet/init.hpp"

#include <cmath>

namespace hansnet {

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), -bound, bound, rng);
}

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), -bound, bound, rng);
}

Tensor near_identity(std::size_t n, double noise, Rng& rng) {
    Tensor t = Tensor::eye(n);
    auto d = t.mutable_data();
    if (noise > 0.0)
        for (auto& v : d) v += rng.normal(0.0, noise);
    return t;
}

}  // namespace hansnet
