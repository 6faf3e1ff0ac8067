#pragma once

#include <cstddef>
#include <cstdint>

#include "headrouter/tensor.hpp"

namespace headrouter {

/// Seeded stand-in for a noisy image latent: [image_len x d_model], uniform in [-1, 1),
/// drawn from SeededRng(splitmix64(seed ^ 0x6c6174656e74)).
Tensor synthetic_latent(std::size_t image_len, std::size_t d_model, std::uint64_t seed);

/// One step of the linear schedule: (1 - dt) * latent + dt * predicted with dt = 1/steps.
/// With steps == 1 the result is `predicted` exactly.
Tensor latent_step(const Tensor& latent, const Tensor& predicted, std::size_t steps);

}  // namespace headrouter
