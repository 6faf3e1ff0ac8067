#include "headrouter/toy_model.hpp"

#include "headrouter/rng.hpp"

namespace headrouter {

Tensor synthetic_latent(std::size_t image_len, std::size_t d_model, std::uint64_t seed) {
  SeededRng rng(splitmix64(seed ^ 0x6c6174656e74ULL));
  return rng.uniform_matrix(image_len, d_model, -1.0f, 1.0f);
}

Tensor latent_step(const Tensor& latent, const Tensor& predicted, std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("latent_step: steps must be >= 1");
  if (latent.dims() != predicted.dims()) throw ShapeError("latent_step: shape mismatch");
  const float dt = 1.0f / static_cast<float>(steps);
  const float keep = 1.0f - dt;
  Tensor out(predicted);
  auto o = out.values();
  auto z = latent.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = keep * z[i] + dt * o[i];
  return out;
}

}  // namespace headrouter
