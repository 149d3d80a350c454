#include "glyphgen/nn_util.hpp"

namespace glyphgen {

std::uint64_t parameter_hash(const torch::nn::Module& m) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const torch::Tensor& t) {
    auto c = t.detach().contiguous().cpu();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : m.parameters()) mix(p);
  for (const auto& b : m.buffers()) mix(b);
  return h;
}

}  // namespace glyphgen
