#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lightllm/rng.hpp"
#include "lightllm/tensor.hpp"

namespace lightllm {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

// Trainable weight with N(0, 1/fan_in) entries.
inline Tensor init_weight(std::size_t fan_in, std::size_t fan_out, SeededRng& rng) {
  return Tensor::randn({fan_in, fan_out}, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)), true);
}

inline Tensor init_zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }

inline std::size_t count_values(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

}  // namespace lightllm
