#pragma once

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include <cstdint>

#include "plgmi/util/seed.hpp"

namespace plgmi::util {

inline at::Generator make_generator(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(torch_seed(seed));
}

// Standard-normal rows drawn from an explicit generator.
inline torch::Tensor gaussian(at::IntArrayRef sizes, at::Generator& gen) {
  return at::normal(0.0, 1.0, sizes, gen, torch::TensorOptions().dtype(torch::kFloat32));
}

}  // namespace plgmi::util
