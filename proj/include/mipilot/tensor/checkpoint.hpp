#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "mipilot/tensor/tensor.hpp"

namespace mipilot::tensor {

// One tensor as stored in a "MIWT" checkpoint. Values keep their on-disk precision.
struct StoredTensor {
  std::string name;
  Shape shape;
  DType dtype = DType::f32;
  std::variant<std::vector<float>, std::vector<double>> values;
};

struct Checkpoint {
  std::string config_text;  // human-readable key = value block
  std::vector<StoredTensor> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

template <Real S>
Checkpoint snapshot(const ParameterStore<S>& params, std::string config_text);

// Copies stored values into matching parameters (by name), converting precision if needed.
// Every parameter must be present with the same shape.
template <Real S>
void restore(ParameterStore<S>& params, const Checkpoint& ckpt);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mipilot::tensor
