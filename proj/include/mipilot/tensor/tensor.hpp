#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mipilot/common.hpp"

namespace mipilot::tensor {

template <class S>
concept Real = std::same_as<S, float> || std::same_as<S, double>;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <Real S>
inline constexpr DType dtype_of = std::same_as<S, float> ? DType::f32 : DType::f64;

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape);

// Dense row-major buffer with a shape.
template <Real S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, S fill = S(0))
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
  Tensor(Shape shape, std::vector<S> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != element_count(shape_))
      throw ShapeError("tensor of shape " + to_string(shape_) + " cannot hold " +
                       std::to_string(data_.size()) + " values");
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::span<S> values() { return data_; }
  std::span<const S> values() const { return data_; }
  std::vector<S>& storage() { return data_; }

  S& operator[](std::size_t i) { return data_[i]; }
  S operator[](std::size_t i) const { return data_[i]; }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }
  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](S v) { return std::isfinite(v); });
  }

  // Same values under a new shape with equal element count.
  Tensor reshaped(Shape shape) const {
    if (element_count(shape) != data_.size())
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    return Tensor(std::move(shape), data_);
  }

 private:
  Shape shape_;
  std::vector<S> data_;
};

// A named trainable value. Running statistics are stored as state parameters: they are saved
// with the model but never receive gradients.
template <Real S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  bool trainable = true;
  bool is_state = false;
  bool has_grad = false;

  void zero_grad() {
    grad = Tensor<S>(value.shape());
    has_grad = false;
  }
};

// Owns parameters with stable addresses and unique names, in registration order.
template <Real S>
class ParameterStore {
 public:
  Parameter<S>& add(std::string name, Tensor<S> value, bool is_state = false);

  Parameter<S>& get(const std::string& name);
  const Parameter<S>& get(const std::string& name) const;
  Parameter<S>* find(const std::string& name);

  std::size_t size() const { return params_.size(); }
  Parameter<S>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return *params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;
};

}  // namespace mipilot::tensor
