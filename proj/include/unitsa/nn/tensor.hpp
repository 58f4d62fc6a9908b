#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "unitsa/common.hpp"

namespace unitsa::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> values;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{}) : shape(std::move(s)), values(shape_size(shape), fill) {}

  std::size_t size() const { return values.size(); }
  T* data() { return values.data(); }
  const T* data() const { return values.data(); }
  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Named parameter tensors with matching gradient buffers.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;
  };

  std::size_t add(const std::string& name, const Shape& shape) {
    if (index_.count(name)) throw StateError("parameter '" + name + "' already exists");
    entries_.push_back(Entry{name, Tensor<T>(shape), Tensor<T>(shape), true});
    index_.emplace(name, entries_.size() - 1);
    return entries_.size() - 1;
  }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require(const std::string& name) const {
    if (auto idx = find(name)) return *idx;
    throw ConfigError("unknown parameter '" + name + "'");
  }

  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& at(const std::string& name) { return entries_[require(name)]; }
  const Entry& at(const std::string& name) const { return entries_[require(name)]; }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad() {
    for (auto& e : entries_) std::fill(e.grad.values.begin(), e.grad.values.end(), T{});
  }

  void set_trainable(bool trainable) {
    for (auto& e : entries_) e.trainable = trainable;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
      if (e.trainable) n += e.value.size();
    }
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace unitsa::nn
