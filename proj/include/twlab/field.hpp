#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace twlab {

/// n components by N nodes, stored component-major.
class Field {
 public:
  Field() = default;
  Field(std::size_t components, std::size_t nodes, double fill = 0.0)
      : n_(components), nodes_(nodes), data_(components * nodes, fill) {}

  std::size_t components() const { return n_; }
  std::size_t nodes() const { return nodes_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * nodes_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * nodes_ + j]; }

  std::span<double> component(std::size_t i) { return {data_.data() + i * nodes_, nodes_}; }
  std::span<const double> component(std::size_t i) const { return {data_.data() + i * nodes_, nodes_}; }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

 private:
  std::size_t n_ = 0;
  std::size_t nodes_ = 0;
  std::vector<double> data_;
};

}  // namespace twlab
