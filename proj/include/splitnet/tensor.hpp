#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace splitnet {

/// Dense row-major f64 array with a small dynamic shape.
///
/// Fields on a grid use rank 3 (channels, rows, cols); convolution kernel
/// banks use rank 4 (out, in, k, k); biases use rank 1.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> dims, double fill = 0.0);
  Tensor(std::vector<int> dims, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, v); }

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  std::span<double> values() { return data; }
  std::span<const double> values() const { return data; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_string() const;
};

std::size_t element_count(const std::vector<int>& dims);

}  // namespace splitnet
