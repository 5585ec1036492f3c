// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace nightaug {

/// Dense row-major array of doubles. Matrices are {rows, cols}; images are
/// {height, width, channels}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims, double fill = 0.0);
  Tensor(std::vector<int> dims, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(int rows, int cols, std::initializer_list<double> values);
  static Tensor identity(int n);

  const std::vector<int>& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int r, int c) { return data_[index2(r, c)]; }
  double at(int r, int c) const { return data_[index2(r, c)]; }
  double& at(int h, int w, int c) { return data_[index3(h, w, c)]; }
  double at(int h, int w, int c) const { return data_[index3(h, w, c)]; }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
  Tensor reshaped(std::vector<int> dims) const;
  std::string shape_string() const;

  double sum() const;
  double mean() const;
  bool all_finite() const;

 private:
  std::size_t index2(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(dims_[1]) +
           static_cast<std::size_t>(c);
  }
  std::size_t index3(int h, int w, int c) const {
    return (static_cast<std::size_t>(h) * static_cast<std::size_t>(dims_[1]) +
            static_cast<std::size_t>(w)) *
               static_cast<std::size_t>(dims_[2]) +
           static_cast<std::size_t>(c);
  }

  std::vector<int> dims_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<int>& dims);
std::size_t element_count(const std::vector<int>& dims);

}  // namespace nightaug
