// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "nightaug/error.hpp"

namespace nightaug {

std::size_t element_count(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) {
    require(d >= 0, ErrorCode::kShapeMismatch, "negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const std::vector<int>& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> dims, double fill)
    : dims_(std::move(dims)), data_(element_count(dims_), fill) {}

Tensor::Tensor(std::vector<int> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  require(data_.size() == element_count(dims_), ErrorCode::kShapeMismatch,
          "tensor data size " + std::to_string(data_.size()) +
              " does not match shape " + nightaug::shape_string(dims_));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(int rows, int cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::identity(int n) {
  Tensor t({n, n});
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::reshaped(std::vector<int> dims) const {
  require(element_count(dims) == data_.size(), ErrorCode::kShapeMismatch,
          "cannot reshape " + shape_string() + " to " +
              nightaug::shape_string(dims));
  return Tensor(std::move(dims), data_);
}

std::string Tensor::shape_string() const { return nightaug::shape_string(dims_); }

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::mean() const {
  return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size());
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidGeometry: return "invalid-geometry";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kOutOfRange: return "out-of-range";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kNumericalInstability: return "numerical-instability";
    case ErrorCode::kUndefinedMetric: return "undefined-metric";
    case ErrorCode::kContractViolation: return "contract-violation";
    case ErrorCode::kTranslation: return "translation";
    case ErrorCode::kNonFinite: return "non-finite";
  }
  return "unknown";
}

}  // namespace nightaug
