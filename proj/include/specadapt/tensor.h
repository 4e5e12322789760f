// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SPECADAPT_TENSOR_H_
#define SPECADAPT_TENSOR_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "specadapt/common.h"

namespace specadapt {

// Dense row-major double tensor. Copies are shallow (shared buffer); all
// library ops are functional and allocate fresh outputs, so aliasing is only
// a concern for code that mutates via data() (the optimizers, which own
// their parameter tensors).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor Zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor Full(std::vector<int> shape, double v);
  static Tensor Scalar(double v) { return Full({}, v); }
  static Tensor FromVector(const std::vector<double>& v);

  bool defined() const { return buf_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const;
  std::int64_t numel() const;

  double* data() { return buf_->data(); }
  const double* data() const { return buf_->data(); }
  double& operator[](std::int64_t i) { return (*buf_)[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return (*buf_)[static_cast<std::size_t>(i)]; }

  // 2-D accessors (rows x cols), used heavily by the spectrogram code.
  double& At(int r, int c);
  double At(int r, int c) const;

  double ScalarValue() const;

  // Shares the buffer; element count must match.
  Tensor Reshaped(std::vector<int> new_shape) const;
  Tensor Clone() const;

  bool SameShape(const Tensor& other) const { return shape_ == other.shape_; }
  bool AllFinite() const;
  double MinValue() const;
  double MaxValue() const;

  std::uint64_t HashValues(std::uint64_t h = 0xcbf29ce484222325ULL) const;
  std::string ShapeString() const;

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> buf_;
};

std::int64_t NumelOf(const std::vector<int>& shape);

}  // namespace specadapt

#endif  // SPECADAPT_TENSOR_H_
