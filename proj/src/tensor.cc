// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "specadapt/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace specadapt {

std::int64_t NumelOf(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      buf_(std::make_shared<std::vector<double>>(
          static_cast<std::size_t>(NumelOf(shape_)), 0.0)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)),
      buf_(std::make_shared<std::vector<double>>(std::move(values))) {
  if (static_cast<std::int64_t>(buf_->size()) != NumelOf(shape_)) {
    throw std::invalid_argument("tensor shape does not match value count");
  }
}

Tensor Tensor::Full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.buf_->begin(), t.buf_->end(), v);
  return t;
}

Tensor Tensor::FromVector(const std::vector<double>& v) {
  return Tensor({static_cast<int>(v.size())}, v);
}

int Tensor::dim(int i) const {
  if (i < 0) i += ndim();
  if (i < 0 || i >= ndim()) throw std::out_of_range("tensor dim index");
  return shape_[static_cast<std::size_t>(i)];
}

std::int64_t Tensor::numel() const {
  return buf_ ? static_cast<std::int64_t>(buf_->size()) : 0;
}

double& Tensor::At(int r, int c) {
  return (*buf_)[static_cast<std::size_t>(r) * shape_[1] + c];
}

double Tensor::At(int r, int c) const {
  return (*buf_)[static_cast<std::size_t>(r) * shape_[1] + c];
}

double Tensor::ScalarValue() const {
  if (numel() != 1) throw std::invalid_argument("ScalarValue on non-scalar tensor");
  return (*buf_)[0];
}

Tensor Tensor::Reshaped(std::vector<int> new_shape) const {
  if (NumelOf(new_shape) != numel()) {
    throw std::invalid_argument("reshape changes element count");
  }
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.buf_ = buf_;
  return t;
}

Tensor Tensor::Clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.buf_ = std::make_shared<std::vector<double>>(*buf_);
  return t;
}

bool Tensor::AllFinite() const {
  for (double v : *buf_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::MinValue() const {
  return *std::min_element(buf_->begin(), buf_->end());
}

double Tensor::MaxValue() const {
  return *std::max_element(buf_->begin(), buf_->end());
}

std::uint64_t Tensor::HashValues(std::uint64_t h) const {
  if (!buf_) return h;
  return HashBytes(buf_->data(), buf_->size() * sizeof(double), h);
}

std::string Tensor::ShapeString() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

}  // namespace specadapt
