#include "skgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "skgan/errors.hpp"

namespace skgan {

std::string Shape4::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

Tensor::Tensor(Shape4 shape, bool requires_grad) : s_(std::make_shared<Storage>()) {
  s_->shape = shape;
  s_->values.assign(shape.numel(), 0.0);
  s_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape4 shape, std::vector<double> values, bool requires_grad)
    : s_(std::make_shared<Storage>()) {
  if (values.size() != shape.numel()) {
    throw DimensionError("numel", "tensor of shape " + shape.str() + " needs " +
                                      std::to_string(shape.numel()) + " values, got " +
                                      std::to_string(values.size()));
  }
  s_->shape = shape;
  s_->values = std::move(values);
  s_->requires_grad = requires_grad;
}

Tensor::Storage& Tensor::storage() const {
  if (!s_) throw std::logic_error("use of an undefined tensor");
  return *s_;
}

const Shape4& Tensor::shape() const { return storage().shape; }
std::span<const double> Tensor::values() const { return storage().values; }
std::span<double> Tensor::mutable_values() { return storage().values; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("numel", "item() on tensor of shape " + shape().str());
  return storage().values[0];
}

double& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  const Shape4& s = shape();
  return storage().values[((n * s.c + c) * s.h + h) * s.w + w];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  const Shape4& s = shape();
  return storage().values[((n * s.c + c) * s.h + h) * s.w + w];
}

bool Tensor::requires_grad() const { return s_ && s_->requires_grad; }
void Tensor::set_requires_grad(bool on) { storage().requires_grad = on; }

bool Tensor::has_grad() const { return s_ && !s_->grad.empty(); }
std::span<const double> Tensor::grad() const { return storage().grad; }

std::span<double> Tensor::mutable_grad() const {
  Storage& st = storage();
  if (st.grad.size() != st.values.size()) st.grad.assign(st.values.size(), 0.0);
  return st.grad;
}

void Tensor::zero_grad() {
  Storage& st = storage();
  if (!st.grad.empty()) std::fill(st.grad.begin(), st.grad.end(), 0.0);
}

void Tensor::drop_grad() {
  storage().grad.clear();
  storage().grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
  if (!s_) return {};
  return Tensor(s_->shape, s_->values);
}

bool Tensor::all_finite() const {
  const Storage& st = storage();
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(st.values.begin(), st.values.end(), finite) &&
         std::all_of(st.grad.begin(), st.grad.end(), finite);
}

}  // namespace skgan
