#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace skgan {

struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const { return n * c * h * w; }
  // Elements per batch item.
  constexpr std::size_t per_sample() const { return c * h * w; }
  constexpr bool operator==(const Shape4&) const = default;

  std::string str() const;

  static constexpr Shape4 scalar() { return {1, 1, 1, 1}; }
  // Channel vector (1, len, 1, 1): biases, batchnorm gamma/beta.
  static constexpr Shape4 vec(std::size_t len) { return {1, len, 1, 1}; }
};

// Dense NCHW array of doubles with an optional gradient buffer.
//
// Tensor is a handle: copies share storage, so an op that captures its
// inputs on the tape sees the same gradient buffer as the caller.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 shape, bool requires_grad = false);
  Tensor(Shape4 shape, std::vector<double> values, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape4& shape() const;
  std::size_t numel() const { return shape().numel(); }

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;

  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero gradient on first use.
  std::span<double> mutable_grad() const;
  void zero_grad();
  void drop_grad();

  // Deep copy of the values, detached from any gradient.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  // Debug validation hook: true when values and grad are all finite.
  bool all_finite() const;

 private:
  struct Storage {
    Shape4 shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  Storage& storage() const;
  std::shared_ptr<Storage> s_;
};

}  // namespace skgan
