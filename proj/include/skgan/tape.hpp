#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "skgan/tensor.hpp"

namespace skgan {

// Records differentiable operations in execution order and replays their
// backward rules in reverse. A tape belongs to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  // True if an op on these inputs needs to be recorded.
  static bool wants(const Tape* tape, std::initializer_list<const Tensor*> inputs);

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1, runs every recorded backward rule once in
  // reverse order, then clears the tape. Throws DimensionError if `loss`
  // is not a single element.
  void backward(const Tensor& loss);

  std::size_t size() const { return ops_.size(); }
  bool empty() const { return ops_.empty(); }
  void clear() { ops_.clear(); }

  // Number of backward rules executed by the last backward() call.
  std::size_t last_visits() const { return last_visits_; }

 private:
  struct Op {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Op> ops_;
  std::size_t last_visits_ = 0;
};

}  // namespace skgan
