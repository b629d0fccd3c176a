#include "skgan/tape.hpp"

#include "skgan/errors.hpp"

namespace skgan {

bool Tape::wants(const Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->requires_grad()) return true;
  }
  return false;
}

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  output.set_requires_grad(true);
  ops_.push_back(Op{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("numel", "backward() needs a scalar loss, got shape " +
                                      (loss.defined() ? loss.shape().str() : std::string("undefined")));
  }
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  last_visits_ = 0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    // Ops whose output never received gradient are not on a path to the loss.
    if (!it->output.has_grad()) continue;
    it->backward();
    ++last_visits_;
  }
  ops_.clear();
}

}  // namespace skgan
