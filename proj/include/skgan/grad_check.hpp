#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "skgan/tape.hpp"
#include "skgan/tensor.hpp"

namespace skgan {

// A deterministic function of `input` (and of whatever else it closes over)
// returning a scalar tensor. The tape is null for plain evaluations.
using ScalarFn = std::function<Tensor(const Tensor& input, Tape* tape)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the taped gradient of f with central differences at the given
// flat indices of `input` (all indices when empty). The error per element is
// |analytic - numeric| / max(1, |analytic|).
//
// `input` is perturbed in place and restored; it must be the tensor that f
// reads (a parameter tensor captured by f is fine).
GradCheckResult grad_check(const ScalarFn& f, Tensor input, double eps = 1e-5,
                           const std::vector<std::size_t>& indices = {});

// Wraps a tensor-valued function into a scalar one by summing the output
// against a fixed pseudo-random projection drawn from `seed`.
ScalarFn project_to_scalar(std::function<Tensor(const Tensor&, Tape*)> f, std::uint64_t seed);

}  // namespace skgan
