#pragma once

#include <cstddef>

#include "skgan/tape.hpp"
#include "skgan/tensor.hpp"

namespace skgan::ops {

enum class Mode { kTrain, kEval };

// Spatial output size of a strided convolution: ceil(in / stride).
constexpr std::size_t strided_extent(std::size_t in, std::size_t stride) {
  return (in + stride - 1) / stride;
}

// Zero-padded 2-D cross-correlation.
//   input  (n, in_c, h, w)
//   weight (out_c, in_c, kh, kw)
//   bias   (1, out_c, 1, 1)
//   output (n, out_c, ceil(h/stride), ceil(w/stride))
// out[b,o,i,j] = bias[o] + sum_{c,u,v} weight[o,c,u,v] * in[b,c,i*stride+u-pad, j*stride+v-pad]
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t pad, Tape* tape = nullptr);

// Upsampling convolution, the adjoint of conv2d(stride = up, pad) with the
// first two weight axes exchanged.
//   input  (n, in_c, h, w)
//   weight (out_c, in_c, kh, kw)
//   output (n, out_c, up*h, up*w)
// out[b,o,y,x] = bias[o] + sum over (c,i,j,u,v) with i*up+u-pad = y and
// j*up+v-pad = x of weight[o,c,u,v] * in[b,c,i,j].
Tensor conv2d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        std::size_t up, std::size_t pad, Tape* tape = nullptr);

struct BatchNormState {
  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(Shape4::vec(channels)),
        running_var(Shape4::vec(channels), std::vector<double>(channels, 1.0)) {}

  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  // Weight kept on the old running value at each update.
  double momentum = 0.9;
};

// Per-channel normalisation over (n, h, w). In train mode the batch
// statistics are used and, if `update_running` is set, folded into the
// running statistics (variance with Bessel's correction). Eval mode uses
// the running statistics.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode, Tape* tape = nullptr,
                  bool update_running = true);
Tensor batch_norm_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       const BatchNormState& running, Tape* tape = nullptr);

// Affine map on per-sample flattened input.
//   input  (n, c, h, w) with c*h*w = in_features
//   weight (out_features, in_features, 1, 1)
//   bias   (1, out_features, 1, 1)
//   output (n, out_features, 1, 1)
Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias,
                       Tape* tape = nullptr);

Tensor relu(const Tensor& input, Tape* tape = nullptr);
Tensor sigmoid(const Tensor& input, Tape* tape = nullptr);

// Same values, new shape with equal element count.
Tensor reshape(const Tensor& input, Shape4 shape, Tape* tape = nullptr);

// Scalar (1,1,1,1) sum of all elements.
Tensor sum(const Tensor& input, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& input, double factor, Tape* tape = nullptr);

// Stacks tensors along the batch axis.
Tensor concat_batch(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

}  // namespace skgan::ops
