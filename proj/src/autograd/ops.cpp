#include "skgan/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstring>
#include <cmath>
#include <limits>
#include <memory>

#include "skgan/errors.hpp"

namespace skgan::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

// Upper bound on the unfolded patch matrix, in doubles.
constexpr std::size_t kColsBudget = std::size_t{1} << 21;

struct Geometry {
  std::size_t channels, height, width;  // image being unfolded
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;             // grid of patch positions

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

std::size_t chunk_size(std::size_t batch, std::size_t per_sample_doubles) {
  std::size_t s = kColsBudget / std::max<std::size_t>(1, per_sample_doubles);
  return std::clamp<std::size_t>(s, 1, std::max<std::size_t>(batch, 1));
}

// Output columns j in [lo, hi) read input column j*stride + v - pad inside
// [0, W); the rest of the row is zero padding.
struct ColRange {
  std::size_t lo, hi;
};

ColRange valid_columns(const Geometry& g, std::size_t v) {
  const long W = static_cast<long>(g.width), s = static_cast<long>(g.stride);
  const long off = static_cast<long>(v) - static_cast<long>(g.pad);
  long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  long hi = (W - 1 - off) >= 0 ? (W - 1 - off) / s + 1 : 0;
  lo = std::min<long>(lo, static_cast<long>(g.out_w));
  hi = std::clamp<long>(hi, lo, static_cast<long>(g.out_w));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Unfolds one image into columns [col0, col0 + positions) of `dst`.
void im2col(const double* img, const Geometry& g, double* dst, std::size_t ld, std::size_t col0) {
  const long H = static_cast<long>(g.height);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t u = 0; u < g.kh; ++u) {
      for (std::size_t v = 0; v < g.kw; ++v) {
        double* row = dst + ((c * g.kh + u) * g.kw + v) * ld + col0;
        const ColRange r = valid_columns(g, v);
        const long off = static_cast<long>(v) - static_cast<long>(g.pad);
        for (std::size_t i = 0; i < g.out_h; ++i) {
          const long y = static_cast<long>(i * g.stride + u) - static_cast<long>(g.pad);
          double* out = row + i * g.out_w;
          if (y < 0 || y >= H) {
            std::fill(out, out + g.out_w, 0.0);
            continue;
          }
          const double* src = img + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          std::fill(out, out + r.lo, 0.0);
          if (g.stride == 1) {
            std::copy(src + static_cast<long>(r.lo) + off, src + static_cast<long>(r.hi) + off, out + r.lo);
          } else {
            const double* p = src + static_cast<long>(r.lo * g.stride) + off;
            for (std::size_t j = r.lo; j < r.hi; ++j, p += g.stride) out[j] = *p;
          }
          std::fill(out + r.hi, out + g.out_w, 0.0);
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back onto the image, accumulating.
void col2im(const double* src, std::size_t ld, std::size_t col0, const Geometry& g, double* img) {
  const long H = static_cast<long>(g.height);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t u = 0; u < g.kh; ++u) {
      for (std::size_t v = 0; v < g.kw; ++v) {
        const double* row = src + ((c * g.kh + u) * g.kw + v) * ld + col0;
        const ColRange r = valid_columns(g, v);
        const long off = static_cast<long>(v) - static_cast<long>(g.pad);
        for (std::size_t i = 0; i < g.out_h; ++i) {
          const long y = static_cast<long>(i * g.stride + u) - static_cast<long>(g.pad);
          if (y < 0 || y >= H) continue;
          double* dst = img + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          const double* in = row + i * g.out_w;
          double* p = dst + static_cast<long>(r.lo * g.stride) + off;
          if (g.stride == 1) {
            for (std::size_t j = r.lo; j < r.hi; ++j) p[j - r.lo] += in[j];
          } else {
            for (std::size_t j = r.lo; j < r.hi; ++j, p += g.stride) *p += in[j];
          }
        }
      }
    }
  }
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
  if (bias.numel() != channels) {
    throw DimensionError("bias", std::string(op) + ": bias has " + std::to_string(bias.numel()) +
                                     " elements, expected " + std::to_string(channels));
  }
}

void check_kernel(const Tensor& input, const Tensor& weight, const char* op) {
  const Shape4& in = input.shape();
  const Shape4& w = weight.shape();
  if (w.c != in.c) {
    throw DimensionError("c", std::string(op) + ": input has " + std::to_string(in.c) +
                                  " channels, weight " + w.str() + " expects " + std::to_string(w.c));
  }
  if (w.h == 0 || w.w == 0 || w.n == 0) {
    throw DimensionError("w", std::string(op) + ": empty kernel " + w.str());
  }
}

// Gathers channel-major rows (channels x S*hw) from an NCHW batch slice.
void gather_channels(const double* src, std::size_t b0, std::size_t count, std::size_t channels,
                     std::size_t hw, double* dst) {
  const std::size_t ld = count * hw;
  for (std::size_t s = 0; s < count; ++s) {
    const double* sample = src + (b0 + s) * channels * hw;
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy_n(sample + c * hw, hw, dst + c * ld + s * hw);
    }
  }
}

void scatter_add_channels(const double* src, std::size_t b0, std::size_t count,
                          std::size_t channels, std::size_t hw, double* dst) {
  const std::size_t ld = count * hw;
  for (std::size_t s = 0; s < count; ++s) {
    double* sample = dst + (b0 + s) * channels * hw;
    for (std::size_t c = 0; c < channels; ++c) {
      const double* row = src + c * ld + s * hw;
      double* out = sample + c * hw;
      for (std::size_t p = 0; p < hw; ++p) out[p] += row[p];
    }
  }
}

// Gradient buffers live in shared storage; a const handle may accumulate.
std::span<double> grad_of(const Tensor& t) { return t.mutable_grad(); }

// Direct (polyphase) convolution. A stride-s convolution of a "fine" image
// onto a "coarse" grid splits into s*s stride-1 correlations, one per phase
// of the fine image: tap u lands on phase r(u) at coarse offset d(u), with
// u - pad = s*d(u) + r(u). The transposed op scatters the same taps in the
// other direction. Planes are zero-padded once so every tap is a fixed-width
// row operation with no bounds checks.

using Lane = double __attribute__((vector_size(64)));
constexpr std::size_t kLane = 8;

Lane load_lane(const double* p) {
  Lane v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

// dst[i][j] += sum_q w[q] * src[i * stride + off[q] + j], i < h, j < width.
template <std::size_t kW>
void apply_taps(double* dst, std::size_t h, std::size_t width, const double* src, std::size_t stride,
                const long* off, const double* w, std::size_t taps) {
  for (std::size_t i = 0; i < h; ++i) {
    double* d = dst + i * width;
    const double* row = src + i * stride;
    constexpr std::size_t kL = kW / kLane;
    Lane acc[kL];
    for (std::size_t l = 0; l < kL; ++l) acc[l] = load_lane(d + l * kLane);
    for (std::size_t q = 0; q < taps; ++q) {
      const double* x = row + off[q];
      const double wq = w[q];
      for (std::size_t l = 0; l < kL; ++l) acc[l] += wq * load_lane(x + l * kLane);
    }
    std::memcpy(d, acc, sizeof acc);
  }
}

// acc[q] += sum_{i,j} a[i][j] * b[i * stride + off[q] + j].
template <std::size_t kW>
void dot_taps(const double* a, std::size_t h, std::size_t width, const double* b, std::size_t stride,
              const long* off, std::size_t taps, double* acc) {
  constexpr std::size_t kL = kW / kLane;
  std::vector<Lane> part(taps, Lane{});
  for (std::size_t i = 0; i < h; ++i) {
    Lane x[kL];
    for (std::size_t l = 0; l < kL; ++l) x[l] = load_lane(a + i * width + l * kLane);
    const double* row = b + i * stride;
    for (std::size_t q = 0; q < taps; ++q) {
      const double* y = row + off[q];
      Lane s = part[q];
      for (std::size_t l = 0; l < kL; ++l) s += x[l] * load_lane(y + l * kLane);
      part[q] = s;
    }
  }
  for (std::size_t q = 0; q < taps; ++q) {
    const Lane& s = part[q];
    acc[q] += ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
  }
}

using ApplyFn = void (*)(double*, std::size_t, std::size_t, const double*, std::size_t, const long*, const double*,
                         std::size_t);
using DotFn = void (*)(const double*, std::size_t, std::size_t, const double*, std::size_t, const long*, std::size_t,
                       double*);

// Below 16 columns, or at other widths, the unfolded GEMM route is faster.
bool direct_width(std::size_t width) { return width == 16 || width == 32 || width == 64; }

ApplyFn apply_for(std::size_t width) {
  switch (width) {
    case 64: return apply_taps<64>;
    case 32: return apply_taps<32>;
    default: return apply_taps<16>;
  }
}

DotFn dot_for(std::size_t width) {
  switch (width) {
    case 64: return dot_taps<64>;
    case 32: return dot_taps<32>;
    default: return dot_taps<16>;
  }
}

long floor_div(long a, long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

struct Tap {
  std::size_t q;  // kernel index u * kw + v
  long off;
};

struct PolyGeometry {
  std::size_t fine_h, fine_w, coarse_h, coarse_w;
  std::size_t kh, kw, s, margin;
  std::vector<long> gather_off;              // indexed by q, into a phase-split fine plane
  std::vector<std::vector<Tap>> scatter;     // per fine phase, into a padded coarse plane

  std::size_t stride() const { return coarse_w + 2 * margin; }
  std::size_t phase_size() const { return (coarse_h + 2 * margin) * stride(); }
  std::size_t split_size() const { return s * s * phase_size(); }
  std::size_t coarse_size() const { return coarse_h * coarse_w; }
  std::size_t fine_size() const { return fine_h * fine_w; }

  PolyGeometry(std::size_t fh, std::size_t fw, std::size_t ch, std::size_t cw, std::size_t kh_, std::size_t kw_,
               std::size_t stride_, std::size_t pad)
      : fine_h(fh), fine_w(fw), coarse_h(ch), coarse_w(cw), kh(kh_), kw(kw_), s(stride_), margin(0) {
    const long S = static_cast<long>(s), p = static_cast<long>(pad);
    auto split = [&](std::size_t u) {
      const long t = static_cast<long>(u) - p;
      const long d = floor_div(t, S);
      return std::pair<long, std::size_t>(d, static_cast<std::size_t>(t - d * S));
    };
    for (std::size_t u = 0; u < std::max(kh, kw); ++u) {
      margin = std::max<std::size_t>(margin, static_cast<std::size_t>(std::abs(split(u).first)));
    }
    const long M = static_cast<long>(margin), st = static_cast<long>(stride());
    scatter.resize(s * s);
    for (std::size_t u = 0; u < kh; ++u) {
      const auto [du, ru] = split(u);
      for (std::size_t v = 0; v < kw; ++v) {
        const auto [dv, rv] = split(v);
        const std::size_t phase = ru * s + rv;
        gather_off.push_back(static_cast<long>(phase * phase_size()) + (du + M) * st + (dv + M));
        scatter[phase].push_back({u * kw + v, (M - du) * st + (M - dv)});
      }
    }
  }

  // Splits fine planes into padded phase planes. `out` is resized and its
  // margins kept at zero.
  void split_fine(const double* src, std::size_t planes, std::vector<double>& out) const {
    out.assign(planes * split_size(), 0.0);
    for (std::size_t k = 0; k < planes; ++k) {
      const double* plane = src + k * fine_size();
      double* dst = out.data() + k * split_size();
      for (std::size_t ra = 0; ra < s; ++ra)
        for (std::size_t rb = 0; rb < s; ++rb) {
          double* ph = dst + (ra * s + rb) * phase_size() + margin * stride() + margin;
          for (std::size_t i = 0; i < coarse_h && i * s + ra < fine_h; ++i) {
            const double* row = plane + (i * s + ra) * fine_w;
            double* o = ph + i * stride();
            if (s == 1) {
              std::copy_n(row, fine_w, o);
            } else {
              for (std::size_t j = 0; j < coarse_w && j * s + rb < fine_w; ++j) o[j] = row[j * s + rb];
            }
          }
        }
    }
  }

  // Pads coarse planes by the margin.
  void pad_coarse(const double* src, std::size_t planes, std::vector<double>& out) const {
    out.assign(planes * phase_size(), 0.0);
    for (std::size_t k = 0; k < planes; ++k)
      for (std::size_t i = 0; i < coarse_h; ++i) {
        std::copy_n(src + k * coarse_size() + i * coarse_w, coarse_w,
                    out.data() + k * phase_size() + (i + margin) * stride() + margin);
      }
  }

  // Adds s*s unpadded coarse-sized phase planes into one fine plane.
  void merge_add(const double* phases, double* fine) const {
    for (std::size_t ra = 0; ra < s; ++ra)
      for (std::size_t rb = 0; rb < s; ++rb) {
        const double* ph = phases + (ra * s + rb) * coarse_size();
        for (std::size_t i = 0; i < coarse_h && i * s + ra < fine_h; ++i) {
          double* row = fine + (i * s + ra) * fine_w;
          const double* in = ph + i * coarse_w;
          if (s == 1) {
            for (std::size_t j = 0; j < fine_w; ++j) row[j] += in[j];
          } else {
            for (std::size_t j = 0; j < coarse_w && j * s + rb < fine_w; ++j) row[j * s + rb] += in[j];
          }
        }
      }
  }
};

void add_bias_planes(double* y, const double* b, std::size_t n, std::size_t channels, std::size_t hw) {
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < channels; ++o) {
      double* plane = y + (s * channels + o) * hw;
      for (std::size_t p = 0; p < hw; ++p) plane[p] += b[o];
    }
}

void bias_grad_planes(const double* dy, double* db, std::size_t n, std::size_t channels, std::size_t hw) {
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < channels; ++o) {
      const double* plane = dy + (s * channels + o) * hw;
      double acc = 0.0;
      for (std::size_t p = 0; p < hw; ++p) acc += plane[p];
      db[o] += acc;
    }
}

// The two directions shared by conv2d and conv2d_transpose. `w_index(cc, fc)`
// gives the offset of the kernel linking coarse channel cc and fine channel
// fc; the kernel itself is kh*kw contiguous values.
struct PolyConv {
  PolyGeometry g;
  std::size_t n, coarse_c, fine_c;
  bool coarse_is_out;  // conv2d: weight (coarse_c, fine_c, ...); transpose: (fine_c, coarse_c, ...)

  std::size_t w_index(std::size_t cc, std::size_t fc) const {
    const std::size_t kk = g.kh * g.kw;
    return (coarse_is_out ? cc * fine_c + fc : fc * coarse_c + cc) * kk;
  }

  // Channel loops are folded into the tap lists so each output row stays in
  // registers across every contributing plane.

  // Offsets of all fine-channel taps relative to a sample's split buffer.
  std::vector<long> gather_offsets() const {
    std::vector<long> off;
    for (std::size_t fc = 0; fc < fine_c; ++fc)
      for (long o : g.gather_off) off.push_back(static_cast<long>(fc * g.split_size()) + o);
    return off;
  }

  // coarse[s, cc] += sum_fc taps(fine[s, fc]).
  void gather(const double* fine, const double* w, double* coarse) const {
    const ApplyFn fn = apply_for(g.coarse_w);
    const std::size_t kk = g.kh * g.kw;
    const std::vector<long> off = gather_offsets();
    std::vector<double> wk(coarse_c * fine_c * kk);
    for (std::size_t cc = 0; cc < coarse_c; ++cc)
      for (std::size_t fc = 0; fc < fine_c; ++fc) std::copy_n(w + w_index(cc, fc), kk, &wk[(cc * fine_c + fc) * kk]);
    std::vector<double> split;
    for (std::size_t s = 0; s < n; ++s) {
      g.split_fine(fine + s * fine_c * g.fine_size(), fine_c, split);
      for (std::size_t cc = 0; cc < coarse_c; ++cc) {
        fn(coarse + (s * coarse_c + cc) * g.coarse_size(), g.coarse_h, g.coarse_w, split.data(), g.stride(),
           off.data(), &wk[cc * fine_c * kk], off.size());
      }
    }
  }

  // fine[s, fc] += sum_cc scattered taps(coarse[s, cc]).
  void scatter(const double* coarse, const double* w, double* fine) const {
    const ApplyFn fn = apply_for(g.coarse_w);
    const std::size_t phases = g.s * g.s;
    std::vector<std::vector<long>> off(phases);
    // wk[ph][fc] holds the weights matching off[ph].
    std::vector<std::vector<std::vector<double>>> wk(phases, std::vector<std::vector<double>>(fine_c));
    for (std::size_t ph = 0; ph < phases; ++ph) {
      for (std::size_t cc = 0; cc < coarse_c; ++cc) {
        for (const Tap& t : g.scatter[ph]) {
          off[ph].push_back(static_cast<long>(cc * g.phase_size()) + t.off);
          for (std::size_t fc = 0; fc < fine_c; ++fc) wk[ph][fc].push_back(w[w_index(cc, fc) + t.q]);
        }
      }
    }
    std::vector<double> tmp(phases * g.coarse_size());
    std::vector<double> padded;
    for (std::size_t s = 0; s < n; ++s) {
      g.pad_coarse(coarse + s * coarse_c * g.coarse_size(), coarse_c, padded);
      for (std::size_t fc = 0; fc < fine_c; ++fc) {
        std::fill(tmp.begin(), tmp.end(), 0.0);
        const double* src = padded.data();
        for (std::size_t ph = 0; ph < phases; ++ph) {
          if (off[ph].empty()) continue;
          fn(tmp.data() + ph * g.coarse_size(), g.coarse_h, g.coarse_w, src, g.stride(), off[ph].data(),
             wk[ph][fc].data(), off[ph].size());
        }
        g.merge_add(tmp.data(), fine + (s * fine_c + fc) * g.fine_size());
      }
    }
  }

  // dw[kernel(cc, fc)] += sum_s correlate(coarse[s, cc], fine[s, fc]).
  void weight_grad(const double* coarse, const double* fine, double* dw) const {
    const DotFn fn = dot_for(g.coarse_w);
    const std::size_t kk = g.kh * g.kw;
    const std::vector<long> off = gather_offsets();
    std::vector<double> acc(coarse_c * fine_c * kk, 0.0);
    std::vector<double> split;
    for (std::size_t s = 0; s < n; ++s) {
      g.split_fine(fine + s * fine_c * g.fine_size(), fine_c, split);
      for (std::size_t cc = 0; cc < coarse_c; ++cc) {
        fn(coarse + (s * coarse_c + cc) * g.coarse_size(), g.coarse_h, g.coarse_w, split.data(), g.stride(),
           off.data(), off.size(), &acc[cc * fine_c * kk]);
      }
    }
    for (std::size_t cc = 0; cc < coarse_c; ++cc)
      for (std::size_t fc = 0; fc < fine_c; ++fc)
        for (std::size_t q = 0; q < kk; ++q) dw[w_index(cc, fc) + q] += acc[(cc * fine_c + fc) * kk + q];
  }
};

// conv2d (transposed = false) maps fine input to coarse output; the
// transpose maps coarse input to fine output.
Tensor poly_conv(const Tensor& input, const Tensor& weight, const Tensor& bias, const PolyConv& pc,
                 bool transposed, Tape* tape) {
  const std::size_t out_c = weight.shape().n;
  const std::size_t out_hw = transposed ? pc.g.fine_size() : pc.g.coarse_size();
  const Shape4 out_shape = transposed ? Shape4{pc.n, out_c, pc.g.fine_h, pc.g.fine_w}
                                      : Shape4{pc.n, out_c, pc.g.coarse_h, pc.g.coarse_w};
  Tensor out(out_shape);
  double* y = out.mutable_values().data();
  if (transposed) {
    pc.scatter(input.values().data(), weight.values().data(), y);
  } else {
    pc.gather(input.values().data(), weight.values().data(), y);
  }
  add_bias_planes(y, bias.values().data(), pc.n, out_c, out_hw);

  if (Tape::wants(tape, {&input, &weight, &bias})) {
    tape->record({input, weight, bias}, out, [input, weight, bias, out, pc, transposed, out_c, out_hw]() mutable {
      const double* dy = out.grad().data();
      const double* w = weight.values().data();
      if (input.requires_grad()) {
        if (transposed) {
          pc.gather(dy, w, grad_of(input).data());
        } else {
          pc.scatter(dy, w, grad_of(input).data());
        }
      }
      if (weight.requires_grad()) {
        std::vector<double> dw(weight.numel(), 0.0);
        if (transposed) {
          pc.weight_grad(input.values().data(), dy, dw.data());
        } else {
          pc.weight_grad(dy, input.values().data(), dw.data());
        }
        auto gw = grad_of(weight);
        for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += dw[i];
      }
      if (bias.requires_grad()) bias_grad_planes(dy, grad_of(bias).data(), pc.n, out_c, out_hw);
    });
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad, Tape* tape) {
  if (stride == 0) throw DimensionError("stride", "conv2d: stride must be positive");
  check_kernel(input, weight, "conv2d");
  const Shape4 in = input.shape();
  const Shape4 ws = weight.shape();
  check_bias(bias, ws.n, "conv2d");
  if (direct_width(strided_extent(in.w, stride))) {
    const std::size_t oh = strided_extent(in.h, stride), ow = strided_extent(in.w, stride);
    const PolyConv pc{PolyGeometry(in.h, in.w, oh, ow, ws.h, ws.w, stride, pad), in.n, ws.n, in.c, true};
    return poly_conv(input, weight, bias, pc, false, tape);
  }

  const Geometry g{in.c, in.h, in.w, ws.h, ws.w, stride, pad,
                   strided_extent(in.h, stride), strided_extent(in.w, stride)};
  const std::size_t out_c = ws.n;
  const std::size_t hw = g.positions();
  Tensor out(Shape4{in.n, out_c, g.out_h, g.out_w});

  const ConstMap wmat(weight.values().data(), out_c, g.rows());
  const double* x = input.values().data();
  const double* b = bias.values().data();
  double* y = out.mutable_values().data();

  const std::size_t chunk = chunk_size(in.n, g.rows() * hw);
  RowMat cols, res;
  for (std::size_t b0 = 0; b0 < in.n; b0 += chunk) {
    const std::size_t count = std::min(chunk, in.n - b0);
    const std::size_t ld = count * hw;
    cols.resize(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(ld));
    for (std::size_t s = 0; s < count; ++s) {
      im2col(x + (b0 + s) * in.per_sample(), g, cols.data(), ld, s * hw);
    }
    res.noalias() = wmat * cols;
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t o = 0; o < out_c; ++o) {
        double* dst = y + ((b0 + s) * out_c + o) * hw;
        const double* r = res.data() + o * ld + s * hw;
        for (std::size_t p = 0; p < hw; ++p) dst[p] = r[p] + b[o];
      }
    }
  }

  if (Tape::wants(tape, {&input, &weight, &bias})) {
    tape->record({input, weight, bias}, out, [input, weight, bias, out, g, chunk]() mutable {
      const Shape4 in = input.shape();
      const std::size_t out_c = weight.shape().n;
      const std::size_t hw = g.positions();
      const double* dy = out.grad().data();
      const ConstMap wmat(weight.values().data(), out_c, g.rows());
      RowMat grad_rows, cols, dcols;
      RowMat dw = RowMat::Zero(static_cast<Eigen::Index>(out_c), static_cast<Eigen::Index>(g.rows()));
      for (std::size_t b0 = 0; b0 < in.n; b0 += chunk) {
        const std::size_t count = std::min(chunk, in.n - b0);
        const std::size_t ld = count * hw;
        grad_rows.resize(static_cast<Eigen::Index>(out_c), static_cast<Eigen::Index>(ld));
        gather_channels(dy, b0, count, out_c, hw, grad_rows.data());
        if (weight.requires_grad()) {
          cols.resize(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(ld));
          for (std::size_t s = 0; s < count; ++s) {
            im2col(input.values().data() + (b0 + s) * in.per_sample(), g, cols.data(), ld, s * hw);
          }
          dw.noalias() += grad_rows * cols.transpose();
        }
        if (bias.requires_grad()) {
          auto db = grad_of(bias);
          for (std::size_t o = 0; o < out_c; ++o) db[o] += grad_rows.row(static_cast<Eigen::Index>(o)).sum();
        }
        if (input.requires_grad()) {
          dcols.noalias() = wmat.transpose() * grad_rows;
          double* dx = grad_of(input).data();
          for (std::size_t s = 0; s < count; ++s) {
            col2im(dcols.data(), ld, s * hw, g, dx + (b0 + s) * in.per_sample());
          }
        }
      }
      if (weight.requires_grad()) {
        Map(grad_of(weight).data(), static_cast<Eigen::Index>(out_c),
            static_cast<Eigen::Index>(g.rows())) += dw;
      }
    });
  }
  return out;
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        std::size_t up, std::size_t pad, Tape* tape) {
  if (up == 0) throw DimensionError("stride", "conv2d_transpose: upsampling factor must be positive");
  const Shape4 in = input.shape();
  const Shape4 ws = weight.shape();
  if (ws.c != in.c) {
    throw DimensionError("c", "conv2d_transpose: input has " + std::to_string(in.c) +
                                  " channels, weight " + ws.str() + " expects " + std::to_string(ws.c));
  }
  if (ws.h == 0 || ws.w == 0 || ws.n == 0) {
    throw DimensionError("w", "conv2d_transpose: empty kernel " + ws.str());
  }
  const std::size_t out_c = ws.n;
  check_bias(bias, out_c, "conv2d_transpose");
  if (direct_width(in.w)) {
    const PolyConv pc{PolyGeometry(up * in.h, up * in.w, in.h, in.w, ws.h, ws.w, up, pad), in.n, in.c, out_c, false};
    return poly_conv(input, weight, bias, pc, true, tape);
  }

  // Geometry of the strided conv this op is the adjoint of: it unfolds the
  // (out_c, up*h, up*w) output onto the (h, w) input grid.
  const Geometry g{out_c, up * in.h, up * in.w, ws.h, ws.w, up, pad, in.h, in.w};
  const std::size_t kk = ws.h * ws.w;
  const std::size_t hw = in.h * in.w;
  const std::size_t out_hw = g.height * g.width;

  // Permuted weight: wp(c, (o, u, v)) = weight[o, c, u, v].
  auto permuted = std::make_shared<RowMat>(static_cast<Eigen::Index>(in.c),
                                           static_cast<Eigen::Index>(g.rows()));
  {
    const double* w = weight.values().data();
    for (std::size_t o = 0; o < out_c; ++o)
      for (std::size_t c = 0; c < in.c; ++c)
        for (std::size_t q = 0; q < kk; ++q)
          (*permuted)(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(o * kk + q)) =
              w[(o * in.c + c) * kk + q];
  }

  Tensor out(Shape4{in.n, out_c, g.height, g.width});
  double* y = out.mutable_values().data();
  const double* b = bias.values().data();
  const std::size_t chunk = chunk_size(in.n, g.rows() * hw);
  RowMat xm, cols;
  for (std::size_t b0 = 0; b0 < in.n; b0 += chunk) {
    const std::size_t count = std::min(chunk, in.n - b0);
    const std::size_t ld = count * hw;
    xm.resize(static_cast<Eigen::Index>(in.c), static_cast<Eigen::Index>(ld));
    gather_channels(input.values().data(), b0, count, in.c, hw, xm.data());
    cols.noalias() = permuted->transpose() * xm;
    for (std::size_t s = 0; s < count; ++s) {
      double* sample = y + (b0 + s) * out_c * out_hw;
      col2im(cols.data(), ld, s * hw, g, sample);
      for (std::size_t o = 0; o < out_c; ++o) {
        double* plane = sample + o * out_hw;
        for (std::size_t p = 0; p < out_hw; ++p) plane[p] += b[o];
      }
    }
  }

  if (Tape::wants(tape, {&input, &weight, &bias})) {
    tape->record({input, weight, bias}, out,
                 [input, weight, bias, out, g, chunk, permuted, kk]() mutable {
      const Shape4 in = input.shape();
      const std::size_t out_c = weight.shape().n;
      const std::size_t hw = in.h * in.w;
      const std::size_t out_hw = g.height * g.width;
      const double* dy = out.grad().data();
      RowMat dcols, xm, dxm;
      RowMat dwp = RowMat::Zero(static_cast<Eigen::Index>(in.c), static_cast<Eigen::Index>(g.rows()));
      for (std::size_t b0 = 0; b0 < in.n; b0 += chunk) {
        const std::size_t count = std::min(chunk, in.n - b0);
        const std::size_t ld = count * hw;
        dcols.resize(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(ld));
        for (std::size_t s = 0; s < count; ++s) {
          im2col(dy + (b0 + s) * out_c * out_hw, g, dcols.data(), ld, s * hw);
        }
        if (input.requires_grad()) {
          dxm.noalias() = *permuted * dcols;
          scatter_add_channels(dxm.data(), b0, count, in.c, hw, grad_of(input).data());
        }
        if (weight.requires_grad()) {
          xm.resize(static_cast<Eigen::Index>(in.c), static_cast<Eigen::Index>(ld));
          gather_channels(input.values().data(), b0, count, in.c, hw, xm.data());
          dwp.noalias() += xm * dcols.transpose();
        }
      }
      if (weight.requires_grad()) {
        double* dw = grad_of(weight).data();
        for (std::size_t o = 0; o < out_c; ++o)
          for (std::size_t c = 0; c < in.c; ++c)
            for (std::size_t q = 0; q < kk; ++q)
              dw[(o * in.c + c) * kk + q] +=
                  dwp(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(o * kk + q));
      }
      if (bias.requires_grad()) {
        auto db = grad_of(bias);
        for (std::size_t s = 0; s < in.n; ++s)
          for (std::size_t o = 0; o < out_c; ++o) {
            const double* plane = dy + (s * out_c + o) * out_hw;
            double acc = 0.0;
            for (std::size_t p = 0; p < out_hw; ++p) acc += plane[p];
            db[o] += acc;
          }
      }
    });
  }
  return out;
}

namespace {

void check_affine_params(const Tensor& input, const Tensor& gamma, const Tensor& beta) {
  const std::size_t c = input.shape().c;
  if (gamma.numel() != c) throw DimensionError("c", "batch_norm: gamma length does not match channels");
  if (beta.numel() != c) throw DimensionError("c", "batch_norm: beta length does not match channels");
}

struct NormCache {
  std::vector<double> xhat;
  std::vector<double> inv_std;
};

}  // namespace

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode, Tape* tape, bool update_running) {
  if (mode == Mode::kEval) return batch_norm_eval(input, gamma, beta, state, tape);
  BatchNormState* running = update_running ? &state : nullptr;
  check_affine_params(input, gamma, beta);
  const Shape4 s = input.shape();
  const std::size_t hw = s.h * s.w;
  const std::size_t count = s.n * hw;
  if (count < 2) {
    throw DimensionError("n", "batch_norm: train mode needs at least two values per channel, shape " + s.str());
  }
  const double eps = state.eps;

  auto cache = std::make_shared<NormCache>();
  cache->xhat.resize(s.numel());
  cache->inv_std.resize(s.c);
  Tensor out(s);
  const double* x = input.values().data();
  double* y = out.mutable_values().data();
  const double* gm = gamma.values().data();
  const double* bt = beta.values().data();

  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = 0.0;
    for (std::size_t b = 0; b < s.n; ++b) {
      const double* plane = x + (b * s.c + c) * hw;
      for (std::size_t p = 0; p < hw; ++p) mean += plane[p];
    }
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t b = 0; b < s.n; ++b) {
      const double* plane = x + (b * s.c + c) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        const double d = plane[p] - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(count);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    cache->inv_std[c] = inv_std;
    for (std::size_t b = 0; b < s.n; ++b) {
      const std::size_t base = (b * s.c + c) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        const double xh = (x[base + p] - mean) * inv_std;
        cache->xhat[base + p] = xh;
        y[base + p] = gm[c] * xh + bt[c];
      }
    }
    if (running != nullptr) {
      const double m = running->momentum;
      const double unbiased = var * static_cast<double>(count) / static_cast<double>(count - 1);
      auto rm = running->running_mean.mutable_values();
      auto rv = running->running_var.mutable_values();
      rm[c] = m * rm[c] + (1.0 - m) * mean;
      rv[c] = m * rv[c] + (1.0 - m) * unbiased;
    }
  }

  if (Tape::wants(tape, {&input, &gamma, &beta})) {
    tape->record({input, gamma, beta}, out, [input, gamma, beta, out, cache]() mutable {
      const Shape4 s = input.shape();
      const std::size_t hw = s.h * s.w;
      const double count = static_cast<double>(s.n * hw);
      const double* dy = out.grad().data();
      const double* gm = gamma.values().data();
      for (std::size_t c = 0; c < s.c; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < s.n; ++b) {
          const std::size_t base = (b * s.c + c) * hw;
          for (std::size_t p = 0; p < hw; ++p) {
            sum_dy += dy[base + p];
            sum_dy_xhat += dy[base + p] * cache->xhat[base + p];
          }
        }
        if (gamma.requires_grad()) grad_of(gamma)[c] += sum_dy_xhat;
        if (beta.requires_grad()) grad_of(beta)[c] += sum_dy;
        if (input.requires_grad()) {
          double* dx = grad_of(input).data();
          const double k = gm[c] * cache->inv_std[c] / count;
          for (std::size_t b = 0; b < s.n; ++b) {
            const std::size_t base = (b * s.c + c) * hw;
            for (std::size_t p = 0; p < hw; ++p) {
              dx[base + p] += k * (count * dy[base + p] - sum_dy - cache->xhat[base + p] * sum_dy_xhat);
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor batch_norm_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       const BatchNormState& running, Tape* tape) {
  check_affine_params(input, gamma, beta);
  const Shape4 s = input.shape();
  if (running.running_mean.numel() != s.c || running.running_var.numel() != s.c) {
    throw DimensionError("c", "batch_norm: running statistics do not match channels");
  }
  const std::size_t hw = s.h * s.w;
  auto cache = std::make_shared<NormCache>();
  cache->xhat.resize(s.numel());
  cache->inv_std.resize(s.c);
  Tensor out(s);
  const double* x = input.values().data();
  double* y = out.mutable_values().data();
  const double* gm = gamma.values().data();
  const double* bt = beta.values().data();
  const auto rm = running.running_mean.values();
  const auto rv = running.running_var.values();
  for (std::size_t c = 0; c < s.c; ++c) {
    const double inv_std = 1.0 / std::sqrt(rv[c] + running.eps);
    cache->inv_std[c] = inv_std;
    for (std::size_t b = 0; b < s.n; ++b) {
      const std::size_t base = (b * s.c + c) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        const double xh = (x[base + p] - rm[c]) * inv_std;
        cache->xhat[base + p] = xh;
        y[base + p] = gm[c] * xh + bt[c];
      }
    }
  }
  if (Tape::wants(tape, {&input, &gamma, &beta})) {
    tape->record({input, gamma, beta}, out, [input, gamma, beta, out, cache]() mutable {
      const Shape4 s = input.shape();
      const std::size_t hw = s.h * s.w;
      const double* dy = out.grad().data();
      const double* gm = gamma.values().data();
      for (std::size_t c = 0; c < s.c; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < s.n; ++b) {
          const std::size_t base = (b * s.c + c) * hw;
          for (std::size_t p = 0; p < hw; ++p) {
            sum_dy += dy[base + p];
            sum_dy_xhat += dy[base + p] * cache->xhat[base + p];
          }
        }
        if (gamma.requires_grad()) grad_of(gamma)[c] += sum_dy_xhat;
        if (beta.requires_grad()) grad_of(beta)[c] += sum_dy;
        if (input.requires_grad()) {
          double* dx = grad_of(input).data();
          const double k = gm[c] * cache->inv_std[c];
          for (std::size_t b = 0; b < s.n; ++b) {
            const std::size_t base = (b * s.c + c) * hw;
            for (std::size_t p = 0; p < hw; ++p) dx[base + p] += k * dy[base + p];
          }
        }
      }
    });
  }
  return out;
}

Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias, Tape* tape) {
  const Shape4 in = input.shape();
  const Shape4 ws = weight.shape();
  const std::size_t in_features = in.per_sample();
  if (ws.c * ws.h * ws.w != in_features) {
    throw DimensionError("in_features", "fully_connected: input carries " + std::to_string(in_features) +
                                            " features per sample, weight " + ws.str() + " expects " +
                                            std::to_string(ws.c * ws.h * ws.w));
  }
  const std::size_t out_features = ws.n;
  check_bias(bias, out_features, "fully_connected");

  Tensor out(Shape4{in.n, out_features, 1, 1});
  const ConstMap x(input.values().data(), in.n, in_features);
  const ConstMap w(weight.values().data(), out_features, in_features);
  Map y(out.mutable_values().data(), in.n, out_features);
  y.noalias() = x * w.transpose();
  const double* b = bias.values().data();
  for (std::size_t i = 0; i < in.n; ++i)
    for (std::size_t o = 0; o < out_features; ++o) y(i, o) += b[o];

  if (Tape::wants(tape, {&input, &weight, &bias})) {
    tape->record({input, weight, bias}, out, [input, weight, bias, out]() mutable {
      const std::size_t n = input.shape().n;
      const std::size_t in_features = input.shape().per_sample();
      const std::size_t out_features = weight.shape().n;
      const ConstMap dy(out.grad().data(), n, out_features);
      if (input.requires_grad()) {
        const ConstMap w(weight.values().data(), out_features, in_features);
        Map(grad_of(input).data(), n, in_features).noalias() += dy * w;
      }
      if (weight.requires_grad()) {
        const ConstMap x(input.values().data(), n, in_features);
        Map(grad_of(weight).data(), out_features, in_features).noalias() += dy.transpose() * x;
      }
      if (bias.requires_grad()) {
        auto db = grad_of(bias);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t o = 0; o < out_features; ++o) db[o] += dy(i, o);
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& input, Tape* tape) {
  Tensor out(input.shape());
  auto x = input.values();
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (Tape::wants(tape, {&input})) {
    tape->record({input}, out, [input, out]() mutable {
      auto x = input.values();
      auto dy = out.grad();
      auto dx = grad_of(input);
      // Subgradient at 0 is 0.
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > 0.0) dx[i] += dy[i];
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& input, Tape* tape) {
  // Keeps outputs inside the open interval even when exp() saturates.
  constexpr double kLow = std::numeric_limits<double>::min();
  constexpr double kHigh = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  Tensor out(input.shape());
  auto x = input.values();
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v;
    if (x[i] >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-x[i]));
    } else {
      const double e = std::exp(x[i]);
      v = e / (1.0 + e);
    }
    y[i] = std::clamp(v, kLow, kHigh);
  }
  if (Tape::wants(tape, {&input})) {
    tape->record({input}, out, [input, out]() mutable {
      auto y = out.values();
      auto dy = out.grad();
      auto dx = grad_of(input);
      for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
    });
  }
  return out;
}

Tensor reshape(const Tensor& input, Shape4 shape, Tape* tape) {
  if (shape.numel() != input.numel()) {
    throw DimensionError("numel", "reshape: cannot view " + input.shape().str() + " as " + shape.str());
  }
  auto v = input.values();
  Tensor out(shape, std::vector<double>(v.begin(), v.end()));
  if (Tape::wants(tape, {&input})) {
    tape->record({input}, out, [input, out]() mutable {
      auto dy = out.grad();
      auto dx = grad_of(input);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& input, Tape* tape) {
  double acc = 0.0;
  for (double v : input.values()) acc += v;
  Tensor out(Shape4::scalar(), std::vector<double>{acc});
  if (Tape::wants(tape, {&input})) {
    tape->record({input}, out, [input, out]() mutable {
      const double g = out.grad()[0];
      for (double& d : grad_of(input)) d += g;
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.shape() != b.shape()) {
    throw DimensionError("numel", "mul: shapes " + a.shape().str() + " and " + b.shape().str() + " differ");
  }
  Tensor out(a.shape());
  auto x = a.values();
  auto z = b.values();
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i];
  if (Tape::wants(tape, {&a, &b})) {
    tape->record({a, b}, out, [a, b, out]() mutable {
      auto dy = out.grad();
      if (a.requires_grad()) {
        auto da = grad_of(a);
        auto bv = b.values();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto db = grad_of(b);
        auto av = a.values();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& input, double factor, Tape* tape) {
  Tensor out(input.shape());
  auto x = input.values();
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * factor;
  if (Tape::wants(tape, {&input})) {
    tape->record({input}, out, [input, out, factor]() mutable {
      auto dy = out.grad();
      auto dx = grad_of(input);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
    });
  }
  return out;
}

Tensor concat_batch(const Tensor& a, const Tensor& b, Tape* tape) {
  const Shape4 sa = a.shape(), sb = b.shape();
  if (sa.c != sb.c || sa.h != sb.h || sa.w != sb.w) {
    throw DimensionError("c", "concat_batch: per-sample shapes " + sa.str() + " and " + sb.str() + " differ");
  }
  std::vector<double> v(a.values().begin(), a.values().end());
  v.insert(v.end(), b.values().begin(), b.values().end());
  Tensor out(Shape4{sa.n + sb.n, sa.c, sa.h, sa.w}, std::move(v));
  if (Tape::wants(tape, {&a, &b})) {
    tape->record({a, b}, out, [a, b, out]() mutable {
      auto dy = out.grad();
      const std::size_t na = a.numel();
      if (a.requires_grad()) {
        auto da = grad_of(a);
        for (std::size_t i = 0; i < na; ++i) da[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto db = grad_of(b);
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[na + i];
      }
    });
  }
  return out;
}

}  // namespace skgan::ops
