#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "skgan/data.hpp"
#include "skgan/retrieval.hpp"
#include "skgan/tensor.hpp"

namespace skgan::bench {

// Image transforms on (1,1,64,64) tensors. Pixel (x, y) is column x, row y;
// rotation and scaling are about (31.5, 31.5) with bilinear sampling and
// zero outside the source image.

// Positive angles turn the image counter-clockwise as displayed (rows down).
Tensor rotate(const Tensor& image, double degrees);
// factor in [0.5, 1.5]; < 1 shrinks towards the centre, > 1 enlarges and crops.
Tensor rescale(const Tensor& image, double factor);
// Content moves dx columns right and dy rows down; vacated pixels are 0.
Tensor shift(const Tensor& image, int dx, int dy);

enum class SweepKind { kRotation, kScale, kShift };

const char* sweep_name(SweepKind kind);
SweepKind sweep_kind(const std::string& name);

struct SweepPoint {
  double p1 = 0.0;
  double p2 = 0.0;  // dy for shift sweeps, unused otherwise
};

struct SweepSpec {
  SweepKind kind = SweepKind::kRotation;
  // Inclusive range; shift sweeps use it on both axes.
  double lo = -10.0;
  double hi = 10.0;
  double step = 0.5;
  std::size_t probes = 100;
  std::uint64_t seed = 0;

  static SweepSpec rotation();
  static SweepSpec scale();
  static SweepSpec shift();
  static SweepSpec defaults(SweepKind kind);

  void validate() const;
  std::size_t axis_count() const;
  // Rotation and scale: one point per step. Shift: dy-major grid, dx inner.
  std::vector<SweepPoint> points() const;
  // Index of the identity transform among points().
  std::size_t identity_index() const;
};

Tensor apply(SweepKind kind, const Tensor& image, const SweepPoint& p);

struct InvarianceReport {
  SweepSpec spec;
  std::string encoder_id;
  std::string dataset_hash;
  std::vector<SweepPoint> points;
  std::vector<std::string> probe_ids;
  // raw[probe][point]
  std::vector<std::vector<double>> raw;
  // Over probes; population standard deviation.
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Probe indices: Fisher-Yates prefix of the store indices under the seed.
std::vector<std::size_t> draw_probes(std::size_t store_size, std::size_t probes, std::uint64_t seed);

InvarianceReport run_sweep(const retrieval::Encoder& enc, const data::SampleStore& store, const SweepSpec& spec);

// "param1,param2,mean_similarity,std_similarity"; param2 empty for 1-D sweeps.
void write_report_csv(std::ostream& out, const InvarianceReport& r);
// "probe,identifier,param1,param2,similarity".
void write_raw_csv(std::ostream& out, const InvarianceReport& r);
// Mean similarity grid: rows dy ascending, columns dx ascending.
void write_shift_grid_csv(std::ostream& out, const InvarianceReport& r);
// "param1,param2,<name>_mean,<name>_std,..." for reports over identical points.
void write_comparison_csv(std::ostream& out, const std::vector<std::string>& names,
                          const std::vector<const InvarianceReport*>& reports);

}  // namespace skgan::bench
