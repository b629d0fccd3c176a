#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "skgan/errors.hpp"
#include "skgan/invariance.hpp"

namespace skgan::bench {

namespace {

// Encoding batch size; bounds the activation memory of the large first layers.
constexpr std::size_t kChunk = 64;

std::string fmt_param(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string params(const InvarianceReport& r, std::size_t i) {
  const SweepPoint& p = r.points[i];
  if (r.spec.kind == SweepKind::kShift) return fmt_param(p.p1) + ',' + fmt_param(p.p2);
  return fmt_param(p.p1) + ',';
}

}  // namespace

const char* sweep_name(SweepKind kind) {
  switch (kind) {
    case SweepKind::kRotation: return "rotation";
    case SweepKind::kScale: return "scale";
    case SweepKind::kShift: return "shift";
  }
  return "?";
}

SweepKind sweep_kind(const std::string& name) {
  if (name == "rotation") return SweepKind::kRotation;
  if (name == "scale") return SweepKind::kScale;
  if (name == "shift") return SweepKind::kShift;
  throw std::invalid_argument("unknown sweep \"" + name + "\" (rotation, scale or shift)");
}

SweepSpec SweepSpec::rotation() { return {SweepKind::kRotation, -10.0, 10.0, 0.5}; }
SweepSpec SweepSpec::scale() { return {SweepKind::kScale, 0.5, 1.5, 0.05}; }
SweepSpec SweepSpec::shift() { return {SweepKind::kShift, -10.0, 10.0, 1.0}; }

SweepSpec SweepSpec::defaults(SweepKind kind) {
  switch (kind) {
    case SweepKind::kRotation: return rotation();
    case SweepKind::kScale: return scale();
    case SweepKind::kShift: return shift();
  }
  return rotation();
}

void SweepSpec::validate() const {
  if (!(step > 0.0)) throw std::invalid_argument("sweep step must be positive");
  if (!(hi >= lo)) throw std::invalid_argument("sweep range is empty");
  if (probes < 1) throw std::invalid_argument("sweep needs at least one probe");
  const double n = (hi - lo) / step;
  if (std::abs(n - std::round(n)) > 1e-9) throw std::invalid_argument("sweep range is not a whole number of steps");
  if (kind == SweepKind::kScale && (lo < 0.5 || hi > 1.5)) {
    throw std::invalid_argument("scale sweep must stay within [0.5, 1.5]");
  }
  if (kind == SweepKind::kShift && (lo != std::round(lo) || step != std::round(step))) {
    throw std::invalid_argument("shift sweep needs integer offsets");
  }
  identity_index();
}

std::size_t SweepSpec::axis_count() const {
  return static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
}

std::vector<SweepPoint> SweepSpec::points() const {
  const std::size_t n = axis_count();
  // Interpolating from both ends keeps the endpoints and midpoint exact.
  std::vector<double> axis(n);
  for (std::size_t i = 0; i < n; ++i) {
    axis[i] = n == 1 ? lo : (lo * static_cast<double>(n - 1 - i) + hi * static_cast<double>(i)) /
                                static_cast<double>(n - 1);
  }
  std::vector<SweepPoint> pts;
  if (kind == SweepKind::kShift) {
    for (double dy : axis) {
      for (double dx : axis) pts.push_back({dx, dy});
    }
  } else {
    for (double v : axis) pts.push_back({v, 0.0});
  }
  return pts;
}

std::size_t SweepSpec::identity_index() const {
  const double id = kind == SweepKind::kScale ? 1.0 : 0.0;
  const std::vector<SweepPoint> pts = points();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].p1 == id && (kind != SweepKind::kShift || pts[i].p2 == 0.0)) return i;
  }
  throw std::invalid_argument(std::string(sweep_name(kind)) + " sweep does not contain the identity transform");
}

Tensor apply(SweepKind kind, const Tensor& image, const SweepPoint& p) {
  switch (kind) {
    case SweepKind::kRotation: return rotate(image, p.p1);
    case SweepKind::kScale: return rescale(image, p.p1);
    case SweepKind::kShift: return shift(image, static_cast<int>(p.p1), static_cast<int>(p.p2));
  }
  return image.clone();
}

std::vector<std::size_t> draw_probes(std::size_t store_size, std::size_t probes, std::uint64_t seed) {
  if (probes > store_size) {
    throw std::invalid_argument("dataset has " + std::to_string(store_size) + " samples, fewer than " +
                                std::to_string(probes) + " probes; lower --probes");
  }
  std::vector<std::size_t> idx(store_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < probes; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (store_size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(probes);
  return idx;
}

InvarianceReport run_sweep(const retrieval::Encoder& enc, const data::SampleStore& store, const SweepSpec& spec) {
  spec.validate();
  InvarianceReport r;
  r.spec = spec;
  r.encoder_id = enc.id();
  r.dataset_hash = store.hash();
  r.points = spec.points();
  const std::size_t npts = r.points.size();
  const std::vector<std::size_t> probes = draw_probes(store.size(), spec.probes, spec.seed);

  const Shape4 one = store.image(probes.front()).shape();
  for (std::size_t probe : probes) {
    const Tensor& image = store.image(probe);
    r.probe_ids.push_back(store.id(probe));
    const retrieval::Embedding base = enc.encode(image);
    std::vector<double> curve;
    curve.reserve(npts);
    for (std::size_t start = 0; start < npts; start += kChunk) {
      const std::size_t end = std::min(npts, start + kChunk);
      Tensor batch(Shape4{end - start, one.c, one.h, one.w});
      auto dst = batch.mutable_values();
      const std::size_t per = one.numel();
      for (std::size_t i = start; i < end; ++i) {
        const Tensor t = apply(spec.kind, image, r.points[i]);
        std::copy(t.values().begin(), t.values().end(), dst.begin() + static_cast<std::ptrdiff_t>((i - start) * per));
      }
      for (const retrieval::Embedding& e : enc.encode_batch(batch)) curve.push_back(retrieval::similarity(base, e));
    }
    r.raw.push_back(std::move(curve));
  }

  r.mean.assign(npts, 0.0);
  r.stddev.assign(npts, 0.0);
  const double np = static_cast<double>(probes.size());
  for (std::size_t j = 0; j < npts; ++j) {
    double s = 0.0;
    for (const auto& c : r.raw) s += c[j];
    const double m = s / np;
    double ss = 0.0;
    for (const auto& c : r.raw) ss += (c[j] - m) * (c[j] - m);
    r.mean[j] = m;
    r.stddev[j] = std::sqrt(ss / np);
  }
  return r;
}

void write_report_csv(std::ostream& out, const InvarianceReport& r) {
  out << "param1,param2,mean_similarity,std_similarity\n";
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    out << params(r, i) << ',' << fmt_value(r.mean[i]) << ',' << fmt_value(r.stddev[i]) << '\n';
  }
}

void write_raw_csv(std::ostream& out, const InvarianceReport& r) {
  out << "probe,identifier,param1,param2,similarity\n";
  for (std::size_t p = 0; p < r.raw.size(); ++p) {
    for (std::size_t i = 0; i < r.points.size(); ++i) {
      out << p << ',' << r.probe_ids[p] << ',' << params(r, i) << ',' << fmt_value(r.raw[p][i]) << '\n';
    }
  }
}

void write_shift_grid_csv(std::ostream& out, const InvarianceReport& r) {
  if (r.spec.kind != SweepKind::kShift) throw std::invalid_argument("shift grid needs a shift sweep report");
  const std::size_t n = r.spec.axis_count();
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t col = 0; col < n; ++col) {
      if (col) out << ',';
      out << fmt_value(r.mean[row * n + col]);
    }
    out << '\n';
  }
}

void write_comparison_csv(std::ostream& out, const std::vector<std::string>& names,
                          const std::vector<const InvarianceReport*>& reports) {
  if (names.size() != reports.size() || reports.empty()) {
    throw std::invalid_argument("comparison needs one name per report");
  }
  const InvarianceReport& first = *reports.front();
  for (const InvarianceReport* r : reports) {
    bool same = r->spec.kind == first.spec.kind && r->points.size() == first.points.size();
    for (std::size_t i = 0; same && i < r->points.size(); ++i) {
      same = r->points[i].p1 == first.points[i].p1 && r->points[i].p2 == first.points[i].p2;
    }
    if (!same) throw std::invalid_argument("reports being compared cover different sweep points");
  }
  out << "param1,param2";
  for (const std::string& n : names) out << ',' << n << "_mean," << n << "_std";
  out << '\n';
  for (std::size_t i = 0; i < first.points.size(); ++i) {
    out << params(first, i);
    for (const InvarianceReport* r : reports) out << ',' << fmt_value(r->mean[i]) << ',' << fmt_value(r->stddev[i]);
    out << '\n';
  }
}

}  // namespace skgan::bench
