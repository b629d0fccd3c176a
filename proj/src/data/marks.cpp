#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "skgan/data.hpp"
#include "skgan/errors.hpp"

namespace skgan::data {

namespace {

using Stroke = std::vector<Point>;

Stroke arc(double cx, double cy, double r, double from_deg, double to_deg, int segments) {
  Stroke s;
  for (int i = 0; i <= segments; ++i) {
    const double a = (from_deg + (to_deg - from_deg) * i / segments) * std::numbers::pi / 180.0;
    s.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return s;
}

std::vector<Part> make_library() {
  std::vector<Part> lib = {
      {0, "staff", {{{0.0, -1.0}, {0.0, 1.0}}}},
      {1, "crossbar", {{{-0.6, 0.0}, {0.6, 0.0}}}},
      {2, "high crossbar", {{{-0.5, -0.55}, {0.5, -0.55}}}},
      {3, "chevron up", {{{-0.6, 0.3}, {0.0, -0.3}, {0.6, 0.3}}}},
      {4, "chevron down", {{{-0.6, -0.3}, {0.0, 0.3}, {0.6, -0.3}}}},
      {5, "top loop", {arc(0.0, -0.65, 0.35, 0.0, 360.0, 20)}},
      {6, "fork", {{{0.0, 1.0}, {0.0, 0.0}}, {{-0.5, -0.7}, {0.0, 0.0}, {0.5, -0.7}}}},
      {7, "saltire", {{{-0.6, -0.6}, {0.6, 0.6}}, {{-0.6, 0.6}, {0.6, -0.6}}}},
      {8, "pennant", {{{0.0, -1.0}, {0.65, -0.72}, {0.0, -0.45}}}},
      {9, "hook", {arc(0.3, 0.55, 0.3, 0.0, 180.0, 10)}},
      {10, "triangle", {{{0.0, -0.6}, {0.55, 0.4}, {-0.55, 0.4}, {0.0, -0.6}}}},
      {11, "box", {{{-0.45, -0.45}, {0.45, -0.45}, {0.45, 0.45}, {-0.45, 0.45}, {-0.45, -0.45}}}},
      {12, "slash", {{{-0.6, 0.7}, {0.6, -0.7}}}},
      {13, "backslash", {{{-0.6, -0.7}, {0.6, 0.7}}}},
      {14, "double bar", {{{-0.5, -0.2}, {0.5, -0.2}}, {{-0.5, 0.2}, {0.5, 0.2}}}},
      {15, "sign of four", {{{0.0, 1.0}, {0.0, -1.0}, {0.55, -0.65}}}},
      {16, "ring", {arc(0.0, 0.0, 0.8, 0.0, 360.0, 32)}},
      {17, "zigzag", {{{-0.6, 0.0}, {-0.3, -0.3}, {0.0, 0.0}, {0.3, -0.3}, {0.6, 0.0}}}},
      {18, "arrow head", {{{-0.45, -0.5}, {0.0, -1.0}, {0.45, -0.5}}}},
      {19, "feet", {{{-0.55, 1.0}, {0.0, 0.6}, {0.55, 1.0}}}},
  };
  return lib;
}

// Portable uniform draw: the top 53 bits of the engine output.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

Point place(const PlacedPart& p, Point q) {
  const double a = p.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  return {p.dx + p.scale * (c * q.x - s * q.y), p.dy + p.scale * (s * q.x + c * q.y)};
}

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

const std::vector<Part>& part_library() {
  static const std::vector<Part> lib = make_library();
  return lib;
}

MarkSpec random_mark(std::mt19937_64& rng) {
  MarkSpec m;
  m.seed = rng();
  const int count = uniform_int(rng, 2, 5);
  const int parts = static_cast<int>(part_library().size());
  for (int i = 0; i < count; ++i) {
    PlacedPart p;
    // Most marks are built on a vertical staff.
    p.part = (i == 0 && uniform(rng, 0.0, 1.0) < 0.7) ? 0 : uniform_int(rng, 1, parts - 1);
    p.dx = i == 0 ? 0.0 : uniform(rng, -0.35, 0.35);
    p.dy = i == 0 ? 0.0 : uniform(rng, -0.35, 0.35);
    p.scale = uniform(rng, 0.5, 1.0);
    p.rotation_deg = uniform(rng, -12.0, 12.0);
    m.parts.push_back(p);
  }
  m.stroke_width = uniform(rng, 1.2, 2.0);
  return m;
}

MarkSpec jitter_mark(const MarkSpec& source, std::mt19937_64& rng) {
  MarkSpec m = source;
  m.seed = rng();
  for (PlacedPart& p : m.parts) {
    p.dx += uniform(rng, -0.01, 0.01);
    p.dy += uniform(rng, -0.01, 0.01);
    p.scale *= 1.0 + uniform(rng, -0.01, 0.01);
    p.rotation_deg += uniform(rng, -0.5, 0.5);
  }
  return m;
}

Tensor render_mark(const MarkSpec& spec) {
  if (spec.parts.empty()) throw std::invalid_argument("mark has no parts");
  const auto& lib = part_library();
  std::vector<std::pair<Point, Point>> segments;
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const PlacedPart& p : spec.parts) {
    if (p.part < 0 || p.part >= static_cast<int>(lib.size())) {
      throw std::invalid_argument("unknown part id " + std::to_string(p.part));
    }
    for (const Stroke& s : lib[p.part].strokes) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const Point q = place(p, s[i]);
        x0 = std::min(x0, q.x), x1 = std::max(x1, q.x);
        y0 = std::min(y0, q.y), y1 = std::max(y1, q.y);
        if (i > 0) segments.emplace_back(place(p, s[i - 1]), q);
      }
    }
  }
  const double extent = std::max(x1 - x0, y1 - y0);
  const double scale = extent > 0.0 ? kFitExtent / extent : 1.0;
  const double centre = (kImageSize - 1) / 2.0;
  const double mx = (x0 + x1) / 2.0, my = (y0 + y1) / 2.0;
  auto to_pixels = [&](Point q) { return Point{centre + (q.x - mx) * scale, centre + (q.y - my) * scale}; };

  Tensor img(Shape4{1, 1, kImageSize, kImageSize});
  const double half = spec.stroke_width / 2.0;
  for (auto [a, b] : segments) {
    a = to_pixels(a);
    b = to_pixels(b);
    const long c0 = std::max(0L, static_cast<long>(std::floor(std::min(a.x, b.x) - half)));
    const long c1 = std::min(63L, static_cast<long>(std::ceil(std::max(a.x, b.x) + half)));
    const long r0 = std::max(0L, static_cast<long>(std::floor(std::min(a.y, b.y) - half)));
    const long r1 = std::min(63L, static_cast<long>(std::ceil(std::max(a.y, b.y) + half)));
    for (long r = r0; r <= r1; ++r)
      for (long c = c0; c <= c1; ++c)
        if (segment_distance({static_cast<double>(c), static_cast<double>(r)}, a, b) <= half) {
          img.at(0, 0, r, c) = 1.0;
        }
  }
  return img;
}

std::string mark_to_json(const MarkSpec& spec) {
  nlohmann::json j;
  j["parts"] = nlohmann::json::array();
  for (const PlacedPart& p : spec.parts) {
    j["parts"].push_back(
        {{"part", p.part}, {"dx", p.dx}, {"dy", p.dy}, {"scale", p.scale}, {"rotation", p.rotation_deg}});
  }
  j["stroke_width"] = spec.stroke_width;
  j["seed"] = spec.seed;
  if (spec.duplicate_of) j["duplicate_of"] = *spec.duplicate_of;
  return j.dump();
}

MarkSpec mark_from_json(const std::string& text) {
  MarkSpec m;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    for (const auto& p : j.at("parts")) {
      m.parts.push_back({p.at("part").get<int>(), p.at("dx").get<double>(), p.at("dy").get<double>(),
                         p.at("scale").get<double>(), p.at("rotation").get<double>()});
    }
    m.stroke_width = j.at("stroke_width").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("duplicate_of")) m.duplicate_of = j["duplicate_of"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("bad mark spec: ") + e.what());
  }
  return m;
}

}  // namespace skgan::data
