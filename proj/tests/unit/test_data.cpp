#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "../support/reference_ops.hpp"
#include "../support/temp_dir.hpp"
#include "skgan/data.hpp"
#include "skgan/errors.hpp"
#include "skgan/hashing.hpp"

using namespace skgan;
using skgan::testing::TempDir;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Pearson correlation of two images.
double correlation(const Tensor& a, const Tensor& b) {
  const auto x = a.values(), y = b.values();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

template <typename F>
std::size_t parse_offset(F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.offset();
  }
  FAIL("expected ParseError");
  return 0;
}

}  // namespace

TEST_SUITE("synth-data-io") {

TEST_CASE("hand-written 2x2 PGM decodes to exact values") {
  std::vector<std::uint8_t> b = bytes_of("P5\n2 2\n255\n");
  for (std::uint8_t v : {0, 255, 51, 128}) b.push_back(v);
  const Tensor t = data::decode_pgm(b);
  CHECK(t.shape() == Shape4{1, 1, 2, 2});
  CHECK(t.values()[0] == 0.0);
  CHECK(t.values()[1] == 1.0);
  CHECK(t.values()[2] == 51.0 / 255.0);
  CHECK(t.values()[3] == 128.0 / 255.0);
  // Re-encoding gives back the same bytes.
  CHECK(data::encode_pgm(t) == b);
}

TEST_CASE("PGM header comments, 16-bit samples and non-square sizes") {
  std::vector<std::uint8_t> b = bytes_of("P5 # comment\n3 # width\n1\n1000\n");
  for (std::uint8_t v : {0x00, 0x00, 0x01, 0xF4, 0x03, 0xE8}) b.push_back(v);
  const Tensor t = data::decode_pgm(b);
  CHECK(t.shape() == Shape4{1, 1, 1, 3});
  CHECK(t.values()[0] == 0.0);
  CHECK(t.values()[1] == 0.5);
  CHECK(t.values()[2] == 1.0);
}

TEST_CASE("malformed PGM files report byte offsets") {
  CHECK(parse_offset([] { data::decode_pgm(bytes_of("P2\n1 1\n255\n0")); }) == 0);
  CHECK(parse_offset([] { data::decode_pgm(bytes_of("P5\n1 x\n255\n0")); }) == 5);
  const std::vector<std::uint8_t> short_raster = bytes_of("P5\n2 2\n255\nab");
  CHECK(parse_offset([&] { data::decode_pgm(short_raster); }) == short_raster.size());
  std::vector<std::uint8_t> over = bytes_of("P5\n1 1\n100\n");
  over.push_back(200);
  CHECK(parse_offset([&] { data::decode_pgm(over); }) == over.size() - 1);
  CHECK_THROWS_AS(data::decode_pgm(bytes_of("P5\n1 1\n70000\n\x01\x02")), ParseError);
  CHECK_THROWS_AS(data::decode_pgm(bytes_of("P5\n0 1\n255\n")), ParseError);
  CHECK_THROWS_AS(data::decode_pgm(bytes_of("")), ParseError);
}

TEST_CASE("save then load stays within 1/255") {
  TempDir dir;
  std::mt19937_64 rng(3);
  const Tensor zero(Shape4{1, 1, 64, 64});
  const Tensor noise = testing::random_tensor({1, 1, 64, 64}, rng, 0.0, 1.0);
  for (const char* name : {"img.pgm", "img.png"}) {
    CAPTURE(std::string(name));
    data::save_image(zero, dir / name);
    const Tensor z = data::load_image(dir / name);
    CHECK(testing::max_abs_diff(z, zero) == 0.0);
    data::save_image(noise, dir / name);
    CHECK(testing::max_abs_diff(data::load_image(dir / name), noise) <= 1.0 / 255.0);
  }
  // The extension picks the container.
  CHECK(slurp(dir / "img.png").substr(1, 3) == "PNG");
  CHECK(slurp(dir / "img.pgm").substr(0, 2) == "P5");
}

TEST_CASE("load_image rejects wrong sizes and missing or corrupt files") {
  TempDir dir;
  data::save_image(Tensor(Shape4{1, 1, 32, 64}), dir / "short.pgm");
  try {
    data::load_image(dir / "short.pgm");
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(e.axis() == "h");
  }
  data::save_image(Tensor(Shape4{1, 1, 64, 63}), dir / "narrow.png");
  try {
    data::load_image(dir / "narrow.png");
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(e.axis() == "w");
  }
  CHECK_THROWS_AS(data::load_image(dir / "absent.pgm"), IoError);
  std::vector<std::uint8_t> png = bytes_of("\x89PNG\r\n\x1a\nnot really");
  write_bytes(dir / "bad.png", png);
  CHECK_THROWS_AS(data::load_image(dir / "bad.png"), ParseError);
}

TEST_CASE("SHA-256 matches the published test vectors") {
  CHECK(sha256_hex(bytes_of("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(bytes_of("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  Sha256 h;
  h.update("ab").update("c");
  CHECK(h.hex() == sha256_hex(bytes_of("abc")));
}

TEST_CASE("part library and rendered marks") {
  CHECK(data::part_library().size() == 20);
  std::set<int> ids;
  for (const data::Part& p : data::part_library()) {
    ids.insert(p.id);
    CHECK(!p.strokes.empty());
  }
  CHECK(ids.size() == 20);

  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    const data::MarkSpec spec = data::random_mark(rng);
    CHECK((spec.parts.size() >= 2 && spec.parts.size() <= 5));
    CHECK((spec.stroke_width >= 1.0 && spec.stroke_width <= 2.0));
    const Tensor img = data::render_mark(spec);
    REQUIRE(img.shape() == Shape4{1, 1, 64, 64});
    std::size_t ink = 0, grey = 0, lo_r = 64, hi_r = 0, lo_c = 64, hi_c = 0;
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 64; ++c) {
        const double v = img.values()[r * 64 + c];
        grey += v != 0.0 && v != 1.0;
        if (v == 1.0) {
          ++ink;
          lo_r = std::min(lo_r, r);
          hi_r = std::max(hi_r, r);
          lo_c = std::min(lo_c, c);
          hi_c = std::max(hi_c, c);
        }
      }
    CHECK(grey == 0);
    CHECK(ink > 0);
    CHECK(lo_r >= 2);
    CHECK(lo_c >= 2);
    CHECK(hi_r <= 61);
    CHECK(hi_c <= 61);
    // Rendering is a pure function of the spec.
    CHECK(testing::max_abs_diff(data::render_mark(spec), img) == 0.0);
  }
}

TEST_CASE("mark specs round-trip through JSON") {
  std::mt19937_64 rng(4);
  data::MarkSpec spec = data::random_mark(rng);
  spec.duplicate_of = "mark-00003";
  const data::MarkSpec back = data::mark_from_json(data::mark_to_json(spec));
  CHECK(data::mark_to_json(back) == data::mark_to_json(spec));
  CHECK(testing::max_abs_diff(data::render_mark(back), data::render_mark(spec)) == 0.0);
  CHECK(back.duplicate_of == spec.duplicate_of);
  CHECK_THROWS_AS(data::mark_from_json("{not json"), ParseError);
  CHECK_THROWS_AS(data::mark_from_json("{\"parts\": 3}"), ParseError);
}

TEST_CASE("generated datasets are reproducible and seed-dependent") {
  TempDir a, b, c;
  data::GenerateConfig cfg;
  cfg.count = 40;
  const data::DatasetManifest ma = data::generate_dataset(cfg, a.path());
  const data::DatasetManifest mb = data::generate_dataset(cfg, b.path());
  cfg.seed = 18;
  const data::DatasetManifest mc = data::generate_dataset(cfg, c.path());
  CHECK(ma.hash.size() == 64);
  CHECK(ma.hash == mb.hash);
  CHECK(ma.hash != mc.hash);
  CHECK(slurp(a / data::kManifestName) == slurp(b / data::kManifestName));
  REQUIRE(ma.records.size() == 40);
  CHECK(ma.records[0].id == "mark-00000");
  CHECK(ma.records[39].path == "images/mark-00039.pgm");

  const data::SampleStore store = data::SampleStore::from_manifest(a / data::kManifestName);
  CHECK(store.size() == 40);
  CHECK(store.hash() == ma.hash);
  CHECK(store.find("mark-00007") == std::optional<std::size_t>(7));
  CHECK_FALSE(store.find("nope").has_value());
  const std::vector<std::size_t> idx{3, 3, 0};
  const Tensor batch = store.batch(idx);
  CHECK(batch.shape() == Shape4{3, 1, 64, 64});
  const auto v = batch.values();
  CHECK(std::equal(v.begin(), v.begin() + 64 * 64, store.image(3).values().begin()));
  CHECK(std::equal(v.begin() + 2 * 64 * 64, v.end(), store.image(0).values().begin()));
}

TEST_CASE("count 1 gives one image in [0,1]") {
  TempDir dir;
  data::GenerateConfig cfg;
  cfg.count = 1;
  const data::DatasetManifest m = data::generate_dataset(cfg, dir.path());
  REQUIRE(m.records.size() == 1);
  const Tensor img = data::load_image(dir / m.records[0].path);
  CHECK(std::all_of(img.values().begin(), img.values().end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
  CHECK_THROWS_AS(data::generate_dataset({0, 17, 0.1}, dir.path()), std::invalid_argument);
  CHECK_THROWS_AS(data::generate_dataset({5, 17, 0.9}, dir.path()), std::invalid_argument);
}

TEST_CASE("planted near-duplicates correlate with their sources") {
  TempDir dir;
  const data::DatasetManifest m = data::generate_dataset({200, 17, 0.1}, dir.path());
  const data::SampleStore store = data::SampleStore::from_manifest(dir / data::kManifestName);
  std::size_t dups = 0, close = 0;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const data::MarkSpec spec = data::mark_from_json(m.records[i].spec);
    if (!spec.duplicate_of) continue;
    ++dups;
    const auto src = store.find(*spec.duplicate_of);
    REQUIRE(src.has_value());
    CHECK(*src < i);
    CHECK_FALSE(data::mark_from_json(m.records[*src].spec).duplicate_of.has_value());
    close += correlation(store.image(i), store.image(*src)) > 0.8;
  }
  CHECK(dups == 20);
  CHECK(close >= 18);
  CHECK_FALSE(data::mark_from_json(m.records[0].spec).duplicate_of.has_value());
}

TEST_CASE("manifest parsing errors") {
  TempDir dir;
  auto write = [&](const std::string& text) {
    write_bytes(dir / "m.tsv", bytes_of(text));
    return dir / "m.tsv";
  };
  CHECK_THROWS_AS(data::read_manifest(write("")), ParseError);
  CHECK_THROWS_AS(data::read_manifest(write("id\tpath\t{}\n")), ParseError);
  CHECK_THROWS_AS(data::read_manifest(write("#skgan-manifest\tcount=1\na\tb\n")), ParseError);
  CHECK_THROWS_AS(data::read_manifest(write("#skgan-manifest\tcount=2\na\tb\texternal\na\tc\texternal\n")), ParseError);
  CHECK_THROWS_AS(data::read_manifest(write("#skgan-manifest\tcount=3\na\tb\texternal\n")), ParseError);
  CHECK_THROWS_AS(data::read_manifest(write("#skgan-manifest\tcount=x\n")), ParseError);
  CHECK_THROWS_AS(data::read_manifest(dir / "absent.tsv"), IoError);
  const data::DatasetManifest ok = data::read_manifest(write("#skgan-manifest\tseed=4\tcount=1\na\tb.pgm\texternal\n"));
  CHECK(ok.seed == 4);
  REQUIRE(ok.records.size() == 1);
  CHECK(ok.records[0].spec == "external");
}

TEST_CASE("a modified image breaks the manifest hash") {
  TempDir dir;
  const data::DatasetManifest m = data::generate_dataset({5, 2, 0.0}, dir.path());
  Tensor img = data::load_image(dir / m.records[2].path);
  img.mutable_values()[0] = 1.0 - img.values()[0];
  data::save_image(img, dir / m.records[2].path);
  CHECK_THROWS_AS(data::SampleStore::from_manifest(dir / data::kManifestName), IoError);
}

TEST_CASE("unwritable output directory is an I/O error") {
  TempDir dir;
  write_bytes(dir / "file", bytes_of("x"));
  CHECK_THROWS_AS(data::generate_dataset({3, 1, 0.0}, dir / "file" / "sub"), IoError);
}

TEST_CASE("sample store validates its contents") {
  CHECK_THROWS_AS(data::SampleStore({"a"}, {Tensor(Shape4{1, 1, 32, 32})}), DimensionError);
  CHECK_THROWS_AS(data::SampleStore({"a", "a"}, {Tensor(Shape4{1, 1, 64, 64}), Tensor(Shape4{1, 1, 64, 64})}),
                  std::invalid_argument);
  CHECK_THROWS_AS(data::SampleStore({"a"}, {}), std::invalid_argument);
}

}  // TEST_SUITE
