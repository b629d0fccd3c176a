#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "../support/reference_ops.hpp"
#include "../support/temp_dir.hpp"
#include "skgan/data.hpp"
#include "skgan/errors.hpp"
#include "skgan/hashing.hpp"
#include "skgan/network.hpp"
#include "skgan/retrieval.hpp"

using namespace skgan;
using namespace skgan::retrieval;

namespace {

std::vector<double> gaussian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

std::string pad_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "e%03zu", i);
  return buf;
}

EmbeddingIndex random_index(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  EmbeddingIndex idx("enc", "data", dim);
  for (std::size_t i = 0; i < count; ++i) idx.add(normalize(gaussian(dim, rng), pad_id(i)));
  return idx;
}

// Full sort of (-similarity, id) pairs with similarities from a scalar loop.
std::vector<std::string> brute_force(const EmbeddingIndex& idx, const Embedding& q, std::size_t k) {
  std::vector<std::pair<double, std::string>> rows;
  for (const Embedding& e : idx.entries()) {
    double s = 0.0;
    for (std::size_t j = 0; j < e.values.size(); ++j) s += q.values[j] * e.values[j];
    rows.emplace_back(-s, e.id);
  }
  std::sort(rows.begin(), rows.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(rows[i].second);
  return out;
}

std::vector<std::string> ids_of(const std::vector<Hit>& hits) {
  std::vector<std::string> out;
  for (const Hit& h : hits) out.push_back(h.id);
  return out;
}

Tensor mark_image(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return data::render_mark(data::random_mark(rng));
}

}  // namespace

TEST_SUITE("retrieval-engine") {

TEST_CASE("normalisation of a 3-4-5 vector and the zero vector") {
  std::vector<double> raw(1024, 0.0);
  raw[0] = 3.0;
  raw[1] = 4.0;
  const Embedding e = normalize(raw, "a");
  CHECK(e.id == "a");
  CHECK_FALSE(e.degenerate);
  CHECK(e.values[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(e.values[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(std::all_of(e.values.begin() + 2, e.values.end(), [](double v) { return v == 0.0; }));

  const Embedding z = normalize(std::vector<double>(1024, 0.0));
  CHECK(z.degenerate);
  CHECK(similarity(z, z) == 0.0);
  CHECK(similarity(z, e) == 0.0);
}

TEST_CASE("normalisation is idempotent and similarity symmetric") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Embedding a = normalize(gaussian(1024, rng));
    const Embedding b = normalize(gaussian(1024, rng));
    const Embedding again = normalize(a.values);
    double worst = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      worst = std::max(worst, std::abs(again.values[i] - a.values[i]));
      norm += a.values[i] * a.values[i];
    }
    CHECK(worst < 1e-12);
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    CHECK(similarity(a, b) == similarity(b, a));
    CHECK(std::abs(similarity(a, a) - 1.0) < 1e-9);
    CHECK(std::abs(similarity(a, b)) <= 1.0);
  }
  std::vector<double> x(8, 0.0), y(8, 0.0);
  x[2] = 1.0;
  y[5] = -2.0;
  CHECK(similarity(normalize(x), normalize(y)) == 0.0);
  CHECK_THROWS_AS(similarity(normalize(x), normalize(std::vector<double>(9, 1.0))), DimensionError);
}

TEST_CASE("similarity agrees with a scalar cosine oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> a = gaussian(1024, rng), b = gaussian(1024, rng);
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    CHECK(std::abs(similarity(normalize(a), normalize(b)) - ab / std::sqrt(aa * bb)) < 1e-12);
  }
}

TEST_CASE("both discriminators give 1024-dimensional encoders truncated before the fc") {
  for (const char* name : {"sketch-D", "thin-D"}) {
    CAPTURE(name);
    const nn::Model d = nn::build_model(nn::spec_by_name(name), 4);
    const DiscriminatorEncoder enc = make_encoder(d);
    CHECK(enc.dim() == 1024);
    CHECK(enc.prefix_layers() == d.spec().layers.size() - 2);
    CHECK(enc.id() == sha256_hex(nn::serialize_checkpoint(d)));

    const Tensor img = mark_image(9);
    const std::vector<Tensor> acts = d.trace(img);
    const Tensor& feat = acts[enc.prefix_layers()];
    CHECK(feat.numel() == 1024);
    const Embedding e = enc.encode(img, "x");
    const Embedding expect = normalize(feat.values(), "x");
    CHECK(e.values == expect.values);
    CHECK_FALSE(e.degenerate);

    double norm = 0.0;
    for (double v : e.values) norm += v * v;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    CHECK(enc.encode(img).values == e.values);
  }
}

TEST_CASE("encoder construction rejects models without a classification head") {
  CHECK_THROWS_AS(make_encoder(nn::build_model(nn::spec_by_name("thin-G"), 1)), BuildError);
  nn::NetworkSpec headless = nn::thin_discriminator();
  headless.layers.pop_back();
  headless.output = nn::shape_chain(headless).back();
  CHECK_THROWS_AS(make_encoder(nn::build_model(headless, 1)), BuildError);
}

TEST_CASE("encode validates its input") {
  const DiscriminatorEncoder enc = make_encoder(nn::build_model(nn::thin_discriminator(), 2));
  CHECK_THROWS_AS(enc.encode(Tensor(Shape4{1, 1, 32, 32})), DimensionError);
  CHECK_THROWS_AS(enc.encode(Tensor(Shape4{2, 1, 64, 64})), DimensionError);
  CHECK_THROWS_AS(enc.encode(Tensor(Shape4{1, 3, 64, 64})), DimensionError);
  Tensor bright(Shape4{1, 1, 64, 64});
  bright.mutable_values()[0] = 1.5;
  CHECK_THROWS_AS(enc.encode(bright), DomainError);
  const std::vector<std::string> one_id{"a"};
  CHECK_THROWS_AS(enc.encode_batch(Tensor(Shape4{2, 1, 64, 64}), one_id), DimensionError);
}

TEST_CASE("batch encoding matches one-at-a-time encoding") {
  const DiscriminatorEncoder enc = make_encoder(nn::build_model(nn::sketch_discriminator(), 6));
  std::vector<std::string> ids;
  std::vector<Tensor> imgs;
  for (std::uint64_t s = 0; s < 5; ++s) {
    ids.push_back("m" + std::to_string(s));
    imgs.push_back(mark_image(100 + s));
  }
  const data::SampleStore store(ids, imgs, "h");
  const std::vector<std::size_t> all{0, 1, 2, 3, 4};
  const std::vector<Embedding> batch = enc.encode_batch(store.batch(all), ids);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Embedding single = enc.encode(imgs[i], ids[i]);
    CHECK(batch[i].id == ids[i]);
    double worst = 0.0;
    for (std::size_t j = 0; j < single.values.size(); ++j) {
      worst = std::max(worst, std::abs(single.values[j] - batch[i].values[j]));
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("pixel encoder similarity is the normalised cross-correlation") {
  const PixelEncoder enc;
  const Tensor a = mark_image(1), b = mark_image(2);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    ab += a.values()[i] * b.values()[i];
    aa += a.values()[i] * a.values()[i];
    bb += b.values()[i] * b.values()[i];
  }
  CHECK(std::abs(similarity(enc.encode(a), enc.encode(b)) - ab / std::sqrt(aa * bb)) < 1e-12);
  CHECK(enc.encode(Tensor(Shape4{1, 1, 64, 64})).degenerate);
}

TEST_CASE("a member query ranks itself first") {
  std::mt19937_64 rng(21);
  const EmbeddingIndex idx = random_index(100, 32, rng);
  const Embedding& q = idx.entries()[7];
  const std::vector<Hit> hits = idx.top_k(q, 9);
  REQUIRE(hits.size() == 9);
  CHECK(hits[0].id == "e007");
  CHECK(std::abs(hits[0].similarity - 1.0) < 1e-9);
  for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i - 1].similarity >= hits[i].similarity);

  const std::vector<Hit> all = idx.top_k(q, idx.size());
  std::set<std::string> seen;
  for (const Hit& h : all) seen.insert(h.id);
  CHECK(seen.size() == idx.size());
}

TEST_CASE("rankings match a brute-force sort") {
  std::mt19937_64 rng(33);
  const EmbeddingIndex idx = random_index(50, 64, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Embedding q = normalize(gaussian(64, rng));
    for (std::size_t k : {1u, 9u, 50u}) CHECK(ids_of(idx.top_k(q, k)) == brute_force(idx, q, k));
  }
}

TEST_CASE("ties are broken by identifier regardless of insertion order") {
  std::mt19937_64 rng(41);
  std::vector<Embedding> pool;
  for (std::size_t i = 0; i < 10; ++i) {
    const Embedding base = normalize(gaussian(16, rng));
    // Three identical copies of each vector force exact ties.
    for (int c = 0; c < 3; ++c) pool.push_back({pad_id(i * 3 + static_cast<std::size_t>(2 - c)), base.values, false});
  }
  EmbeddingIndex forward("enc", "data", 16), shuffled("enc", "data", 16);
  for (const Embedding& e : pool) forward.add(e);
  std::vector<Embedding> perm = pool;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (const Embedding& e : perm) shuffled.add(e);
  for (std::size_t qi = 0; qi < pool.size(); qi += 4) {
    for (std::size_t k : {1u, 3u, 7u, 30u}) {
      const std::vector<Hit> a = forward.top_k(pool[qi], k), b = shuffled.top_k(pool[qi], k);
      CHECK(ids_of(a) == ids_of(b));
    }
    const std::vector<Hit> top = forward.top_k(pool[qi], 3);
    CHECK(top[0].id < top[1].id);
    CHECK(top[1].id < top[2].id);
  }
}

TEST_CASE("index preconditions") {
  EmbeddingIndex idx("enc", "data", 4);
  const Embedding q = normalize(std::vector<double>{1, 0, 0, 0}, "q");
  CHECK_THROWS_AS(idx.top_k(q, 1), std::invalid_argument);
  idx.add(q);
  CHECK_THROWS_AS(idx.add(q), std::invalid_argument);
  CHECK_THROWS_AS(idx.add(normalize(std::vector<double>{1, 0, 0}, "r")), DimensionError);
  CHECK_THROWS_AS(idx.top_k(q, 0), std::invalid_argument);
  CHECK_THROWS_AS(idx.top_k(q, 2), std::invalid_argument);
  CHECK(idx.top_k(q, 1).front().id == "q");
}

TEST_CASE("index files round-trip and reject corruption") {
  std::mt19937_64 rng(51);
  EmbeddingIndex idx = random_index(12, 1024, rng);
  idx.add(normalize(std::vector<double>(1024, 0.0), "zero"));
  skgan::testing::TempDir dir;
  idx.save(dir / "a.idx");
  const EmbeddingIndex back = EmbeddingIndex::load(dir / "a.idx");
  CHECK(back.encoder_id() == "enc");
  CHECK(back.dataset_hash() == "data");
  CHECK(back.dim() == 1024);
  REQUIRE(back.size() == idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    CHECK(back.entries()[i].id == idx.entries()[i].id);
    CHECK(back.entries()[i].values == idx.entries()[i].values);
    CHECK(back.entries()[i].degenerate == idx.entries()[i].degenerate);
  }
  CHECK(back.serialize() == idx.serialize());

  std::vector<std::uint8_t> bytes = idx.serialize();
  const std::vector<std::uint8_t> head(bytes.begin(), bytes.begin() + 6);
  CHECK(std::string(head.begin(), head.end()) == "SKIDX1");
  bytes[0] = 'X';
  CHECK_THROWS_AS(EmbeddingIndex::deserialize(bytes), ParseError);
  std::vector<std::uint8_t> cut = idx.serialize();
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(EmbeddingIndex::deserialize(cut), ParseError);
  std::vector<std::uint8_t> extra = idx.serialize();
  extra.push_back(0);
  CHECK_THROWS_AS(EmbeddingIndex::deserialize(extra), ParseError);
  CHECK_THROWS_AS(EmbeddingIndex::load(dir / "missing.idx"), IoError);
}

TEST_CASE("building an index records provenance and order") {
  std::vector<std::string> ids;
  std::vector<Tensor> imgs;
  for (std::uint64_t s = 0; s < 7; ++s) {
    ids.push_back("m" + std::to_string(s));
    imgs.push_back(mark_image(200 + s));
  }
  const data::SampleStore store(ids, imgs, "abc");
  const PixelEncoder enc;
  const EmbeddingIndex idx = build_index(enc, store, 3);
  CHECK(idx.encoder_id() == "pixels");
  CHECK(idx.dataset_hash() == "abc");
  REQUIRE(idx.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(idx.entries()[i].id == ids[i]);
    CHECK(idx.entries()[i].values == enc.encode(imgs[i]).values);
  }
}

TEST_CASE("hit CSV layout") {
  std::ostringstream out;
  const std::vector<Hit> hits{{"a", 1.0}, {"b", 0.25}};
  write_hits_csv(out, hits);
  CHECK(out.str() == "rank,identifier,similarity\n1,a,1\n2,b,0.25\n");
}

}  // TEST_SUITE
