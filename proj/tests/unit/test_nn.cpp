#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "../support/reference_ops.hpp"
#include "skgan/errors.hpp"
#include "skgan/grad_check.hpp"
#include "skgan/network.hpp"

using namespace skgan;
using namespace skgan::nn;
using skgan::testing::random_tensor;

namespace {

// Table 1 rows counted by hand: weights out*in*k*k plus one bias per output
// channel; each batchnorm contributes gamma and beta per channel.
constexpr std::size_t conv_params(std::size_t o, std::size_t i, std::size_t k) { return o * i * k * k + o; }
constexpr std::size_t bn_params(std::size_t c) { return 2 * c; }

constexpr std::size_t kThinG = conv_params(1024, 2, 1) + conv_params(32, 64, 3) + bn_params(32) +
                               conv_params(16, 32, 3) + bn_params(16) + conv_params(8, 16, 3) + bn_params(8) +
                               conv_params(1, 8, 3);
constexpr std::size_t kThinD = conv_params(8, 1, 3) + conv_params(16, 8, 3) + bn_params(16) +
                               conv_params(32, 16, 3) + bn_params(32) + conv_params(64, 32, 3) + bn_params(64) +
                               conv_params(1, 1024, 1);
constexpr std::size_t kSketchG = conv_params(128, 2, 1) + conv_params(16, 8, 3) + bn_params(16) +
                                 3 * (conv_params(16, 16, 5) + bn_params(16)) + conv_params(1, 16, 9);
constexpr std::size_t kSketchD = conv_params(8, 1, 9) + conv_params(16, 8, 5) + bn_params(16) +
                                 2 * (conv_params(16, 16, 5) + bn_params(16)) + conv_params(1, 1024, 1);

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("skgan_test_" + name);
}

}  // namespace

TEST_SUITE("nn-graph") {

TEST_CASE("hand counts") {
  CHECK(kThinG == 27505);
  CHECK(kThinD == 25633);
  CHECK(kSketchG == 22225);
  CHECK(kSketchD == 17825);
}

TEST_CASE("count_params matches the hand count for every network") {
  CHECK(build_model(thin_generator(2), 1).count_params().total() == kThinG);
  CHECK(build_model(thin_discriminator(), 1).count_params().total() == kThinD);
  CHECK(build_model(sketch_generator(2), 1).count_params().total() == kSketchG);
  CHECK(build_model(sketch_discriminator(), 1).count_params().total() == kSketchD);

  ParamCounts d = build_model(thin_discriminator(), 1).count_params();
  CHECK(d.gammas == 16 + 32 + 64);
  CHECK(d.betas == d.gammas);
  CHECK(d.biases == 8 + 16 + 32 + 64 + 1);
}

TEST_CASE("a lone fc 1x1024 layer has 1025 parameters") {
  NetworkSpec s{"toy", Role::kDiscriminator, {LayerSpec::fc(1, 1024)}, Shape4{1, 1024, 1, 1}, {}};
  s.output = shape_chain(s).back();
  CHECK(build_model(s, 0).count_params().total() == 1025);
}

TEST_CASE("structural assertions mirror the architecture table") {
  const NetworkSpec sd = sketch_discriminator(), td = thin_discriminator();
  CHECK(sd.layers.front().kind == LayerKind::kConv);
  CHECK(sd.layers.front().kh == 9);
  CHECK(sd.layers.front().stride == 1);
  CHECK(td.layers.front().kh == 3);
  CHECK(td.layers.front().stride == 2);
  for (const NetworkSpec& s : {sd, td, sketch_generator(2), thin_generator(2)}) {
    CHECK(s.layers.back().kind == LayerKind::kSigmoid);
  }
  CHECK(sd.output == Shape4{1, 1, 1, 1});
  CHECK(td.output == Shape4{1, 1, 1, 1});
  CHECK(sketch_generator(2).output == Shape4{1, 1, 64, 64});
  CHECK(thin_generator(2).output == Shape4{1, 1, 64, 64});
}

TEST_CASE("static shape chain equals observed shapes") {
  std::mt19937_64 rng(21);
  for (const char* name : {"sketch-G", "sketch-D", "thin-G", "thin-D"}) {
    const NetworkSpec spec = spec_by_name(name, 2);
    Model m = build_model(spec, 3);
    Shape4 in = spec.input;
    in.n = 2;
    std::vector<Tensor> acts = m.trace(random_tensor(in, rng, 0.0, 1.0));
    std::vector<Shape4> chain = shape_chain(spec);
    REQUIRE(acts.size() == chain.size());
    for (std::size_t i = 0; i < chain.size(); ++i) {
      Shape4 expect = chain[i];
      expect.n = 2;
      CHECK_MESSAGE(acts[i].shape() == expect, std::string(name), " layer ", i);
    }
    if (spec.role == Role::kDiscriminator) {
      // The flatten before the final fc carries 1024 features.
      CHECK(chain[chain.size() - 3].per_sample() == 1024);
    }
  }
}

TEST_CASE("a non-chaining spec names the broken boundary") {
  NetworkSpec s = thin_discriminator();
  s.layers[3] = LayerSpec::conv(16, 9, 3, 2);
  try {
    shape_chain(s);
    FAIL("expected BuildError");
  } catch (const BuildError& e) {
    CHECK(e.boundary() == 3);
  }
  CHECK_THROWS_AS(build_model(s, 0), BuildError);
}

TEST_CASE("forward outputs lie strictly inside (0,1)") {
  std::mt19937_64 rng(22);
  Model td = build_model(thin_discriminator(), 5);
  Tensor y = td.forward(random_tensor({4, 1, 64, 64}, rng, -50.0, 50.0), ops::Mode::kEval);
  CHECK(y.shape() == Shape4{4, 1, 1, 1});
  for (double v : y.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  Model sg = build_model(sketch_generator(2), 5);
  Tensor img = sg.forward(random_tensor({3, 2, 1, 1}, rng, 0.0, 1.0), ops::Mode::kTrain);
  CHECK(img.shape() == Shape4{3, 1, 64, 64});
  for (double v : img.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("eval forward is repeatable and leaves running statistics alone") {
  std::mt19937_64 rng(23);
  Model td = build_model(thin_discriminator(), 6);
  Model before = td;
  Tensor x = random_tensor({2, 1, 64, 64}, rng, 0.0, 1.0);
  Tensor a = td.forward(x, ops::Mode::kEval);
  Tensor b = td.forward(x, ops::Mode::kEval);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  CHECK(td.identical(before));
  td.forward(x, ops::Mode::kTrain, nullptr, false);
  CHECK(td.identical(before));
  td.forward(x, ops::Mode::kTrain);
  CHECK_FALSE(td.identical(before));
}

TEST_CASE("sketch-D handles a batch of 128") {
  std::mt19937_64 rng(24);
  Model sd = build_model(sketch_discriminator(), 7);
  Tensor y = sd.forward(random_tensor({128, 1, 64, 64}, rng, 0.0, 1.0), ops::Mode::kTrain);
  CHECK(y.shape() == Shape4{128, 1, 1, 1});
}

TEST_CASE("input shape errors") {
  Model td = build_model(thin_discriminator(), 1);
  try {
    td.infer(Tensor(Shape4{1, 1, 32, 64}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(e.axis() == "h");
  }
  CHECK_THROWS_AS(td.infer(Tensor(Shape4{1, 3, 64, 64})), DimensionError);
}

TEST_CASE("same seed gives bitwise-identical parameters, different seeds differ") {
  Model a = build_model(sketch_generator(2), 42);
  Model b = build_model(sketch_generator(2), 42);
  Model c = build_model(sketch_generator(2), 43);
  CHECK(a.identical(b));
  CHECK_FALSE(a.identical(c));
}

TEST_CASE("initialization statistics") {
  Model m = build_model(thin_discriminator(), 9);
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (const NamedTensor& p : m.parameters()) {
    const bool is_weight = p.name.ends_with(".weight");
    for (double v : p.tensor.values()) {
      if (is_weight) {
        sum += v;
        sq += v * v;
        ++count;
      } else if (p.name.ends_with(".gamma")) {
        CHECK(v == 1.0);
      } else {
        CHECK(v == 0.0);
      }
    }
  }
  const double mean = sum / count, sd = std::sqrt(sq / count - mean * mean);
  CHECK(std::abs(mean) < 1e-3);
  CHECK(std::abs(sd - 0.02) < 1e-3);
}

TEST_CASE("deep copies do not share storage") {
  Model a = build_model(thin_discriminator(), 1);
  Model b = a;
  CHECK(a.identical(b));
  b.parameters().front().tensor.mutable_values()[0] += 1.0;
  CHECK_FALSE(a.identical(b));
}

TEST_CASE("checkpoint round trip reproduces forward outputs bitwise") {
  std::mt19937_64 rng(25);
  for (const char* name : {"sketch-G", "sketch-D", "thin-G", "thin-D"}) {
    const NetworkSpec spec = spec_by_name(name, 2);
    Model m = build_model(spec, 11);
    Shape4 in = spec.input;
    in.n = 4;
    Tensor x = random_tensor(in, rng, 0.0, 1.0);
    m.forward(x, ops::Mode::kTrain);  // move the running statistics off their defaults
    const auto path = temp_path(std::string(name) + ".ckpt");
    save_checkpoint(m, path);
    Model r = load_checkpoint(path);
    CHECK(r.identical(m));
    CHECK(r.seed() == 11);
    CHECK(r.spec().name == name);
    Tensor ya = m.infer(x), yb = r.infer(x);
    CHECK(std::equal(ya.values().begin(), ya.values().end(), yb.values().begin()));
    std::filesystem::remove(path);
  }
}

TEST_CASE("checkpoint keeps the latent width") {
  Model g = build_model(thin_generator(5), 2);
  Model r = deserialize_checkpoint(serialize_checkpoint(g));
  CHECK(r.spec().input.c == 5);
  CHECK(r.identical(g));
}

TEST_CASE("corrupt checkpoints raise parse errors") {
  Model m = build_model(thin_discriminator(), 1);
  std::vector<std::uint8_t> bytes = serialize_checkpoint(m);
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    try {
      deserialize_checkpoint(bytes);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset() == 0);
    }
  }
  SUBCASE("truncated") {
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), ParseError);
  }
  SUBCASE("trailing bytes") {
    bytes.push_back(0);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), ParseError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(temp_path("does_not_exist.ckpt")), IoError);
  }
}

TEST_CASE("composite gradients of both discriminators pass finite differences") {
  std::mt19937_64 rng(26);
  for (const char* name : {"sketch-D", "thin-D"}) {
    Model d = build_model(spec_by_name(name), 13);
    Tensor x = random_tensor({3, 1, 64, 64}, rng, 0.0, 1.0);
    // Scalar read-out of the train-mode output; running-stat updates are off
    // so every evaluation sees the same state. eps = 1e-6 keeps the central
    // difference from straddling ReLU kinks in the 64x64 first layer.
    auto loss = [&](const Tensor&, Tape* tape) {
      return ops::sum(d.forward(x, ops::Mode::kTrain, tape, false), tape);
    };
    std::vector<NamedTensor> params = d.parameters();
    for (int pick = 0; pick < 5; ++pick) {
      const NamedTensor& p = params[std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng)];
      const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, p.tensor.numel() - 1)(rng);
      GradCheckResult r = grad_check(loss, p.tensor, 1e-6, {idx});
      CHECK_MESSAGE(r.max_rel_error < 1e-3, std::string(name), " ", p.name, "[", idx, "]");
    }
    // Gradient with respect to the image.
    auto wrt_input = [&](const Tensor& in, Tape* tape) {
      return ops::sum(d.forward(in, ops::Mode::kTrain, tape, false), tape);
    };
    std::vector<std::size_t> idx;
    for (int i = 0; i < 20; ++i) idx.push_back(std::uniform_int_distribution<std::size_t>(0, x.numel() - 1)(rng));
    CHECK(grad_check(wrt_input, x, 1e-6, idx).max_rel_error < 1e-3);
  }
}

}  // TEST_SUITE
