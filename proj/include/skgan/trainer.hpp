#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "skgan/data.hpp"
#include "skgan/network.hpp"
#include "skgan/tape.hpp"
#include "skgan/tensor.hpp"

namespace skgan::train {

struct TrainConfig {
  std::size_t iterations = 2000;
  std::size_t batch = 128;  // m
  std::size_t k = 1;        // discriminator updates per iteration
  std::size_t latent_dim = 2;
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  // Iterations between periodic checkpoints; 0 writes only the final one.
  std::size_t checkpoint_interval = 0;
  // D outputs are clamped to [loss_clamp, 1 - loss_clamp] before the log.
  double loss_clamp = 1e-7;
  // Generator minimises log(1 - D(G(z))) instead of -log D(G(z)).
  bool minimax_generator = false;

  // Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

struct AdamConfig {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

// One bias-corrected Adam update of every tensor from its gradient
// (missing gradients count as zero). Moments are allocated on first use.
void adam_step(const std::vector<nn::NamedTensor>& params, AdamState& state, const AdamConfig& cfg);

struct LossRecord {
  std::size_t iteration = 0;  // 1-based
  double j_d = 0.0;
  double j_g = 0.0;
  double mean_d_real = 0.0;
  double mean_d_fake = 0.0;
};

// (m, dz, 1, 1) with entries uniform on [0, 1).
Tensor sample_latent(std::size_t m, std::size_t latent_dim, std::mt19937_64& rng);

// J_D = -(1/2m) (sum log D(x) + sum log(1 - D(G(z)))).
// Inputs must lie in (0,1); throws DomainError otherwise.
Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake, Tape* tape = nullptr, double clamp = 1e-7);
// J_G = -(1/m) sum log D(G(z)); with minimax set, (1/m) sum log(1 - D(G(z))).
Tensor generator_loss(const Tensor& d_fake, Tape* tape = nullptr, double clamp = 1e-7, bool minimax = false);

enum class CheckpointKind { kPeriodic, kFinal, kDiagnostic };

struct TrainSink {
  std::function<void(const LossRecord&)> on_record;
  std::function<void(CheckpointKind, std::size_t iteration, const nn::Model& g, const nn::Model& d)> on_checkpoint;
};

struct TrainResult {
  std::vector<LossRecord> history;
  AdamState adam_g;
  AdamState adam_d;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

// Alternates k discriminator updates (fresh real and latent batches each)
// with one generator update, for exactly cfg.iterations iterations. Real
// batches are drawn uniformly with replacement. A non-finite loss triggers
// a diagnostic checkpoint and NonFiniteLoss.
TrainResult train(const data::SampleStore& dataset, nn::Model& g, nn::Model& d, const TrainConfig& cfg,
                  const TrainSink& sink = {});

// CSV with header iteration,j_d,j_g,mean_d_real,mean_d_fake.
std::string loss_csv_header();
std::string loss_csv_row(const LossRecord& r);

}  // namespace skgan::train
