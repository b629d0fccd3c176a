#include "skgan/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "skgan/ops.hpp"

namespace skgan {

GradCheckResult grad_check(const ScalarFn& f, Tensor input, double eps,
                           const std::vector<std::size_t>& indices) {
  std::vector<std::size_t> probe = indices;
  if (probe.empty()) {
    probe.resize(input.numel());
    std::iota(probe.begin(), probe.end(), std::size_t{0});
  }

  const bool had_requires_grad = input.requires_grad();
  input.set_requires_grad(true);
  input.zero_grad();
  Tape tape;
  tape.backward(f(input, &tape));
  const std::vector<double> analytic(input.grad().begin(), input.grad().end());
  input.drop_grad();
  input.set_requires_grad(had_requires_grad);

  GradCheckResult result;
  auto values = input.mutable_values();
  bool first = true;
  for (std::size_t idx : probe) {
    const double saved = values[idx];
    values[idx] = saved + eps;
    const double up = f(input, nullptr).item();
    values[idx] = saved - eps;
    const double down = f(input, nullptr).item();
    values[idx] = saved;

    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[idx] - numeric) / std::max(1.0, std::abs(analytic[idx]));
    if (first || err > result.max_rel_error) {
      result = {err, idx, analytic[idx], numeric};
      first = false;
    }
  }
  return result;
}

ScalarFn project_to_scalar(std::function<Tensor(const Tensor&, Tape*)> f, std::uint64_t seed) {
  auto weights = std::make_shared<Tensor>();
  return [f = std::move(f), seed, weights](const Tensor& x, Tape* tape) {
    Tensor y = f(x, tape);
    if (!weights->defined() || weights->shape() != y.shape()) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      std::vector<double> r(y.numel());
      for (double& v : r) v = dist(rng);
      *weights = Tensor(y.shape(), std::move(r));
    }
    return ops::sum(ops::mul(y, *weights, tape), tape);
  };
}

}  // namespace skgan
