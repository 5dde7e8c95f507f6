#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

#include <Eigen/Dense>

namespace nplcm {

/// Random stream used by every sampler. One instance per chain; never shared
/// between threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal() { return normal_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  /// log of a Gamma(shape, 1) draw; accurate for tiny shapes.
  double log_gamma1(double shape);
  /// Gamma(shape, rate) with rate parameterization (mean shape / rate).
  double gamma(double shape, double rate);
  /// Beta(a, b), strictly inside (0, 1).
  double beta(double a, double b);
  /// log X and log(1 - X) for X ~ Beta(a, b), without rounding X first.
  std::pair<double, double> log_beta(double a, double b);
  Eigen::VectorXd dirichlet(const Eigen::Ref<const Eigen::VectorXd>& alpha);

  /// Index drawn proportional to exp(logw). Returns -1 when every weight is
  /// zero.
  int categorical_log(std::span<const double> logw);
  /// Index drawn proportional to w (nonnegative).
  int categorical(std::span<const double> w);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace nplcm
