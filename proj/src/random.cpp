#include "nplcm/random.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "nplcm/error.hpp"
#include "nplcm/stats.hpp"

namespace nplcm {

double Rng::uniform() {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(engine_);
    if (u > 0.0 && u < 1.0) return u;
  }
}

// Marsaglia & Tsang (2000). Shapes below one use
// Gamma(a) = Gamma(a + 1) * U^(1/a), kept on the log scale.
double Rng::log_gamma1(double shape) {
  if (!(shape > 0.0)) throw Error("gamma shape must be positive");
  if (shape < 1.0) return log_gamma1(shape + 1.0) + std::log(uniform()) / shape;
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return std::log(d * v);
  }
}

double Rng::gamma(double shape, double rate) {
  if (!(rate > 0.0)) throw Error("gamma rate must be positive");
  return std::exp(log_gamma1(shape)) / rate;
}

std::pair<double, double> Rng::log_beta(double a, double b) {
  const double lx = log_gamma1(a);
  const double ly = log_gamma1(b);
  const double m = std::max(lx, ly);
  const double norm = m + std::log(std::exp(lx - m) + std::exp(ly - m));
  return {lx - norm, ly - norm};
}

double Rng::beta(double a, double b) {
  const double x = std::exp(log_beta(a, b).first);
  constexpr double kTiny = 1e-300;
  constexpr double kTop = 1.0 - std::numeric_limits<double>::epsilon();
  return std::min(std::max(x, kTiny), kTop);
}

Eigen::VectorXd Rng::dirichlet(const Eigen::Ref<const Eigen::VectorXd>& alpha) {
  std::vector<double> lg(static_cast<std::size_t>(alpha.size()));
  for (Eigen::Index l = 0; l < alpha.size(); ++l) lg[static_cast<std::size_t>(l)] = log_gamma1(alpha(l));
  const double norm = log_sum_exp(lg);
  Eigen::VectorXd out(alpha.size());
  for (Eigen::Index l = 0; l < alpha.size(); ++l) out(l) = std::exp(lg[static_cast<std::size_t>(l)] - norm);
  return out;
}

int Rng::categorical_log(std::span<const double> logw) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logw) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return -1;
  std::vector<double> w(logw.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::exp(logw[k] - mx);
  return categorical(w);
}

int Rng::categorical(std::span<const double> w) {
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) return -1;
  double u = uniform() * total;
  int last = -1;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] <= 0.0) continue;
    last = static_cast<int>(k);
    if (u < w[k]) return last;
    u -= w[k];
  }
  return last;
}

}  // namespace nplcm
