#include "jumpy/nn/gaussian.h"

#include <cmath>
#include <numbers>

#include "jumpy/errors.h"

namespace jumpy::nn {

void DiagGaussian::validate() const {
  if (mean.size() != log_std.size()) throw ShapeError("DiagGaussian: mean/log_std lengths differ");
  if (!mean.allFinite() || !log_std.allFinite()) {
    throw NumericalError("DiagGaussian: non-finite mean or log_std");
  }
}

double gaussian_kl_to_standard(const DiagGaussian& q) {
  q.validate();
  const auto mu = q.mean.array();
  const auto ls = q.log_std.array();
  const double kl = 0.5 * (mu.square() + (2.0 * ls).exp() - 1.0 - 2.0 * ls).sum();
  if (!std::isfinite(kl)) throw NumericalError("gaussian_kl_to_standard: non-finite result");
  return kl;
}

RealVector gaussian_sample(const DiagGaussian& q, RandomStream& rng) {
  q.validate();
  RealVector out(q.dim());
  for (Eigen::Index i = 0; i < q.dim(); ++i) {
    out(i) = q.mean(i) + std::exp(q.log_std(i)) * rng.gaussian();
  }
  return out;
}

double gaussian_log_prob(const DiagGaussian& q, const RealVector& x) {
  q.validate();
  if (x.size() != q.dim()) throw ShapeError("gaussian_log_prob: dimension mismatch");
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  double lp = 0.0;
  for (Eigen::Index i = 0; i < q.dim(); ++i) {
    const double z = (x(i) - q.mean(i)) * std::exp(-q.log_std(i));
    lp += -0.5 * z * z - q.log_std(i) - 0.5 * log_two_pi;
  }
  return lp;
}

}  // namespace jumpy::nn
