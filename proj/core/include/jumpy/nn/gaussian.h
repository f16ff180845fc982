#ifndef JUMPY_NN_GAUSSIAN_H_
#define JUMPY_NN_GAUSSIAN_H_

#include "jumpy/nn/mlp.h"
#include "jumpy/random.h"

namespace jumpy::nn {

// Diagonal Gaussian parameterized by mean and log standard deviation.
struct DiagGaussian {
  RealVector mean;
  RealVector log_std;

  Eigen::Index dim() const { return mean.size(); }
  RealVector stddev() const { return log_std.array().exp().matrix(); }
  // Throws ShapeError on length mismatch, NumericalError on non-finite fields.
  void validate() const;
};

// KL(q || N(0, I)) = sum_i 1/2 (mu_i^2 + sigma_i^2 - 1 - 2 log sigma_i).
double gaussian_kl_to_standard(const DiagGaussian& q);

// mean + stddev * eps with eps ~ N(0, I) drawn from `rng` in index order.
RealVector gaussian_sample(const DiagGaussian& q, RandomStream& rng);

double gaussian_log_prob(const DiagGaussian& q, const RealVector& x);

}  // namespace jumpy::nn

#endif  // JUMPY_NN_GAUSSIAN_H_
