#ifndef JUMPY_NN_GRAD_CHECK_H_
#define JUMPY_NN_GRAD_CHECK_H_

#include <cstddef>
#include <cstdint>
#include <functional>

#include "jumpy/nn/mlp.h"

namespace jumpy::nn {

// Evaluates the loss at `params`. When `grads` is non-null it must also fill
// in the analytic gradient (one array per parameter).
using LossFunction = std::function<double(const ParameterStore& params, Gradients* grads)>;

// Loss value only, in extended precision. Used as the finite-difference side
// when the double-valued loss is too coarse to resolve small gradients.
using ValueFunction = std::function<long double(const ParameterStore& params)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
  // Coordinate that produced the maximum.
  ParamId worst_param = 0;
  Eigen::Index worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares the analytic gradient with central finite differences on
// `probe_count` coordinates drawn uniformly from all parameter scalars.
// Relative error per coordinate is |a - fd| / max(|a|, |fd|, 1e-8).
// `params` is perturbed in place and restored bit-exactly before returning.
// The difference quotient divides by the step actually taken in double.
GradCheckResult grad_check(ParameterStore& params, const LossFunction& loss,
                           std::size_t probe_count, double fd_step, std::uint64_t seed);

// As above, but the finite differences are taken on `value` instead of the
// double loss; `loss` only supplies the analytic gradient.
GradCheckResult grad_check(ParameterStore& params, const LossFunction& loss,
                           const ValueFunction& value, std::size_t probe_count,
                           double fd_step, std::uint64_t seed);

}  // namespace jumpy::nn

#endif  // JUMPY_NN_GRAD_CHECK_H_
