#include "jumpy/nn/grad_check.h"

#include <algorithm>
#include <cmath>

#include "jumpy/errors.h"
#include "jumpy/random.h"

namespace jumpy::nn {
namespace {

GradCheckResult run(ParameterStore& params, const LossFunction& loss, const ValueFunction& value,
                    std::size_t probe_count, double fd_step, std::uint64_t seed) {
  if (probe_count < 1) throw DomainError("grad_check: probe_count must be >= 1");
  if (!(fd_step > 0.0)) throw DomainError("grad_check: fd_step must be positive");
  const std::size_t total = params.scalar_count();
  if (total == 0) throw DomainError("grad_check: no parameters to probe");

  Gradients analytic = zero_gradients(params);
  const double base = loss(params, &analytic);
  if (!std::isfinite(base)) throw NumericalError("grad_check: non-finite loss");
  if (analytic.size() != params.size()) throw ShapeError("grad_check: gradient count mismatch");

  RandomStream rng(seed);
  GradCheckResult result;
  result.probes = probe_count;
  for (std::size_t p = 0; p < probe_count; ++p) {
    std::size_t flat = static_cast<std::size_t>(rng.index(total));
    ParamId id = 0;
    while (flat >= static_cast<std::size_t>(params[id].size())) {
      flat -= static_cast<std::size_t>(params[id].size());
      ++id;
    }
    const auto index = static_cast<Eigen::Index>(flat);
    double& slot = params[id].data()[index];
    const double saved = slot;
    const double up = saved + fd_step;
    const double down = saved - fd_step;
    slot = up;
    const long double plus = value(params);
    slot = down;
    const long double minus = value(params);
    slot = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericalError("grad_check: non-finite loss at probe of " + params.name(id));
    }
    const double numeric = static_cast<double>((plus - minus) / (static_cast<long double>(up) - down));
    const double a = analytic[id].data()[index];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (p == 0 || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_param = id;
      result.worst_index = index;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace

GradCheckResult grad_check(ParameterStore& params, const LossFunction& loss,
                           std::size_t probe_count, double fd_step, std::uint64_t seed) {
  const ValueFunction value = [&](const ParameterStore& p) -> long double { return loss(p, nullptr); };
  return run(params, loss, value, probe_count, fd_step, seed);
}

GradCheckResult grad_check(ParameterStore& params, const LossFunction& loss,
                           const ValueFunction& value, std::size_t probe_count,
                           double fd_step, std::uint64_t seed) {
  return run(params, loss, value, probe_count, fd_step, seed);
}

}  // namespace jumpy::nn
