#ifndef JUMPY_NN_ADAM_H_
#define JUMPY_NN_ADAM_H_

#include <cstdint>
#include <span>
#include <vector>

#include "jumpy/nn/mlp.h"

namespace jumpy::nn {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<RealMatrix> first_moment;
  std::vector<RealMatrix> second_moment;
  std::int64_t step = 0;
};

AdamState make_adam_state(const ParameterStore& params, const AdamConfig& config = {});

// One bias-corrected Adam update. When `only` is non-empty, parameters outside
// it (and their moments) are left untouched.
void adam_step(ParameterStore& params, const Gradients& grads, AdamState& state,
               std::span<const ParamId> only = {});

}  // namespace jumpy::nn

#endif  // JUMPY_NN_ADAM_H_
