#include "jumpy/nn/adam.h"

#include <cmath>
#include <string>

#include "jumpy/errors.h"

namespace jumpy::nn {

AdamState make_adam_state(const ParameterStore& params, const AdamConfig& config) {
  if (!(config.learning_rate > 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.epsilon > 0.0)) {
    throw DomainError("adam: invalid hyperparameters");
  }
  AdamState state;
  state.config = config;
  state.first_moment = zero_gradients(params);
  state.second_moment = zero_gradients(params);
  return state;
}

void adam_step(ParameterStore& params, const Gradients& grads, AdamState& state,
               std::span<const ParamId> only) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: gradient/state count does not match parameters");
  }
  for (ParamId i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols() ||
        state.first_moment[i].rows() != params[i].rows() ||
        state.first_moment[i].cols() != params[i].cols()) {
      throw ShapeError("adam_step: shape mismatch for " + params.name(i));
    }
  }
  if (state.step < 0) throw DomainError("adam_step: negative step counter");

  const AdamConfig& c = state.config;
  const std::int64_t t = state.step + 1;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));

  auto update = [&](ParamId i) {
    RealMatrix& m = state.first_moment[i];
    RealMatrix& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[i].cwiseAbs2();
    params[i].array() -= c.learning_rate * (m.array() / correction1) /
                         ((v.array() / correction2).sqrt() + c.epsilon);
  };
  if (only.empty()) {
    for (ParamId i = 0; i < params.size(); ++i) update(i);
  } else {
    for (ParamId i : only) {
      if (i >= params.size()) throw ContractError("adam_step: unknown parameter id");
      update(i);
    }
  }
  state.step = t;
}

}  // namespace jumpy::nn
