#ifndef JUMPY_NN_MLP_H_
#define JUMPY_NN_MLP_H_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "jumpy/random.h"

namespace jumpy::nn {

// Dense column-major matrix. Batched activations are laid out one sample per
// column (features x batch).
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
// Extended-precision counterpart used by finite-difference oracles.
using ExtendedMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kEluAlpha = 1.0;
inline constexpr double kLayerNormEpsilon = 1e-5;

enum class LayerKind { kLinear, kLayerNorm, kElu };

struct LayerSpec {
  LayerKind kind = LayerKind::kLinear;
  int in_dim = 0;
  int out_dim = 0;
};

LayerSpec linear_layer(int in_dim, int out_dim);
LayerSpec layer_norm_layer(int dim);
LayerSpec elu_layer(int dim);

using ParamId = std::size_t;

// Owns every named parameter array of a model. Ids are dense indices in
// registration order, which is also the checkpoint order.
class ParameterStore {
 public:
  ParamId add(std::string name, RealMatrix value);

  std::size_t size() const { return values_.size(); }
  std::size_t scalar_count() const;

  RealMatrix& operator[](ParamId id) { return values_.at(id); }
  const RealMatrix& operator[](ParamId id) const { return values_.at(id); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  std::optional<ParamId> find(std::string_view name) const;

  // True when names, shapes and every stored bit agree.
  bool bitwise_equal(const ParameterStore& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<RealMatrix> values_;
};

// One gradient array per parameter array, shape-matched to a ParameterStore.
using Gradients = std::vector<RealMatrix>;

Gradients zero_gradients(const ParameterStore& params);

// Parameter ids of one layer: (weight, bias) for linear, (gain, bias) for
// layer norm, unused for elu.
struct LayerParams {
  ParamId first = 0;
  ParamId second = 0;
};

struct Mlp {
  std::vector<LayerSpec> layers;
  std::vector<LayerParams> params;

  int in_dim() const { return layers.front().in_dim; }
  int out_dim() const { return layers.back().out_dim; }
  // Every parameter id referenced by the network.
  std::vector<ParamId> parameter_ids() const;
};

// Registers parameters for `layers` under "<prefix>.<index>.<w|b|gain|bias>".
// Linear layers use U(-1/sqrt(in), 1/sqrt(in)) for weights and biases; layer
// norm starts at gain 1, bias 0.
Mlp make_mlp(ParameterStore& store, std::string_view prefix,
             std::vector<LayerSpec> layers, RandomStream& rng);

// Throws ShapeError unless dims chain and parameter shapes match the specs.
void validate_mlp(const Mlp& mlp, const ParameterStore& store);

RealMatrix elu(const RealMatrix& x);

// Column-wise normalization: every column is shifted to zero mean and scaled
// to unit (population) variance, then gain/bias are applied per row.
RealMatrix layer_norm(const RealMatrix& x, const RealVector& gain,
                      const RealVector& bias, double epsilon = kLayerNormEpsilon);

// Column block width of the tape-free forward pass.
inline constexpr int kForwardBlock = 16;

// Tape-free evaluation; `input` holds one sample per column. Columns are
// evaluated in zero-padded blocks of kForwardBlock, so each output column is
// bitwise independent of how many other columns share the call.
RealMatrix mlp_forward(const Mlp& mlp, const ParameterStore& store,
                       const RealMatrix& input);

// Same network evaluated in long double throughout (parameters are widened
// exactly). Slow; meant for checking double-precision code.
ExtendedMatrix mlp_forward_extended(const Mlp& mlp, const ParameterStore& store,
                                    const ExtendedMatrix& input);

}  // namespace jumpy::nn

#endif  // JUMPY_NN_MLP_H_
