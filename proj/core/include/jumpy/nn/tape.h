#ifndef JUMPY_NN_TAPE_H_
#define JUMPY_NN_TAPE_H_

#include <cstddef>
#include <span>
#include <vector>

#include "jumpy/nn/mlp.h"

namespace jumpy::nn {

// Handle to a node recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Records a forward computation over matrices so gradients with respect to
// every ParameterStore array can be accumulated exactly in one reverse sweep.
// A tape is single-use and single-owner; the ParameterStore must outlive it
// and stay unmodified while the tape is alive.
class Tape {
 public:
  explicit Tape(const ParameterStore& params);

  Var parameter(ParamId id);
  Var constant(RealMatrix value);

  Var matmul(Var a, Var b);
  // x (m x n) + b (m x 1) broadcast over columns.
  Var add_bias(Var x, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var x, double factor);
  Var exp(Var x);
  Var elu(Var x);
  Var tanh(Var x);
  // Identity inside [lo, hi], constant outside (zero gradient there).
  Var clamp(Var x, double lo, double hi);
  Var layer_norm(Var x, Var gain, Var bias, double epsilon = kLayerNormEpsilon);
  Var concat_rows(std::span<const Var> parts);
  Var slice_rows(Var x, int start, int count);
  // out.col(j) = x.col(index[j]); columns may repeat.
  Var gather_cols(Var x, std::vector<int> index);
  // Column-major reinterpretation with the same element count.
  Var reshape(Var x, int rows, int cols);
  Var sum(Var x);           // -> 1x1
  Var sum_squares(Var x);   // -> 1x1
  // Sum over all entries of KL(N(mean, exp(log_std)^2) || N(0, 1)) -> 1x1.
  Var kl_standard(Var mean, Var log_std);

  const RealMatrix& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a 1x1 node. Returns one gradient per ParameterStore
  // array; arrays never touched by the tape get exact zeros.
  Gradients backward(Var loss, double seed = 1.0) const;

 private:
  enum class Op {
    kParameter,
    kConstant,
    kMatMul,
    kAddBias,
    kAdd,
    kSub,
    kMul,
    kScale,
    kExp,
    kElu,
    kTanh,
    kClamp,
    kLayerNorm,
    kConcatRows,
    kSliceRows,
    kGatherCols,
    kReshape,
    kSum,
    kSumSquares,
    kKlStandard,
  };

  struct Node {
    Op op;
    std::vector<int> inputs;
    RealMatrix value;
    // Op-specific cache: normalized activations for layer norm, the input for
    // clamp, etc.
    RealMatrix cache;
    RealVector cache_vec;
    std::vector<int> index;
    double a = 0.0;
    double b = 0.0;
    ParamId param = 0;
  };

  Var push(Node node);
  const Node& node(Var v) const;

  const ParameterStore* params_;
  std::vector<Node> nodes_;
};

// Recorded counterpart of mlp_forward(mlp, store, input).
Var mlp_forward(Tape& tape, const Mlp& mlp, Var input);

}  // namespace jumpy::nn

#endif  // JUMPY_NN_TAPE_H_
