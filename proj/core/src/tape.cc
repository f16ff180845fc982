#include "jumpy/nn/tape.h"

#include <cmath>
#include <string>
#include <utility>

#include "jumpy/errors.h"

namespace jumpy::nn {
namespace {

void require_same_shape(const RealMatrix& a, const RealMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

}  // namespace

Tape::Tape(const ParameterStore& params) : params_(&params) {}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractError("tape: invalid variable handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const RealMatrix& Tape::value(Var v) const {
  const Node& n = node(v);
  if (n.op == Op::kParameter) return (*params_)[n.param];
  return n.value;
}

Var Tape::parameter(ParamId id) {
  if (id >= params_->size()) throw ContractError("tape: unknown parameter id");
  Node n{Op::kParameter, {}, {}, {}, {}, {}, 0.0, 0.0, id};
  return push(std::move(n));
}

Var Tape::constant(RealMatrix value) {
  Node n{Op::kConstant, {}, std::move(value), {}, {}, {}, 0.0, 0.0, 0};
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const RealMatrix& va = value(a);
  const RealMatrix& vb = value(b);
  if (va.cols() != vb.rows()) throw ShapeError("matmul: inner dimensions differ");
  RealMatrix out(va.rows(), vb.cols());
  out.noalias() = va * vb;
  return push(Node{Op::kMatMul, {a.id, b.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::add_bias(Var x, Var bias) {
  const RealMatrix& vx = value(x);
  const RealMatrix& vb = value(bias);
  if (vb.cols() != 1 || vb.rows() != vx.rows()) throw ShapeError("add_bias: bias must be m x 1");
  RealMatrix out = vx;
  out.colwise() += vb.col(0);
  return push(Node{Op::kAddBias, {x.id, bias.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  RealMatrix out = value(a) + value(b);
  return push(Node{Op::kAdd, {a.id, b.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  RealMatrix out = value(a) - value(b);
  return push(Node{Op::kSub, {a.id, b.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  RealMatrix out = value(a).cwiseProduct(value(b));
  return push(Node{Op::kMul, {a.id, b.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::scale(Var x, double factor) {
  RealMatrix out = factor * value(x);
  return push(Node{Op::kScale, {x.id}, std::move(out), {}, {}, {}, factor, 0, 0});
}

Var Tape::exp(Var x) {
  RealMatrix out = value(x).array().exp().matrix();
  return push(Node{Op::kExp, {x.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::elu(Var x) {
  RealMatrix out = nn::elu(value(x));
  return push(Node{Op::kElu, {x.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::tanh(Var x) {
  RealMatrix out = value(x).array().tanh().matrix();
  return push(Node{Op::kTanh, {x.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::clamp(Var x, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lo > hi");
  RealMatrix out = value(x).cwiseMax(lo).cwiseMin(hi);
  return push(Node{Op::kClamp, {x.id}, std::move(out), {}, {}, {}, lo, hi, 0});
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double epsilon) {
  const RealMatrix& vx = value(x);
  const RealMatrix& g = value(gain);
  const RealMatrix& b = value(bias);
  if (g.cols() != 1 || b.cols() != 1 || g.rows() != vx.rows() || b.rows() != vx.rows()) {
    throw ShapeError("layer_norm: gain/bias length must equal feature dim");
  }
  if (!(epsilon > 0.0)) throw DomainError("layer_norm: epsilon must be positive");
  const double n = static_cast<double>(vx.rows());
  RealMatrix normalized(vx.rows(), vx.cols());
  RealVector inv_std(vx.cols());
  for (Eigen::Index c = 0; c < vx.cols(); ++c) {
    const double mean = vx.col(c).sum() / n;
    const auto centered = (vx.col(c).array() - mean).eval();
    const double var = centered.square().sum() / n;
    inv_std(c) = 1.0 / std::sqrt(var + epsilon);
    normalized.col(c) = (centered * inv_std(c)).matrix();
  }
  RealMatrix out = (normalized.array().colwise() * g.col(0).array()).matrix();
  out.colwise() += b.col(0);
  return push(Node{Op::kLayerNorm, {x.id, gain.id, bias.id}, std::move(out), std::move(normalized),
                   std::move(inv_std), {}, epsilon, 0, 0});
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  std::vector<int> inputs;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += value(p).rows();
    inputs.push_back(p.id);
  }
  RealMatrix out(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    const RealMatrix& v = value(p);
    out.middleRows(r, v.rows()) = v;
    r += v.rows();
  }
  return push(Node{Op::kConcatRows, std::move(inputs), std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::slice_rows(Var x, int start, int count) {
  const RealMatrix& v = value(x);
  if (start < 0 || count < 0 || start + count > v.rows()) throw ShapeError("slice_rows: out of range");
  RealMatrix out = v.middleRows(start, count);
  return push(Node{Op::kSliceRows, {x.id}, std::move(out), {}, {}, {}, static_cast<double>(start),
                   static_cast<double>(count), 0});
}

Var Tape::gather_cols(Var x, std::vector<int> index) {
  const RealMatrix& v = value(x);
  RealMatrix out(v.rows(), static_cast<Eigen::Index>(index.size()));
  for (std::size_t j = 0; j < index.size(); ++j) {
    if (index[j] < 0 || index[j] >= v.cols()) throw ShapeError("gather_cols: index out of range");
    out.col(static_cast<Eigen::Index>(j)) = v.col(index[j]);
  }
  return push(Node{Op::kGatherCols, {x.id}, std::move(out), {}, {}, std::move(index), 0, 0, 0});
}

Var Tape::reshape(Var x, int rows, int cols) {
  const RealMatrix& v = value(x);
  if (static_cast<Eigen::Index>(rows) * cols != v.size()) throw ShapeError("reshape: size mismatch");
  RealMatrix out = Eigen::Map<const RealMatrix>(v.data(), rows, cols);
  return push(Node{Op::kReshape, {x.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::sum(Var x) {
  RealMatrix out(1, 1);
  out(0, 0) = value(x).sum();
  return push(Node{Op::kSum, {x.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::sum_squares(Var x) {
  RealMatrix out(1, 1);
  out(0, 0) = value(x).squaredNorm();
  return push(Node{Op::kSumSquares, {x.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Var Tape::kl_standard(Var mean, Var log_std) {
  const RealMatrix& mu = value(mean);
  const RealMatrix& ls = value(log_std);
  require_same_shape(mu, ls, "kl_standard");
  RealMatrix out(1, 1);
  out(0, 0) =
      0.5 * (mu.array().square() + (2.0 * ls.array()).exp() - 1.0 - 2.0 * ls.array()).sum();
  return push(Node{Op::kKlStandard, {mean.id, log_std.id}, std::move(out), {}, {}, {}, 0, 0, 0});
}

Gradients Tape::backward(Var loss, double seed) const {
  const Node& root = node(loss);
  const RealMatrix& root_value = value(loss);
  if (root_value.rows() != 1 || root_value.cols() != 1) {
    throw ContractError("backward: loss node is not scalar (" + std::to_string(root_value.rows()) +
                        "x" + std::to_string(root_value.cols()) + ")");
  }
  (void)root;

  Gradients param_grads = zero_gradients(*params_);
  std::vector<RealMatrix> grads(nodes_.size());
  std::vector<bool> has(nodes_.size(), false);
  auto accumulate = [&](int id, const auto& g) {
    const auto i = static_cast<std::size_t>(id);
    if (has[i]) {
      grads[i] += g;
    } else {
      grads[i] = g;
      has[i] = true;
    }
  };

  grads[static_cast<std::size_t>(loss.id)] = RealMatrix::Constant(1, 1, seed);
  has[static_cast<std::size_t>(loss.id)] = true;

  for (int id = loss.id; id >= 0; --id) {
    const auto i = static_cast<std::size_t>(id);
    if (!has[i]) continue;
    const Node& n = nodes_[i];
    const RealMatrix& g = grads[i];
    switch (n.op) {
      case Op::kParameter:
        param_grads[n.param] += g;
        break;
      case Op::kConstant:
        break;
      case Op::kMatMul: {
        const RealMatrix& a = value(Var{n.inputs[0]});
        const RealMatrix& b = value(Var{n.inputs[1]});
        RealMatrix ga(a.rows(), a.cols());
        ga.noalias() = g * b.transpose();
        RealMatrix gb(b.rows(), b.cols());
        gb.noalias() = a.transpose() * g;
        accumulate(n.inputs[0], ga);
        accumulate(n.inputs[1], gb);
        break;
      }
      case Op::kAddBias:
        accumulate(n.inputs[0], g);
        accumulate(n.inputs[1], RealMatrix(g.rowwise().sum()));
        break;
      case Op::kAdd:
        accumulate(n.inputs[0], g);
        accumulate(n.inputs[1], g);
        break;
      case Op::kSub:
        accumulate(n.inputs[0], g);
        accumulate(n.inputs[1], RealMatrix(-g));
        break;
      case Op::kMul:
        accumulate(n.inputs[0], RealMatrix(g.cwiseProduct(value(Var{n.inputs[1]}))));
        accumulate(n.inputs[1], RealMatrix(g.cwiseProduct(value(Var{n.inputs[0]}))));
        break;
      case Op::kScale:
        accumulate(n.inputs[0], RealMatrix(n.a * g));
        break;
      case Op::kExp:
        accumulate(n.inputs[0], RealMatrix(g.cwiseProduct(n.value)));
        break;
      case Op::kElu: {
        const RealMatrix& x = value(Var{n.inputs[0]});
        // d/dx = 1 for x > 0, alpha * exp(x) = y + alpha otherwise.
        RealMatrix d = (x.array() > 0.0).select(1.0, n.value.array() + kEluAlpha).matrix();
        accumulate(n.inputs[0], RealMatrix(g.cwiseProduct(d)));
        break;
      }
      case Op::kTanh:
        accumulate(n.inputs[0],
                   RealMatrix((g.array() * (1.0 - n.value.array().square())).matrix()));
        break;
      case Op::kClamp: {
        const RealMatrix& x = value(Var{n.inputs[0]});
        RealMatrix d = ((x.array() >= n.a) && (x.array() <= n.b)).select(g.array(), 0.0).matrix();
        accumulate(n.inputs[0], d);
        break;
      }
      case Op::kLayerNorm: {
        const RealMatrix& xhat = n.cache;
        const RealMatrix& gain = value(Var{n.inputs[1]});
        const double dim = static_cast<double>(xhat.rows());
        RealMatrix dxhat = (g.array().colwise() * gain.col(0).array()).matrix();
        RealMatrix dx(xhat.rows(), xhat.cols());
        for (Eigen::Index c = 0; c < xhat.cols(); ++c) {
          const double s1 = dxhat.col(c).sum();
          const double s2 = dxhat.col(c).dot(xhat.col(c));
          dx.col(c) = (n.cache_vec(c) / dim) *
                      (dim * dxhat.col(c).array() - s1 - xhat.col(c).array() * s2).matrix();
        }
        accumulate(n.inputs[0], dx);
        accumulate(n.inputs[1], RealMatrix(g.cwiseProduct(xhat).rowwise().sum()));
        accumulate(n.inputs[2], RealMatrix(g.rowwise().sum()));
        break;
      }
      case Op::kConcatRows: {
        Eigen::Index r = 0;
        for (int in : n.inputs) {
          const Eigen::Index rows = value(Var{in}).rows();
          accumulate(in, RealMatrix(g.middleRows(r, rows)));
          r += rows;
        }
        break;
      }
      case Op::kSliceRows: {
        const RealMatrix& x = value(Var{n.inputs[0]});
        RealMatrix d = RealMatrix::Zero(x.rows(), x.cols());
        d.middleRows(static_cast<Eigen::Index>(n.a), static_cast<Eigen::Index>(n.b)) = g;
        accumulate(n.inputs[0], d);
        break;
      }
      case Op::kGatherCols: {
        const RealMatrix& x = value(Var{n.inputs[0]});
        RealMatrix d = RealMatrix::Zero(x.rows(), x.cols());
        for (std::size_t j = 0; j < n.index.size(); ++j) {
          d.col(n.index[j]) += g.col(static_cast<Eigen::Index>(j));
        }
        accumulate(n.inputs[0], d);
        break;
      }
      case Op::kReshape: {
        const RealMatrix& x = value(Var{n.inputs[0]});
        accumulate(n.inputs[0], RealMatrix(Eigen::Map<const RealMatrix>(g.data(), x.rows(), x.cols())));
        break;
      }
      case Op::kSum: {
        const RealMatrix& x = value(Var{n.inputs[0]});
        accumulate(n.inputs[0], RealMatrix::Constant(x.rows(), x.cols(), g(0, 0)));
        break;
      }
      case Op::kSumSquares:
        accumulate(n.inputs[0], RealMatrix(2.0 * g(0, 0) * value(Var{n.inputs[0]})));
        break;
      case Op::kKlStandard: {
        const RealMatrix& mu = value(Var{n.inputs[0]});
        const RealMatrix& ls = value(Var{n.inputs[1]});
        accumulate(n.inputs[0], RealMatrix(g(0, 0) * mu));
        accumulate(n.inputs[1], RealMatrix((g(0, 0) * ((2.0 * ls.array()).exp() - 1.0)).matrix()));
        break;
      }
    }
  }
  return param_grads;
}

Var mlp_forward(Tape& tape, const Mlp& mlp, Var input) {
  if (tape.value(input).rows() != mlp.in_dim()) {
    throw ShapeError("mlp_forward: input has " + std::to_string(tape.value(input).rows()) +
                     " rows, expected " + std::to_string(mlp.in_dim()));
  }
  Var h = input;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    switch (mlp.layers[i].kind) {
      case LayerKind::kLinear:
        h = tape.add_bias(tape.matmul(tape.parameter(mlp.params[i].first), h),
                          tape.parameter(mlp.params[i].second));
        break;
      case LayerKind::kLayerNorm:
        h = tape.layer_norm(h, tape.parameter(mlp.params[i].first),
                            tape.parameter(mlp.params[i].second));
        break;
      case LayerKind::kElu:
        h = tape.elu(h);
        break;
    }
  }
  return h;
}

}  // namespace jumpy::nn
