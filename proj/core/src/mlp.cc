#include "jumpy/nn/mlp.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <utility>

#include "jumpy/errors.h"

namespace jumpy::nn {

LayerSpec linear_layer(int in_dim, int out_dim) {
  if (in_dim <= 0 || out_dim <= 0) {
    throw ShapeError("linear layer dims must be positive");
  }
  return {LayerKind::kLinear, in_dim, out_dim};
}

LayerSpec layer_norm_layer(int dim) {
  if (dim <= 0) throw ShapeError("layer_norm dim must be positive");
  return {LayerKind::kLayerNorm, dim, dim};
}

LayerSpec elu_layer(int dim) {
  if (dim <= 0) throw ShapeError("elu dim must be positive");
  return {LayerKind::kElu, dim, dim};
}

ParamId ParameterStore::add(std::string name, RealMatrix value) {
  if (find(name)) throw ContractError("duplicate parameter name: " + name);
  if (!value.allFinite()) throw NumericalError("non-finite parameter: " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

std::optional<ParamId> ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

bool ParameterStore::bitwise_equal(const ParameterStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const RealMatrix& a = values_[i];
    const RealMatrix& b = other.values_[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) != 0) {
      return false;
    }
  }
  return true;
}

Gradients zero_gradients(const ParameterStore& params) {
  Gradients g;
  g.reserve(params.size());
  for (ParamId i = 0; i < params.size(); ++i) {
    g.push_back(RealMatrix::Zero(params[i].rows(), params[i].cols()));
  }
  return g;
}

std::vector<ParamId> Mlp::parameter_ids() const {
  std::vector<ParamId> ids;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::kElu) continue;
    ids.push_back(params[i].first);
    ids.push_back(params[i].second);
  }
  return ids;
}

Mlp make_mlp(ParameterStore& store, std::string_view prefix,
             std::vector<LayerSpec> layers, RandomStream& rng) {
  if (layers.empty()) throw ShapeError("mlp needs at least one layer");
  Mlp mlp;
  mlp.params.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = layers[i];
    if (i > 0 && layers[i - 1].out_dim != spec.in_dim) {
      throw ShapeError("mlp layer dims do not chain at layer " + std::to_string(i));
    }
    const std::string base = std::string(prefix) + "." + std::to_string(i);
    switch (spec.kind) {
      case LayerKind::kLinear: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in_dim));
        RealMatrix w(spec.out_dim, spec.in_dim);
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
          for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
        }
        RealMatrix b(spec.out_dim, 1);
        for (Eigen::Index r = 0; r < b.rows(); ++r) b(r, 0) = rng.uniform(-bound, bound);
        mlp.params[i].first = store.add(base + ".w", std::move(w));
        mlp.params[i].second = store.add(base + ".b", std::move(b));
        break;
      }
      case LayerKind::kLayerNorm:
        mlp.params[i].first = store.add(base + ".gain", RealMatrix::Ones(spec.in_dim, 1));
        mlp.params[i].second = store.add(base + ".bias", RealMatrix::Zero(spec.in_dim, 1));
        break;
      case LayerKind::kElu:
        break;
    }
  }
  mlp.layers = std::move(layers);
  validate_mlp(mlp, store);
  return mlp;
}

void validate_mlp(const Mlp& mlp, const ParameterStore& store) {
  if (mlp.layers.empty() || mlp.layers.size() != mlp.params.size()) {
    throw ShapeError("mlp layer/parameter lists disagree");
  }
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    const LayerSpec& spec = mlp.layers[i];
    if (spec.in_dim <= 0 || spec.out_dim <= 0) throw ShapeError("mlp dims must be positive");
    if (i > 0 && mlp.layers[i - 1].out_dim != spec.in_dim) {
      throw ShapeError("mlp layer dims do not chain at layer " + std::to_string(i));
    }
    switch (spec.kind) {
      case LayerKind::kLinear: {
        const RealMatrix& w = store[mlp.params[i].first];
        const RealMatrix& b = store[mlp.params[i].second];
        if (w.rows() != spec.out_dim || w.cols() != spec.in_dim || b.rows() != spec.out_dim ||
            b.cols() != 1) {
          throw ShapeError("linear parameter shape mismatch at layer " + std::to_string(i));
        }
        break;
      }
      case LayerKind::kLayerNorm: {
        if (spec.in_dim != spec.out_dim) throw ShapeError("layer_norm must preserve dim");
        const RealMatrix& g = store[mlp.params[i].first];
        const RealMatrix& b = store[mlp.params[i].second];
        if (g.rows() != spec.in_dim || g.cols() != 1 || b.rows() != spec.in_dim || b.cols() != 1) {
          throw ShapeError("layer_norm parameter shape mismatch at layer " + std::to_string(i));
        }
        break;
      }
      case LayerKind::kElu:
        if (spec.in_dim != spec.out_dim) throw ShapeError("elu must preserve dim");
        break;
    }
  }
}

RealMatrix elu(const RealMatrix& x) {
  RealMatrix out = (x.array().max(0.0) + kEluAlpha * (x.array().min(0.0).exp() - 1.0)).matrix();
  // exp(v) - 1 loses relative accuracy as v -> 0-; there the second-order
  // series is exact to rounding.
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    if (v < 0.0 && v > -1e-5) out.data()[i] = kEluAlpha * (v + 0.5 * v * v);
  }
  return out;
}

RealMatrix layer_norm(const RealMatrix& x, const RealVector& gain, const RealVector& bias,
                      double epsilon) {
  if (gain.size() != x.rows() || bias.size() != x.rows()) {
    throw ShapeError("layer_norm: gain/bias length must equal feature dim");
  }
  if (!(epsilon > 0.0)) throw DomainError("layer_norm: epsilon must be positive");
  const double n = static_cast<double>(x.rows());
  RealMatrix out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).sum() / n;
    const auto centered = (x.col(c).array() - mean).eval();
    const double var = centered.square().sum() / n;
    const double inv_std = 1.0 / std::sqrt(var + epsilon);
    out.col(c) = (centered * inv_std * gain.array() + bias.array()).matrix();
  }
  return out;
}

namespace {

RealMatrix forward_block(const Mlp& mlp, const ParameterStore& store, RealMatrix h) {
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    switch (mlp.layers[i].kind) {
      case LayerKind::kLinear: {
        RealMatrix next(mlp.layers[i].out_dim, h.cols());
        next.noalias() = store[mlp.params[i].first] * h;
        next.colwise() += store[mlp.params[i].second].col(0);
        h = std::move(next);
        break;
      }
      case LayerKind::kLayerNorm:
        h = layer_norm(h, store[mlp.params[i].first].col(0), store[mlp.params[i].second].col(0));
        break;
      case LayerKind::kElu:
        h = elu(h);
        break;
    }
  }
  return h;
}

}  // namespace

RealMatrix mlp_forward(const Mlp& mlp, const ParameterStore& store, const RealMatrix& input) {
  if (input.rows() != mlp.in_dim()) {
    throw ShapeError("mlp_forward: input has " + std::to_string(input.rows()) +
                     " rows, expected " + std::to_string(mlp.in_dim()));
  }
  RealMatrix out(mlp.out_dim(), input.cols());
  RealMatrix block(input.rows(), kForwardBlock);
  for (Eigen::Index start = 0; start < input.cols(); start += kForwardBlock) {
    const Eigen::Index n = std::min<Eigen::Index>(kForwardBlock, input.cols() - start);
    block.leftCols(n) = input.middleCols(start, n);
    if (n < kForwardBlock) block.rightCols(kForwardBlock - n).setZero();
    out.middleCols(start, n) = forward_block(mlp, store, block).leftCols(n);
  }
  return out;
}

ExtendedMatrix mlp_forward_extended(const Mlp& mlp, const ParameterStore& store,
                                    const ExtendedMatrix& input) {
  if (input.rows() != mlp.in_dim()) throw ShapeError("mlp_forward_extended: input row mismatch");
  ExtendedMatrix h = input;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    switch (mlp.layers[i].kind) {
      case LayerKind::kLinear: {
        const ExtendedMatrix w = store[mlp.params[i].first].cast<long double>();
        const ExtendedMatrix b = store[mlp.params[i].second].cast<long double>();
        ExtendedMatrix next = w * h;
        next.colwise() += b.col(0);
        h = std::move(next);
        break;
      }
      case LayerKind::kLayerNorm: {
        const ExtendedMatrix g = store[mlp.params[i].first].cast<long double>();
        const ExtendedMatrix b = store[mlp.params[i].second].cast<long double>();
        const long double n = static_cast<long double>(h.rows());
        for (Eigen::Index c = 0; c < h.cols(); ++c) {
          const long double mean = h.col(c).sum() / n;
          const auto centered = (h.col(c).array() - mean).eval();
          const long double var = centered.square().sum() / n;
          const long double inv_std = 1.0L / std::sqrt(var + static_cast<long double>(kLayerNormEpsilon));
          h.col(c) = (centered * inv_std * g.col(0).array() + b.col(0).array()).matrix();
        }
        break;
      }
      case LayerKind::kElu:
        h = h.unaryExpr([](long double v) {
          return v > 0.0L ? v : static_cast<long double>(kEluAlpha) * std::expm1(v);
        });
        break;
    }
  }
  return h;
}

}  // namespace jumpy::nn
