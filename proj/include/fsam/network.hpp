// fsam/network.hpp

// Copyright 2026  fsam authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fsam/common.hpp"
#include "fsam/matrix.hpp"

namespace fsam {

// Feed-forward net: ReLU hidden layers, softmax output. Weight matrices are
// out x in; a features row is one frame.
struct Layer {
  Matrix weights;
  Vector bias;
};

struct Network {
  std::vector<Layer> layers;
  uint64_t seed = 0;

  int input_dim() const { return static_cast<int>(layers.front().weights.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weights.rows()); }

  int num_parameters() const {
    int n = 0;
    for (const auto& l : layers)
      n += static_cast<int>(l.weights.size() + l.bias.size());
    return n;
  }
};

// Zero biases, weights uniform in +-sqrt(6 / (fan_in + fan_out)).
// Deterministic: the same seed gives a bit-identical network.
inline Network init_network(const std::vector<int>& layer_sizes, uint64_t seed) {
  if (layer_sizes.size() < 2) throw Error("init_network: need at least input and output sizes");
  for (int s : layer_sizes)
    if (s <= 0) throw Error("init_network: layer sizes must be positive");
  Network net;
  net.seed = seed;
  Rng rng(seed);
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int in = layer_sizes[l], out = layer_sizes[l + 1];
    Layer layer;
    layer.weights.resize(out, in);
    const double bound = std::sqrt(6.0 / (in + out));
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weights(r, c) = rng.uniform(-bound, bound);
    layer.bias = Vector::Zero(out);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre_acts;     // per layer, T x out
  std::vector<Matrix> activations;  // per hidden layer, T x out (ReLU applied)
};

namespace detail {

inline void softmax_rows(Matrix& m) {
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    const double hi = m.row(t).maxCoeff();
    m.row(t) = (m.row(t).array() - hi).exp();
    m.row(t) /= m.row(t).sum();
  }
}

}  // namespace detail

// Posterior rows softmax(a_t); the cache (when given) keeps what backward
// needs. Pure: safe to call concurrently on the same network.
inline Matrix forward(const Network& net, const Matrix& features, ForwardCache* cache = nullptr) {
  if (features.cols() != net.input_dim())
    throw DimensionError("forward: input dim " + std::to_string(features.cols()) +
                         " != network input " + std::to_string(net.input_dim()));
  if (cache) {
    cache->input = features;
    cache->pre_acts.clear();
    cache->activations.clear();
  }
  Matrix h = features;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    Matrix z = h * net.layers[l].weights.transpose();
    z.rowwise() += net.layers[l].bias.transpose();
    if (cache) cache->pre_acts.push_back(z);
    if (l + 1 < net.layers.size()) {
      h = z.cwiseMax(0.0);  // ReLU
      if (cache) cache->activations.push_back(h);
    } else {
      h = z;
    }
  }
  detail::softmax_rows(h);
  return h;
}

// Log posteriors computed directly from the output pre-activations, so no
// entry ever underflows to -inf.
inline Matrix log_posteriors_from_cache(const ForwardCache& cache) {
  Matrix lp = cache.pre_acts.back();
  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    const double hi = lp.row(t).maxCoeff();
    const double lse = hi + std::log((lp.row(t).array() - hi).exp().sum());
    lp.row(t) = lp.row(t).array() - lse;
  }
  return lp;
}

using Gradients = std::vector<Layer>;

// Backpropagates an arbitrary gradient w.r.t. the output activations (the
// pre-softmax logits). Gradients over a batch are summed across frames, so
// backward is linear in output_grad.
inline Gradients backward(const Network& net, const ForwardCache& cache,
                          const Matrix& output_grad) {
  if (output_grad.rows() != cache.input.rows() || output_grad.cols() != net.output_dim())
    throw DimensionError("backward: output_grad shape mismatch");
  const int L = static_cast<int>(net.layers.size());
  Gradients grads(L);
  Matrix delta = output_grad;
  for (int l = L - 1; l >= 0; --l) {
    const Matrix& below = l == 0 ? cache.input : cache.activations[l - 1];
    grads[l].weights = delta.transpose() * below;
    grads[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = (delta * net.layers[l].weights).eval();
      delta.array() *= (cache.pre_acts[l - 1].array() > 0.0).cast<double>();
    }
  }
  return grads;
}

// Momentum buffers for sgd_step; cleared when training restores weights.
struct SgdState {
  std::vector<Layer> velocity;

  void reset() { velocity.clear(); }
};

// theta += lr * (grad + momentum * previous_update). The caller supplies
// gradients pointing in the direction of improvement (ascent on the
// objective), so the sign is uniform across criteria.
inline void sgd_step(Network& net, const Gradients& grads, double lr, double momentum,
                     SgdState& state) {
  if (grads.size() != net.layers.size()) throw DimensionError("sgd_step: gradient shape mismatch");
  if (state.velocity.empty()) {
    state.velocity.resize(net.layers.size());
    for (size_t l = 0; l < net.layers.size(); ++l) {
      state.velocity[l].weights = Matrix::Zero(net.layers[l].weights.rows(),
                                               net.layers[l].weights.cols());
      state.velocity[l].bias = Vector::Zero(net.layers[l].bias.size());
    }
  }
  for (size_t l = 0; l < net.layers.size(); ++l) {
    if (grads[l].weights.rows() != net.layers[l].weights.rows() ||
        grads[l].weights.cols() != net.layers[l].weights.cols())
      throw DimensionError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
    state.velocity[l].weights = grads[l].weights + momentum * state.velocity[l].weights;
    state.velocity[l].bias = grads[l].bias + momentum * state.velocity[l].bias;
    net.layers[l].weights += lr * state.velocity[l].weights;
    net.layers[l].bias += lr * state.velocity[l].bias;
  }
}

// Gradient of sum_t sum_s target ln softmax(a)_s w.r.t. the logits:
// target - posterior, already the improvement direction.
inline Matrix ce_output_grad(const Matrix& posteriors, const Matrix& targets) {
  if (posteriors.rows() != targets.rows() || posteriors.cols() != targets.cols())
    throw DimensionError("ce_output_grad: shape mismatch");
  return targets - posteriors;
}

// Model file: magic FSAM1, little-endian; u32 layer count, u32 sizes
// (count + 1 of them), then per layer the weights row-major as f64 followed
// by the bias.
inline void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_network: cannot write " + path);
  out.write("FSAM1", 5);
  auto put_u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(static_cast<uint32_t>(net.layers.size()));
  put_u32(static_cast<uint32_t>(net.input_dim()));
  for (const auto& l : net.layers) put_u32(static_cast<uint32_t>(l.weights.rows()));
  for (const auto& l : net.layers) {
    out.write(reinterpret_cast<const char*>(l.weights.data()),
              static_cast<std::streamsize>(sizeof(double) * l.weights.size()));
    out.write(reinterpret_cast<const char*>(l.bias.data()),
              static_cast<std::streamsize>(sizeof(double) * l.bias.size()));
  }
  if (!out) throw Error("save_network: write failed for " + path);
}

inline Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("load_network: cannot open " + path);
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, "FSAM1", 5) != 0)
    throw ParseError("load_network: " + path + ": bad magic");
  auto get_u32 = [&]() {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
      throw ParseError("load_network: " + path + ": truncated header");
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
  };
  const uint32_t num_layers = get_u32();
  if (num_layers == 0 || num_layers > 64)
    throw ParseError("load_network: " + path + ": bad layer count");
  std::vector<uint32_t> sizes(num_layers + 1);
  for (auto& s : sizes) s = get_u32();
  Network net;
  for (uint32_t l = 0; l < num_layers; ++l) {
    Layer layer;
    layer.weights.resize(sizes[l + 1], sizes[l]);
    layer.bias.resize(sizes[l + 1]);
    if (!in.read(reinterpret_cast<char*>(layer.weights.data()),
                 static_cast<std::streamsize>(sizeof(double) * layer.weights.size())) ||
        !in.read(reinterpret_cast<char*>(layer.bias.data()),
                 static_cast<std::streamsize>(sizeof(double) * layer.bias.size())))
      throw ParseError("load_network: " + path + ": truncated at layer " + std::to_string(l));
    net.layers.push_back(std::move(layer));
  }
  return net;
}

}  // namespace fsam
