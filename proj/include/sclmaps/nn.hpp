// Copyright 2026 The sclmaps Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense tanh networks with exact reverse-mode gradients, Adam, operator-norm
// projection for Lipschitz training, and a differentiable Gram-Schmidt layer.
//
// Batches are column-major: a batch of B inputs of width n is an n x B matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sclmaps/error.hpp"

namespace sclmaps {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { tanh, identity };

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw DataError("unknown activation '" + s + "'");
}

struct DenseLayer {
  Mat W;  // out x in
  Vec b;  // out
  Activation activation = Activation::tanh;

  int in() const { return static_cast<int>(W.cols()); }
  int out() const { return static_cast<int>(W.rows()); }
};

struct Mlp {
  std::vector<DenseLayer> layers;
  // Bumped by every in-place update so that tapes taken earlier are rejected.
  std::uint64_t version = 0;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in(); }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out(); }

  int parameter_count() const {
    int n = 0;
    for (const auto& l : layers) n += static_cast<int>(l.W.size() + l.b.size());
    return n;
  }

  void validate() const {
    if (layers.empty()) throw DataError("network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.b.size() != l.W.rows()) throw DataError("bias length does not match layer rows");
      if (i > 0 && layers[i - 1].out() != l.in()) throw DataError("layer shapes do not chain");
      if (!l.W.allFinite() || !l.b.allFinite()) throw DataError("non-finite network parameter");
    }
  }
};

// Glorot-uniform weights, zero biases. Hidden layers use `hidden_act`, the last `out_act`.
inline Mlp make_mlp(int in, std::span<const int> hidden, int out, std::mt19937_64& rng,
                    Activation hidden_act = Activation::tanh,
                    Activation out_act = Activation::identity) {
  Mlp net;
  int fan_in = in;
  auto add = [&](int fan_out, Activation act) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.W.resize(fan_out, fan_in);
    for (Eigen::Index c = 0; c < layer.W.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.W.rows(); ++r) layer.W(r, c) = dist(rng);
    }
    layer.b = Vec::Zero(fan_out);
    layer.activation = act;
    net.layers.push_back(std::move(layer));
    fan_in = fan_out;
  };
  for (int h : hidden) add(h, hidden_act);
  add(out, out_act);
  return net;
}

struct MlpTape {
  const Mlp* params = nullptr;
  std::uint64_t version = 0;
  std::vector<Mat> inputs;   // input to each layer
  std::vector<Mat> outputs;  // post-activation output of each layer
};

struct MlpPass {
  Mat output;
  MlpTape tape;
};

namespace detail {

// Vectorized tanh, within a few ulp of std::tanh. Small arguments use the
// Cephes rational form, larger ones 1 - 2 / (exp(2x) + 1).
inline void tanh_inplace(double* data, Eigen::Index n) {
  constexpr Eigen::Index kChunk = 256;
  using Chunk = Eigen::Array<double, Eigen::Dynamic, 1, 0, kChunk, 1>;
  for (Eigen::Index off = 0; off < n; off += kChunk) {
    Eigen::Map<Eigen::ArrayXd> x(data + off, std::min(kChunk, n - off));
    const Chunk xc = x.max(-40.0).min(40.0);
    const Chunk big = 1.0 - 2.0 / ((2.0 * xc).exp() + 1.0);
    const Chunk xs = x.max(-0.625).min(0.625);
    const Chunk z = xs * xs;
    const Chunk p =
        (-9.64399179425052238628e-1 * z - 9.92877231001918586564e1) * z - 1.61468768441708447952e3;
    const Chunk q = ((z + 1.12811678491632931402e2) * z + 2.23548839060100448583e3) * z +
                    4.84406305325125486048e3;
    const Chunk small_mask = (x.abs() < 0.625).cast<double>();
    x = small_mask * (xs + xs * z * p / q) + (1.0 - small_mask) * big;
  }
}

inline void apply_activation(Mat& z, Activation act) {
  if (act == Activation::tanh) tanh_inplace(z.data(), z.size());
}

}  // namespace detail

inline Mat mlp_output(const Mlp& net, const Mat& x) {
  require_dims(!net.layers.empty() && x.rows() == net.input_dim(),
               "network input width " + std::to_string(x.rows()) + " vs " +
                   std::to_string(net.input_dim()));
  // Column blocks keep the hidden activations cache resident for wide batches.
  constexpr Eigen::Index kBlock = 256;
  Mat out(net.output_dim(), x.cols());
  for (Eigen::Index c0 = 0; c0 < x.cols(); c0 += kBlock) {
    const Eigen::Index w = std::min(kBlock, x.cols() - c0);
    Mat h = x.middleCols(c0, w);
    for (const auto& layer : net.layers) {
      Mat z = layer.W * h;
      z.colwise() += layer.b;
      detail::apply_activation(z, layer.activation);
      h = std::move(z);
    }
    out.middleCols(c0, w) = h;
  }
  return out;
}

inline Vec mlp_output(const Mlp& net, const Vec& x) {
  return mlp_output(net, Mat(x)).col(0);
}

inline MlpPass mlp_forward(const Mlp& net, const Mat& x) {
  require_dims(!net.layers.empty() && x.rows() == net.input_dim(),
               "network input width " + std::to_string(x.rows()) + " vs " +
                   std::to_string(net.input_dim()));
  MlpPass pass;
  pass.tape.params = &net;
  pass.tape.version = net.version;
  pass.tape.inputs.reserve(net.layers.size());
  pass.tape.outputs.reserve(net.layers.size());
  Mat h = x;
  for (const auto& layer : net.layers) {
    pass.tape.inputs.push_back(h);
    Mat z = layer.W * h;
    z.colwise() += layer.b;
    detail::apply_activation(z, layer.activation);
    pass.tape.outputs.push_back(z);
    h = std::move(z);
  }
  pass.output = std::move(h);
  return pass;
}

struct MlpGrads {
  std::vector<Mat> dW;
  std::vector<Vec> db;

  static MlpGrads zeros_like(const Mlp& net) {
    MlpGrads g;
    for (const auto& l : net.layers) {
      g.dW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
      g.db.push_back(Vec::Zero(l.b.size()));
    }
    return g;
  }

  MlpGrads& operator+=(const MlpGrads& other) {
    for (std::size_t i = 0; i < dW.size(); ++i) {
      dW[i] += other.dW[i];
      db[i] += other.db[i];
    }
    return *this;
  }

  MlpGrads& operator*=(double s) {
    for (std::size_t i = 0; i < dW.size(); ++i) {
      dW[i] *= s;
      db[i] *= s;
    }
    return *this;
  }

  bool all_finite() const {
    for (std::size_t i = 0; i < dW.size(); ++i) {
      if (!dW[i].allFinite() || !db[i].allFinite()) return false;
    }
    return true;
  }
};

struct MlpBackward {
  MlpGrads params;
  Mat input;  // gradient with respect to the network input, in x B
};

inline MlpBackward mlp_backward(const Mlp& net, const MlpTape& tape, const Mat& output_grad) {
  if (tape.params != &net || tape.version != net.version ||
      tape.inputs.size() != net.layers.size()) {
    throw std::logic_error("stale tape: parameters changed since the forward pass");
  }
  require_dims(output_grad.rows() == net.output_dim() &&
                   output_grad.cols() == tape.outputs.back().cols(),
               "output gradient shape");
  MlpBackward result;
  result.params.dW.resize(net.layers.size());
  result.params.db.resize(net.layers.size());
  Mat grad = output_grad;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const auto& layer = net.layers[k];
    if (layer.activation == Activation::tanh) {
      grad.array() *= 1.0 - tape.outputs[k].array().square();
    }
    result.params.dW[k].noalias() = grad * tape.inputs[k].transpose();
    result.params.db[k] = grad.rowwise().sum();
    grad = layer.W.transpose() * grad;
  }
  result.input = std::move(grad);
  return result;
}

// Flattened parameter view (each layer: W column-major, then b). Used for
// gradient checks and fingerprints, not on the training path.
inline Vec flatten(const Mlp& net) {
  Vec v(net.parameter_count());
  Eigen::Index at = 0;
  for (const auto& l : net.layers) {
    v.segment(at, l.W.size()) = Eigen::Map<const Vec>(l.W.data(), l.W.size());
    at += l.W.size();
    v.segment(at, l.b.size()) = l.b;
    at += l.b.size();
  }
  return v;
}

inline Vec flatten(const MlpGrads& g) {
  Eigen::Index n = 0;
  for (std::size_t i = 0; i < g.dW.size(); ++i) n += g.dW[i].size() + g.db[i].size();
  Vec v(n);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < g.dW.size(); ++i) {
    v.segment(at, g.dW[i].size()) = Eigen::Map<const Vec>(g.dW[i].data(), g.dW[i].size());
    at += g.dW[i].size();
    v.segment(at, g.db[i].size()) = g.db[i];
    at += g.db[i].size();
  }
  return v;
}

inline void unflatten(Mlp& net, const Vec& v) {
  require_dims(v.size() == net.parameter_count(), "flat parameter vector length");
  Eigen::Index at = 0;
  for (auto& l : net.layers) {
    Eigen::Map<Vec>(l.W.data(), l.W.size()) = v.segment(at, l.W.size());
    at += l.W.size();
    l.b = v.segment(at, l.b.size());
    at += l.b.size();
  }
  ++net.version;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<Mat> mW, vW;
  std::vector<Vec> mb, vb;

  static AdamState for_network(const Mlp& net, double lr = 1e-3) {
    AdamState s;
    s.lr = lr;
    for (const auto& l : net.layers) {
      s.mW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
      s.vW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
      s.mb.push_back(Vec::Zero(l.b.size()));
      s.vb.push_back(Vec::Zero(l.b.size()));
    }
    return s;
  }
};

namespace detail {

template <class P, class G, class M>
void adam_update(P& p, const G& g, M& m, M& v, const AdamState& s, double c1, double c2) {
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v.array() = s.beta2 * v.array() + (1.0 - s.beta2) * g.array().square();
  p.array() -= s.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
}

}  // namespace detail

inline void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state) {
  require_dims(grads.dW.size() == net.layers.size() && state.mW.size() == net.layers.size(),
               "adam: gradient/state layer count");
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto& l = net.layers[i];
    require_dims(grads.dW[i].rows() == l.W.rows() && grads.dW[i].cols() == l.W.cols() &&
                     grads.db[i].size() == l.b.size(),
                 "adam: gradient shape");
    detail::adam_update(l.W, grads.dW[i], state.mW[i], state.vW[i], state, c1, c2);
    detail::adam_update(l.b, grads.db[i], state.mb[i], state.vb[i], state, c1, c2);
  }
  ++net.version;
}

// ---------------------------------------------------------------------------
// Operator norms

// Power iteration on W^T W. `right` carries the estimate of the top right
// singular vector between calls; an empty or zero vector is reseeded from `seed`.
inline double spectral_norm(const Mat& W, int iters, Vec& right, unsigned long long seed = 0) {
  if (iters < 1) throw DataError("spectral_norm needs at least one iteration");
  if (W.size() == 0) return 0.0;
  if (right.size() != W.cols() || !(right.norm() > 0.0) || !right.allFinite()) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    right.resize(W.cols());
    for (auto& x : right) x = gauss(rng);
  }
  right.normalize();
  for (int k = 0; k < iters; ++k) {
    const Vec u = W * right;
    Vec v = W.transpose() * u;
    const double n = v.norm();
    if (!(n > 0.0)) return 0.0;
    right = v / n;
  }
  return (W * right).norm();
}

inline double spectral_norm(const Mat& W, int iters, unsigned long long seed) {
  Vec right;
  return spectral_norm(W, iters, right, seed);
}

// Largest singular value from a symmetric eigensolve of the smaller Gram matrix.
inline double spectral_norm_exact(const Mat& W) {
  if (W.size() == 0) return 0.0;
  const Mat gram = W.rows() <= W.cols() ? Mat(W * W.transpose()) : Mat(W.transpose() * W);
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

struct LipschitzSpec {
  bool enabled = false;
  double L = 1.0;
  int power_iters = 5;

  double per_layer_lambda(int projected_layers) const {
    return std::pow(L, 1.0 / std::max(projected_layers, 1));
  }

  void validate() const {
    if (enabled && !(L > 0.0)) throw DataError("Lipschitz constant must be positive");
  }
};

// Persistent power-iteration vectors, one per layer.
struct LipschitzState {
  std::vector<Vec> right;
};

// Rescales every layer with W <- W / max(1, ||W||_2 / lambda), lambda = L^(1/k).
// The power-iteration estimate is followed by an exact certificate so the bound
// holds immediately after the call even when the estimate has not converged.
inline void lipschitz_project(Mlp& net, const LipschitzSpec& spec, LipschitzState& state) {
  if (!spec.enabled) return;
  spec.validate();
  const double lambda = spec.per_layer_lambda(static_cast<int>(net.layers.size()));
  state.right.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    Mat& W = net.layers[i].W;
    const double estimate = spectral_norm(W, spec.power_iters, state.right[i], 0x5eed + i);
    if (estimate > lambda) W *= lambda / estimate;
    const double exact = spectral_norm_exact(W);
    if (exact > lambda) W *= lambda / exact;
  }
  ++net.version;
}

inline void lipschitz_project(Mlp& net, const LipschitzSpec& spec) {
  LipschitzState state;
  lipschitz_project(net, spec, state);
}

// ---------------------------------------------------------------------------
// Gram-Schmidt

inline constexpr double kGramSchmidtMinNorm = 1e-8;

struct GramSchmidtTape {
  Mat input;
  Mat q;
  // residual[j] holds column j after each projection step: m x (j + 1).
  std::vector<Mat> residual;
  Vec norms;
  std::vector<bool> clamped;
  int clamp_count = 0;
};

// Modified Gram-Schmidt on the columns of H. Residual norms below 1e-8 are
// clamped to 1e-8, so degenerate columns come out short instead of erroring.
inline GramSchmidtTape gram_schmidt_forward(const Mat& H) {
  require_dims(H.cols() <= H.rows(), "Gram-Schmidt needs d <= m");
  const Eigen::Index m = H.rows();
  const Eigen::Index d = H.cols();
  GramSchmidtTape tape;
  tape.input = H;
  tape.q.resize(m, d);
  tape.residual.resize(d);
  tape.norms.resize(d);
  tape.clamped.assign(d, false);
  for (Eigen::Index j = 0; j < d; ++j) {
    Mat& steps = tape.residual[j];
    steps.resize(m, j + 1);
    steps.col(0) = H.col(j);
    for (Eigen::Index k = 0; k < j; ++k) {
      const double r = tape.q.col(k).dot(steps.col(k));
      steps.col(k + 1) = steps.col(k) - r * tape.q.col(k);
    }
    const double n = steps.col(j).norm();
    if (n < kGramSchmidtMinNorm) {
      tape.clamped[j] = true;
      ++tape.clamp_count;
    }
    tape.norms[j] = std::max(n, kGramSchmidtMinNorm);
    tape.q.col(j) = steps.col(j) / tape.norms[j];
  }
  return tape;
}

inline Mat gram_schmidt(const Mat& H, int* clamp_count = nullptr) {
  auto tape = gram_schmidt_forward(H);
  if (clamp_count) *clamp_count += tape.clamp_count;
  return std::move(tape.q);
}

inline Mat gram_schmidt_backward(const GramSchmidtTape& tape, const Mat& output_grad) {
  const Mat& Q = tape.q;
  require_dims(output_grad.rows() == Q.rows() && output_grad.cols() == Q.cols(),
               "Gram-Schmidt output gradient");
  const Eigen::Index d = Q.cols();
  Mat gq = output_grad;
  Mat gh(Q.rows(), d);
  for (Eigen::Index j = d; j-- > 0;) {
    Vec gu;
    if (tape.clamped[j]) {
      gu = gq.col(j) / tape.norms[j];
    } else {
      gu = (gq.col(j) - Q.col(j) * Q.col(j).dot(gq.col(j))) / tape.norms[j];
    }
    const Mat& steps = tape.residual[j];
    for (Eigen::Index k = j; k-- > 0;) {
      // steps(k+1) = steps(k) - (q_k . steps(k)) q_k
      const double r = Q.col(k).dot(steps.col(k));
      const double gr = -Q.col(k).dot(gu);
      gq.col(k) += -r * gu + gr * steps.col(k);
      gu += gr * Q.col(k);
    }
    gh.col(j) = gu;
  }
  return gh;
}

inline Mat gram_schmidt_backward(const Mat& H, const Mat& output_grad) {
  return gram_schmidt_backward(gram_schmidt_forward(H), output_grad);
}

// ---------------------------------------------------------------------------
// Gradient checking

// Central differences of a scalar function.
inline Vec finite_difference_gradient(const std::function<double(const Vec&)>& f, Vec x,
                                      double step = 1e-5) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f(x);
    x[i] = keep - step;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double relative_error(const Vec& a, const Vec& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale > 0.0 ? (a - b).norm() / scale : 0.0;
}

}  // namespace sclmaps
