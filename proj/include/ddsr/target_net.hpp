// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small dense network f_t = classifier o feature_extractor with exact
// reverse-mode gradients, a parameter-sharing prefix subnetwork, exact
// Hessian-vector products and momentum SGD.
//
// Parameter layout: for each affine layer l (in = sizes[l], out = sizes[l+1])
// theta holds the out x in weight matrix row-major (row r = incoming weights
// of unit r), followed by the out biases. Layers are contiguous in order.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ddsr/dual.hpp"
#include "ddsr/matrix.hpp"

namespace ddsr {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

class LayerLayout {
 public:
  LayerLayout() = default;
  // sizes = [d, h_1, ..., h_L, C]; one activation per hidden layer.
  LayerLayout(std::vector<std::size_t> sizes, std::vector<Activation> activations);
  static LayerLayout with_activation(std::vector<std::size_t> sizes, Activation a);

  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  const std::vector<Activation>& activations() const noexcept { return activations_; }
  std::size_t layer_count() const noexcept { return sizes_.size() - 1; }
  std::size_t input_dim() const noexcept { return sizes_.front(); }
  std::size_t class_count() const noexcept { return sizes_.back(); }
  std::size_t feature_dim() const noexcept { return sizes_[sizes_.size() - 2]; }
  std::size_t param_count() const noexcept { return weight_offsets_.empty() ? 0 : total_; }
  std::size_t weight_offset(std::size_t l) const { return weight_offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const { return weight_offsets_[l] + sizes_[l + 1] * sizes_[l]; }

  friend bool operator==(const LayerLayout& a, const LayerLayout& b) {
    return a.sizes_ == b.sizes_ && a.activations_ == b.activations_;
  }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Activation> activations_;
  std::vector<std::size_t> weight_offsets_;
  std::size_t total_ = 0;
};

// Keeps the first ceil(gamma * h_l) units of every hidden layer. Inputs and
// the C outputs are never masked.
struct SubnetworkMask {
  double gamma = 1.0;
  std::vector<std::size_t> widths;  // active width at each layer boundary

  static SubnetworkMask make(const LayerLayout& layout, double gamma);
  static SubnetworkMask full(const LayerLayout& layout) { return make(layout, 1.0); }

  bool is_full(const LayerLayout& layout) const { return widths == layout.sizes(); }
  // Sorted theta indices of every parameter on the subnetwork path.
  std::vector<std::size_t> shared_coordinates(const LayerLayout& layout) const;
};

struct NetworkWeights {
  LayerLayout layout;
  std::vector<double> theta;
};

NetworkWeights init_weights(const LayerLayout& layout, std::uint64_t seed);

struct ForwardResult {
  Matrix logits;    // n x C
  Matrix features;  // n x (active width of the last hidden layer)
};

ForwardResult forward_full(const NetworkWeights& w, const Matrix& x, unsigned threads = 1);
ForwardResult forward_sub(const NetworkWeights& w, const SubnetworkMask& mask, const Matrix& x);
ForwardResult forward(const NetworkWeights& w, std::span<const std::size_t> widths, const Matrix& x,
                      unsigned threads = 1);

// Gradient over theta of sum_i <dlogits_i, logits_i(theta)> through the path
// selected by `mask` (nullptr = full network).
std::vector<double> backward(const NetworkWeights& w, const SubnetworkMask* mask, const Matrix& x,
                             const Matrix& dlogits);

// ---------------------------------------------------------------------------
// Scalar-generic kernels. Instantiated with double for training and with Dual
// for forward-over-reverse second derivatives.

namespace kernels {

template <class T>
struct Trace {
  std::vector<std::vector<T>> act;  // act[0] = input, act[l + 1] = output of layer l
  std::vector<std::vector<T>> pre;  // pre-activation of layer l
};

template <class T>
T apply_activation(Activation a, const T& z) {
  using std::tanh;
  if (a == Activation::relu) return value_of(z) > 0.0 ? z : T(0.0);
  return tanh(z);
}

// d act / d pre, given the pre-activation and the activation output.
template <class T>
T activation_slope(Activation a, const T& z, const T& out) {
  if (a == Activation::relu) return value_of(z) > 0.0 ? T(1.0) : T(0.0);
  return T(1.0) - out * out;
}

template <class T, class In>
void forward_sample(const LayerLayout& layout, std::span<const T> theta,
                    std::span<const std::size_t> widths, std::span<const In> x, Trace<T>& tr) {
  const std::size_t nl = layout.layer_count();
  tr.act.resize(nl + 1);
  tr.pre.resize(nl);
  tr.act[0].assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(widths[0]));
  for (std::size_t l = 0; l < nl; ++l) {
    const std::size_t in = widths[l], out = widths[l + 1], stride = layout.sizes()[l];
    const T* wmat = theta.data() + layout.weight_offset(l);
    const T* bias = theta.data() + layout.bias_offset(l);
    const auto& a = tr.act[l];
    auto& z = tr.pre[l];
    auto& next = tr.act[l + 1];
    z.resize(out);
    next.resize(out);
    for (std::size_t r = 0; r < out; ++r) {
      T s = bias[r];
      const T* wr = wmat + r * stride;
      for (std::size_t c = 0; c < in; ++c) s += wr[c] * a[c];
      z[r] = s;
      next[r] = (l + 1 < nl) ? apply_activation(layout.activations()[l], s) : s;
    }
  }
}

// Accumulates dL/dtheta into grad given dL/dlogits for a traced sample.
template <class T>
void backward_sample(const LayerLayout& layout, std::span<const T> theta,
                     std::span<const std::size_t> widths, const Trace<T>& tr,
                     std::span<const T> dlogits, std::span<T> grad, std::vector<T>& scratch_a,
                     std::vector<T>& scratch_b) {
  const std::size_t nl = layout.layer_count();
  std::vector<T>& delta = scratch_a;
  std::vector<T>& prev = scratch_b;
  delta.assign(dlogits.begin(), dlogits.end());
  for (std::size_t l = nl; l-- > 0;) {
    const std::size_t in = widths[l], out = widths[l + 1], stride = layout.sizes()[l];
    const std::size_t woff = layout.weight_offset(l), boff = layout.bias_offset(l);
    const auto& a = tr.act[l];
    for (std::size_t r = 0; r < out; ++r) {
      grad[boff + r] += delta[r];
      T* gr = grad.data() + woff + r * stride;
      for (std::size_t c = 0; c < in; ++c) gr[c] += delta[r] * a[c];
    }
    if (l == 0) break;
    prev.assign(in, T(0.0));
    const T* wmat = theta.data() + woff;
    for (std::size_t r = 0; r < out; ++r) {
      const T* wr = wmat + r * stride;
      for (std::size_t c = 0; c < in; ++c) prev[c] += wr[c] * delta[r];
    }
    const Activation act = layout.activations()[l - 1];
    for (std::size_t c = 0; c < in; ++c) prev[c] *= activation_slope(act, tr.pre[l - 1][c], tr.act[l][c]);
    std::swap(delta, prev);
  }
}

}  // namespace kernels

// Hessian-vector product by forward-over-reverse differentiation.
// `Objective` exposes `template <class T> std::vector<T> gradient(std::span<const T> theta) const`,
// a reverse-mode gradient program; running it on Dual inputs seeded with v
// gives H*v exactly.
template <class Objective>
std::vector<double> hvp(std::span<const double> theta, std::span<const double> v, const Objective& objective) {
  std::vector<Dual> seeded(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) seeded[i] = Dual(theta[i], v[i]);
  const std::vector<Dual> g = objective.template gradient<Dual>(std::span<const Dual>(seeded));
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i].d;
  return out;
}

struct OptimizerState {
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  std::vector<double> velocity;
  std::size_t completed_steps = 0;
  std::size_t total_steps = 1;

  double step_fraction() const;
  double learning_rate() const;  // lr0 * (1 + 10 p)^-0.75
};

OptimizerState make_optimizer(const NetworkWeights& w, double lr0, double momentum, double weight_decay,
                              std::size_t total_steps);

// Throws training_divergence on a non-finite gradient.
void sgd_step(OptimizerState& state, NetworkWeights& w, std::span<const double> gradient);

// Checkpoint: one text header line, then the raw parameters as little-endian float64.
void save_checkpoint(const std::filesystem::path& path, const NetworkWeights& w);
NetworkWeights load_checkpoint(const std::filesystem::path& path);

}  // namespace ddsr
