// SPDX-License-Identifier: Apache-2.0
#include "ddsr/target_net.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "ddsr/errors.hpp"

namespace ddsr {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw invalid_input("unknown activation '" + name + "'");
}

LayerLayout::LayerLayout(std::vector<std::size_t> sizes, std::vector<Activation> activations)
    : sizes_(std::move(sizes)), activations_(std::move(activations)) {
  if (sizes_.size() < 3) throw invalid_input("layout needs an input, at least one hidden layer and an output");
  if (activations_.size() != sizes_.size() - 2) throw invalid_input("layout needs one activation per hidden layer");
  for (auto s : sizes_)
    if (s == 0) throw invalid_input("layout widths must be >= 1");
  weight_offsets_.resize(layer_count());
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    weight_offsets_[l] = off;
    off += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  total_ = off;
}

LayerLayout LayerLayout::with_activation(std::vector<std::size_t> sizes, Activation a) {
  const std::size_t hidden = sizes.size() >= 2 ? sizes.size() - 2 : 0;
  return LayerLayout(std::move(sizes), std::vector<Activation>(hidden, a));
}

SubnetworkMask SubnetworkMask::make(const LayerLayout& layout, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw invalid_input("subnetwork ratio gamma must be in (0, 1]");
  SubnetworkMask m;
  m.gamma = gamma;
  m.widths = layout.sizes();
  for (std::size_t l = 1; l + 1 < m.widths.size(); ++l) {
    const double h = static_cast<double>(m.widths[l]);
    // The 1e-9 slack keeps exact products such as 0.5 * 64 from rounding up.
    auto kept = static_cast<std::size_t>(std::ceil(gamma * h - 1e-9));
    m.widths[l] = std::clamp<std::size_t>(kept, 1, m.widths[l]);
  }
  return m;
}

std::vector<std::size_t> SubnetworkMask::shared_coordinates(const LayerLayout& layout) const {
  std::vector<std::size_t> idx;
  for (std::size_t l = 0; l < layout.layer_count(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1], stride = layout.sizes()[l];
    for (std::size_t r = 0; r < out; ++r)
      for (std::size_t c = 0; c < in; ++c) idx.push_back(layout.weight_offset(l) + r * stride + c);
    for (std::size_t r = 0; r < out; ++r) idx.push_back(layout.bias_offset(l) + r);
  }
  return idx;
}

NetworkWeights init_weights(const LayerLayout& layout, std::uint64_t seed) {
  NetworkWeights w{layout, std::vector<double>(layout.param_count(), 0.0)};
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < layout.layer_count(); ++l) {
    const double fan_in = static_cast<double>(layout.sizes()[l]);
    const bool relu_next = l + 1 < layout.layer_count() && layout.activations()[l] == Activation::relu;
    const double bound = std::sqrt((relu_next ? 6.0 : 3.0) / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t n = layout.sizes()[l] * layout.sizes()[l + 1];
    for (std::size_t k = 0; k < n; ++k) w.theta[layout.weight_offset(l) + k] = dist(rng);
  }
  return w;
}

namespace {

void check_input(const NetworkWeights& w, const Matrix& x) {
  if (w.theta.size() != w.layout.param_count()) throw invalid_input("weights do not match layout");
  if (x.cols() != w.layout.input_dim()) throw invalid_input("input dimension does not match network");
}

}  // namespace

ForwardResult forward(const NetworkWeights& w, std::span<const std::size_t> widths, const Matrix& x,
                      unsigned threads) {
  check_input(w, x);
  const std::size_t nl = w.layout.layer_count();
  ForwardResult out{Matrix(x.rows(), widths[nl]), Matrix(x.rows(), widths[nl - 1])};
  const std::span<const double> theta(w.theta);
  auto run = [&](std::size_t begin, std::size_t end) {
    kernels::Trace<double> tr;
    for (std::size_t i = begin; i < end; ++i) {
      kernels::forward_sample<double, double>(w.layout, theta, widths, x.row(i), tr);
      std::copy(tr.act[nl].begin(), tr.act[nl].end(), out.logits.row(i).begin());
      std::copy(tr.act[nl - 1].begin(), tr.act[nl - 1].end(), out.features.row(i).begin());
    }
  };
  // Rows are independent and written to fixed slots, so results do not depend on the thread count.
  const std::size_t n = x.rows();
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, n / 64));
  if (workers <= 1) {
    run(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t t = 0; t < workers; ++t) {
      const std::size_t b = t * chunk, e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(run, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

ForwardResult forward_full(const NetworkWeights& w, const Matrix& x, unsigned threads) {
  return forward(w, w.layout.sizes(), x, threads);
}

ForwardResult forward_sub(const NetworkWeights& w, const SubnetworkMask& mask, const Matrix& x) {
  if (mask.widths.size() != w.layout.sizes().size()) throw invalid_input("mask does not match layout");
  return forward(w, mask.widths, x);
}

std::vector<double> backward(const NetworkWeights& w, const SubnetworkMask* mask, const Matrix& x,
                             const Matrix& dlogits) {
  check_input(w, x);
  const auto& widths = mask ? mask->widths : w.layout.sizes();
  if (widths.size() != w.layout.sizes().size()) throw invalid_input("mask does not match layout");
  if (dlogits.rows() != x.rows() || dlogits.cols() != w.layout.class_count())
    throw invalid_input("upstream gradient shape does not match batch");
  std::vector<double> grad(w.theta.size(), 0.0);
  const std::span<const double> theta(w.theta);
  kernels::Trace<double> tr;
  std::vector<double> sa, sb;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    kernels::forward_sample<double, double>(w.layout, theta, widths, x.row(i), tr);
    kernels::backward_sample<double>(w.layout, theta, widths, tr, dlogits.row(i), grad, sa, sb);
  }
  return grad;
}

double OptimizerState::step_fraction() const {
  if (total_steps == 0) return 1.0;
  return std::min(1.0, static_cast<double>(completed_steps) / static_cast<double>(total_steps));
}

double OptimizerState::learning_rate() const { return lr0 * std::pow(1.0 + 10.0 * step_fraction(), -0.75); }

OptimizerState make_optimizer(const NetworkWeights& w, double lr0, double momentum, double weight_decay,
                              std::size_t total_steps) {
  OptimizerState s;
  s.lr0 = lr0;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  s.velocity.assign(w.theta.size(), 0.0);
  s.total_steps = total_steps;
  return s;
}

void sgd_step(OptimizerState& state, NetworkWeights& w, std::span<const double> gradient) {
  if (gradient.size() != w.theta.size() || state.velocity.size() != w.theta.size())
    throw invalid_input("sgd_step: shape mismatch");
  for (double g : gradient)
    if (!std::isfinite(g)) throw training_divergence("non-finite gradient");
  const double lr = state.learning_rate();
  for (std::size_t i = 0; i < w.theta.size(); ++i) {
    state.velocity[i] = state.momentum * state.velocity[i] + gradient[i] + state.weight_decay * w.theta[i];
    w.theta[i] -= lr * state.velocity[i];
  }
  ++state.completed_steps;
}

namespace {

constexpr const char* kCheckpointMagic = "ddsr-mlp";

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NetworkWeights& w) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write checkpoint " + path.string());
  std::ostringstream header;
  header << kCheckpointMagic << " 1 sizes=";
  for (std::size_t i = 0; i < w.layout.sizes().size(); ++i) header << (i ? "," : "") << w.layout.sizes()[i];
  header << " activations=";
  for (std::size_t i = 0; i < w.layout.activations().size(); ++i)
    header << (i ? "," : "") << to_string(w.layout.activations()[i]);
  header << " params=" << w.theta.size() << "\n";
  out << header.str();
  for (double v : w.theta) {
    const auto bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw io_error("failed writing checkpoint " + path.string());
}

NetworkWeights load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open checkpoint " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version, sizes_kv, acts_kv, params_kv;
  hs >> magic >> version >> sizes_kv >> acts_kv >> params_kv;
  if (magic != kCheckpointMagic || version != "1") throw parse_error(path.string(), 1, "not a ddsr-mlp v1 checkpoint");
  auto split_value = [&](const std::string& kv, const std::string& key) {
    if (kv.rfind(key + "=", 0) != 0) throw parse_error(path.string(), 1, "expected " + key + "=");
    std::vector<std::string> parts;
    std::istringstream vs(kv.substr(key.size() + 1));
    for (std::string item; std::getline(vs, item, ',');) parts.push_back(item);
    return parts;
  };
  std::vector<std::size_t> sizes;
  for (const auto& s : split_value(sizes_kv, "sizes")) sizes.push_back(std::stoul(s));
  std::vector<Activation> acts;
  for (const auto& s : split_value(acts_kv, "activations")) acts.push_back(activation_from_string(s));
  const auto params = std::stoul(split_value(params_kv, "params").at(0));
  NetworkWeights w{LayerLayout(sizes, acts), {}};
  if (params != w.layout.param_count()) throw parse_error(path.string(), 1, "parameter count does not match layout");
  w.theta.resize(params);
  for (auto& v : w.theta) {
    std::uint64_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) throw parse_error(path.string(), 2, "truncated parameters");
    v = std::bit_cast<double>(to_little_endian(bits));
  }
  return w;
}

}  // namespace ddsr
