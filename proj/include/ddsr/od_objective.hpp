// SPDX-License-Identifier: Apache-2.0
#pragma once

// Output-divergence objective on a doubled parameter vector [theta_sub; theta_full]:
//   L(theta_sub, theta_full) = mean_i JS(softmax(f(x_i; theta_sub, mask)), softmax(f(x_i; theta_full)))
// At theta_sub = theta_full = theta this is L_od, and the two gradient blocks
// are the per-path contributions to grad L_od. Scalar-generic so it can be
// run on Dual numbers for Hessian-vector products.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ddsr/dual.hpp"
#include "ddsr/matrix.hpp"
#include "ddsr/target_net.hpp"

namespace ddsr {

namespace kernels {

template <class T>
void log_softmax_into(const std::vector<T>& z, std::vector<T>& out) {
  using std::exp;
  using std::log;
  double zmax = value_of(z[0]);
  for (const auto& v : z) zmax = std::max(zmax, value_of(v));
  T s(0.0);
  for (const auto& v : z) s += exp(v - T(zmax));
  const T lse = T(zmax) + log(s);
  out.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) out[j] = z[j] - lse;
}

// JS(softmax(zs), softmax(zf)) and its gradients on both logit vectors, scaled by `scale`.
template <class T>
T js_on_logits(const std::vector<T>& zs, const std::vector<T>& zf, double scale, std::vector<T>& gs,
               std::vector<T>& gf) {
  using std::exp;
  using std::log;
  const std::size_t c = zs.size();
  std::vector<T> lp, lq;
  log_softmax_into(zs, lp);
  log_softmax_into(zf, lq);
  std::vector<T> p(c), q(c), ap(c), aq(c);
  T js(0.0);
  for (std::size_t j = 0; j < c; ++j) {
    p[j] = exp(lp[j]);
    q[j] = exp(lq[j]);
    // ln m computed from the log-probabilities, finite even when p or q underflow.
    const double mx = std::max(value_of(lp[j]), value_of(lq[j]));
    const T lm = T(mx) + log(T(0.5) * (exp(lp[j] - T(mx)) + exp(lq[j] - T(mx))));
    ap[j] = T(0.5) * (lp[j] - lm);
    aq[j] = T(0.5) * (lq[j] - lm);
    js += p[j] * ap[j] + q[j] * aq[j];
  }
  T pa(0.0), qa(0.0);
  for (std::size_t j = 0; j < c; ++j) {
    pa += p[j] * ap[j];
    qa += q[j] * aq[j];
  }
  gs.resize(c);
  gf.resize(c);
  for (std::size_t j = 0; j < c; ++j) {
    gs[j] = T(scale) * p[j] * (ap[j] - pa);
    gf[j] = T(scale) * q[j] * (aq[j] - qa);
  }
  return js;
}

// Mean JS over the batch; accumulates the path gradients into g_sub / g_full.
template <class T>
T od_path_gradients(const LayerLayout& layout, std::span<const std::size_t> sub_widths, const Matrix& x,
                    std::span<const T> theta_sub, std::span<const T> theta_full, std::span<T> g_sub,
                    std::span<T> g_full) {
  const std::size_t nl = layout.layer_count();
  const double inv_b = 1.0 / static_cast<double>(x.rows());
  const std::span<const std::size_t> full_widths(layout.sizes());
  Trace<T> ts, tf;
  std::vector<T> gs, gf, sa, sb;
  T total(0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    forward_sample<T, double>(layout, theta_sub, sub_widths, x.row(i), ts);
    forward_sample<T, double>(layout, theta_full, full_widths, x.row(i), tf);
    total += js_on_logits(ts.act[nl], tf.act[nl], inv_b, gs, gf);
    backward_sample<T>(layout, theta_sub, sub_widths, ts, gs, g_sub, sa, sb);
    backward_sample<T>(layout, theta_full, full_widths, tf, gf, g_full, sa, sb);
  }
  return total * T(inv_b);
}

}  // namespace kernels

class OdObjective {
 public:
  OdObjective(const LayerLayout& layout, const SubnetworkMask& mask, const Matrix& x)
      : layout_(layout), widths_(mask.widths), x_(x) {}

  std::size_t half() const noexcept { return layout_.param_count(); }

  // theta is [theta_sub; theta_full]; returns [dL/dtheta_sub; dL/dtheta_full].
  template <class T>
  std::vector<T> gradient(std::span<const T> theta) const {
    const std::size_t n = half();
    std::vector<T> g(2 * n, T(0.0));
    kernels::od_path_gradients<T>(layout_, widths_, x_, theta.subspan(0, n), theta.subspan(n, n),
                                  std::span<T>(g).subspan(0, n), std::span<T>(g).subspan(n, n));
    return g;
  }

 private:
  const LayerLayout& layout_;
  std::vector<std::size_t> widths_;
  const Matrix& x_;
};

}  // namespace ddsr
