// SPDX-License-Identifier: Apache-2.0
#include "ddsr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ddsr/errors.hpp"
#include "ddsr/od_objective.hpp"
#include "ddsr/prob_core.hpp"

namespace ddsr {
namespace {

void check_logits(const Matrix& logits, const char* op) {
  if (logits.empty()) throw invalid_input(std::string(op) + ": empty batch");
  if (logits.cols() < 2) throw invalid_input(std::string(op) + ": needs at least 2 classes");
}

// dL/dz_k = p_k (a_k - sum_j p_j a_j) for dL/dp = a.
void softmax_backward(std::span<const double> p, std::span<const double> a, std::span<double> dz, double scale) {
  double pa = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) pa += p[j] * a[j];
  for (std::size_t j = 0; j < p.size(); ++j) dz[j] = scale * p[j] * (a[j] - pa);
}

void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
  if (x.empty()) return;
  if (y.empty()) y.assign(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

ParamLoss through_network(const NetworkWeights& w, const Matrix& x, const LogitLoss& l) {
  return {l.value, backward(w, nullptr, x, l.dlogits)};
}

}  // namespace

LogitLoss loss_kd(const Matrix& pseudo_labels, const Matrix& logits) {
  check_logits(logits, "loss_kd");
  if (pseudo_labels.rows() != logits.rows() || pseudo_labels.cols() != logits.cols())
    throw invalid_input("loss_kd: pseudo-labels do not align with batch");
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  LogitLoss out{0.0, Matrix(logits.rows(), logits.cols())};
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto lp = log_softmax(logits.row(i));
    auto y = pseudo_labels.row(i);
    auto dz = out.dlogits.row(i);
    double kl = 0.0, mass = 0.0;
    for (std::size_t j = 0; j < lp.size(); ++j) {
      if (y[j] > 0.0) kl += y[j] * (std::log(y[j]) - lp[j]);
      mass += y[j];
    }
    out.value += std::max(kl, 0.0) * inv_b;
    for (std::size_t j = 0; j < lp.size(); ++j) dz[j] = inv_b * (std::exp(lp[j]) * mass - y[j]);
  }
  return out;
}

LogitLoss loss_im(const Matrix& logits) {
  check_logits(logits, "loss_im");
  const std::size_t b = logits.rows(), c = logits.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  Matrix lp(b, c), p(b, c);
  std::vector<double> mean(c, 0.0);
  double cond = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto l = log_softmax(logits.row(i));
    for (std::size_t j = 0; j < c; ++j) {
      lp(i, j) = l[j];
      p(i, j) = std::exp(l[j]);
      mean[j] += p(i, j) * inv_b;
      cond -= p(i, j) * l[j] * inv_b;
    }
  }
  LogitLoss out{entropy(mean) - cond, Matrix(b, c)};
  // dL/dp_ij = (ln p_ij - ln pbar_j) / B.
  std::vector<double> a(c);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < c; ++j) a[j] = lp(i, j) - std::log(mean[j]);
    softmax_backward(p.row(i), a, out.dlogits.row(i), inv_b);
  }
  return out;
}

LogitLoss loss_self(std::span<const std::size_t> labels, const Matrix& logits) {
  check_logits(logits, "loss_self");
  if (labels.size() != logits.rows()) throw invalid_input("loss_self: label count does not match batch");
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  const double cap = -std::log(kKlFloor);
  LogitLoss out{0.0, Matrix(logits.rows(), logits.cols())};
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (labels[i] >= logits.cols()) throw invalid_input("loss_self: label out of range");
    const auto lp = log_softmax(logits.row(i));
    out.value += std::min(-lp[labels[i]], cap) * inv_b;
    auto dz = out.dlogits.row(i);
    for (std::size_t j = 0; j < lp.size(); ++j) dz[j] = inv_b * (std::exp(lp[j]) - (j == labels[i] ? 1.0 : 0.0));
  }
  return out;
}

MixPlan draw_mix_plan(std::size_t batch, std::mt19937_64& rng, double beta_shape) {
  MixPlan plan;
  if (batch < 2) return plan;
  plan.partner.resize(batch);
  // Rejection sampling gives a uniform derangement; about e tries on average.
  while (true) {
    std::iota(plan.partner.begin(), plan.partner.end(), std::size_t{0});
    std::shuffle(plan.partner.begin(), plan.partner.end(), rng);
    bool fixed_point = false;
    for (std::size_t i = 0; i < batch && !fixed_point; ++i) fixed_point = plan.partner[i] == i;
    if (!fixed_point) break;
  }
  std::gamma_distribution<double> gamma(beta_shape, 1.0);
  plan.lambda.resize(batch);
  for (auto& lam : plan.lambda) {
    const double a = gamma(rng), b = gamma(rng);
    lam = (a + b) > 0.0 ? a / (a + b) : 0.5;
  }
  return plan;
}

ParamLoss loss_mix(const NetworkWeights& w, const Matrix& x, const Matrix& targets, const MixPlan& plan) {
  const std::size_t b = x.rows(), c = w.layout.class_count();
  if (targets.rows() != b || targets.cols() != c) throw invalid_input("loss_mix: targets do not align with batch");
  if (b < 2 || plan.partner.empty()) return {0.0, std::vector<double>(w.theta.size(), 0.0)};
  if (plan.partner.size() != b || plan.lambda.size() != b) throw invalid_input("loss_mix: plan does not match batch");

  Matrix xm(b, x.cols()), ym(b, c);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t j = plan.partner[i];
    const double lam = plan.lambda[i];
    for (std::size_t k = 0; k < x.cols(); ++k) xm(i, k) = lam * x(i, k) + (1.0 - lam) * x(j, k);
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      ym(i, k) = std::max(lam * targets(i, k) + (1.0 - lam) * targets(j, k), kKlFloor);
      total += ym(i, k);
    }
    for (std::size_t k = 0; k < c; ++k) ym(i, k) /= total;
  }
  const Matrix logits = forward_full(w, xm).logits;
  const double inv_b = 1.0 / static_cast<double>(b);
  LogitLoss l{0.0, Matrix(b, c)};
  std::vector<double> a(c), p(c);
  for (std::size_t i = 0; i < b; ++i) {
    const auto lp = log_softmax(logits.row(i));
    double kl = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      p[k] = std::exp(lp[k]);
      a[k] = lp[k] - std::log(ym(i, k));
      kl += p[k] * a[k];
    }
    l.value += std::max(kl, 0.0) * inv_b;
    softmax_backward(p, a, l.dlogits.row(i), inv_b);
  }
  return {l.value, backward(w, nullptr, xm, l.dlogits)};
}

OdPathGradients od_path_gradients(const NetworkWeights& w, const SubnetworkMask& mask, const Matrix& x) {
  if (x.empty()) throw invalid_input("loss_od: empty batch");
  if (x.cols() != w.layout.input_dim()) throw invalid_input("loss_od: input dimension mismatch");
  if (mask.widths.size() != w.layout.sizes().size()) throw invalid_input("loss_od: mask does not match layout");
  OdPathGradients out;
  out.via_sub.assign(w.theta.size(), 0.0);
  out.via_full.assign(w.theta.size(), 0.0);
  const std::span<const double> theta(w.theta);
  out.value = kernels::od_path_gradients<double>(w.layout, mask.widths, x, theta, theta, out.via_sub, out.via_full);
  out.value = std::max(out.value, 0.0);
  return out;
}

ParamLoss loss_od(const NetworkWeights& w, const SubnetworkMask& mask, const Matrix& x) {
  auto g = od_path_gradients(w, mask, x);
  for (std::size_t i = 0; i < g.via_sub.size(); ++i) g.via_sub[i] += g.via_full[i];
  return {g.value, std::move(g.via_sub)};
}

std::string to_string(WgForm f) { return f == WgForm::cosine ? "cosine" : "one-minus-cosine"; }

WgForm wg_form_from_string(const std::string& s) {
  if (s == "cosine") return WgForm::cosine;
  if (s == "one-minus-cosine" || s == "one-minus-cosine-negated") return WgForm::one_minus_cosine;
  throw invalid_input("unknown wg_form '" + s + "'");
}

WgLoss loss_wg(const NetworkWeights& w, const SubnetworkMask& mask, const Matrix& x, WgForm form) {
  const OdPathGradients g = od_path_gradients(w, mask, x);
  WgLoss out;
  out.gradient.assign(w.theta.size(), 0.0);

  // Entropy weight from the subnetwork's predictions; a constant scale.
  const Matrix sub_probs = softmax_rows(forward_sub(w, mask, x).logits);
  double h = 0.0;
  for (std::size_t i = 0; i < sub_probs.rows(); ++i) h += entropy(sub_probs.row(i));
  h /= static_cast<double>(sub_probs.rows());
  out.weight = 1.0 + std::exp(-h);

  const auto shared = mask.shared_coordinates(w.layout);
  double ff = 0.0, ss = 0.0, fs = 0.0;
  for (auto k : shared) {
    ff += g.via_full[k] * g.via_full[k];
    ss += g.via_sub[k] * g.via_sub[k];
    fs += g.via_full[k] * g.via_sub[k];
  }
  const double nf = std::sqrt(ff), ns = std::sqrt(ss);
  if (nf < kCosineZeroNorm || ns < kCosineZeroNorm) {
    out.value = form == WgForm::cosine ? 0.0 : out.weight;
    return out;
  }
  out.cosine = std::clamp(fs / (nf * ns), -1.0, 1.0);
  out.value = out.weight * (form == WgForm::cosine ? out.cosine : 1.0 - out.cosine);

  // d cos / d g_full and d cos / d g_sub on the shared coordinates, zero elsewhere.
  const std::size_t n = w.theta.size();
  std::vector<double> direction(2 * n, 0.0);
  for (auto k : shared) {
    direction[k] = g.via_full[k] / (nf * ns) - fs * g.via_sub[k] / (nf * ns * ss);       // on the sub block
    direction[n + k] = g.via_sub[k] / (nf * ns) - fs * g.via_full[k] / (nf * nf * nf * ns);  // on the full block
  }
  // grad cos = J_sub^T b + J_full^T a; with the path split on a doubled parameter
  // vector both pullbacks are block sums of one Hessian-vector product H * (b, a).
  std::vector<double> doubled(2 * n);
  std::copy(w.theta.begin(), w.theta.end(), doubled.begin());
  std::copy(w.theta.begin(), w.theta.end(), doubled.begin() + static_cast<std::ptrdiff_t>(n));
  const OdObjective objective(w.layout, mask, x);
  const auto hv = hvp(std::span<const double>(doubled), std::span<const double>(direction), objective);
  const double sign = form == WgForm::cosine ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) out.gradient[k] = sign * out.weight * (hv[k] + hv[n + k]);
  return out;
}

StageOneLoss stage_one_total(const StageOneComponents& c, double epsilon, double zeta) {
  StageOneLoss out;
  auto& b = out.breakdown;
  b.kd = c.kd.value;
  b.mix = c.mix.value;
  b.im = c.im.value;
  b.od = c.od.value;
  b.wg = c.wg.value;
  b.dt = b.kd + b.mix - b.im;
  b.sr = loss_sr(b.od, b.wg, epsilon, zeta);
  b.total = b.dt + b.sr;
  axpy(1.0, c.kd.gradient, out.gradient);
  axpy(1.0, c.mix.gradient, out.gradient);
  axpy(-1.0, c.im.gradient, out.gradient);
  axpy(epsilon, c.od.gradient, out.gradient);
  axpy(zeta, c.wg.gradient, out.gradient);
  return out;
}

StageOneComponents stage_one_components(const NetworkWeights& w, const SubnetworkMask& mask, const Matrix& x,
                                        const Matrix& pseudo_labels, const MixPlan& plan,
                                        const StageOneSwitches& on, WgForm form) {
  StageOneComponents c;
  const std::vector<double> zeros(w.theta.size(), 0.0);
  c.kd = c.mix = c.im = c.od = c.wg = ParamLoss{0.0, zeros};
  const Matrix logits = forward_full(w, x).logits;
  if (on.kd) c.kd = through_network(w, x, loss_kd(pseudo_labels, logits));
  if (on.im) c.im = through_network(w, x, loss_im(logits));
  if (on.mix) c.mix = loss_mix(w, x, softmax_rows(logits), plan);
  if (on.sr) {
    c.od = loss_od(w, mask, x);
    auto wg = loss_wg(w, mask, x, form);
    c.wg = ParamLoss{wg.value, std::move(wg.gradient)};
  }
  return c;
}

}  // namespace ddsr
