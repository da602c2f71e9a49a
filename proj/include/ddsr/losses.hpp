// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training objectives with exact gradients. Every expectation is the mean over
// the mini-batch. Teacher-side targets (pseudo-labels, mixed targets) are
// constants; gradients flow only into the student.

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ddsr/matrix.hpp"
#include "ddsr/target_net.hpp"

namespace ddsr {

// Loss defined on logits; dlogits is d value / d logits.
struct LogitLoss {
  double value = 0.0;
  Matrix dlogits;
};

// Loss defined on parameters.
struct ParamLoss {
  double value = 0.0;
  std::vector<double> gradient;
};

// mean_i KL(pseudo_i || softmax(logits_i)).
LogitLoss loss_kd(const Matrix& pseudo_labels, const Matrix& logits);

// H(mean_i p_i) - mean_i H(p_i) with p_i = softmax(logits_i).
LogitLoss loss_im(const Matrix& logits);

// mean_i -ln p_i[label_i], each term clamped at -ln(1e-12).
LogitLoss loss_self(std::span<const std::size_t> labels, const Matrix& logits);

// Pairing and interpolation weights for one mixup batch.
struct MixPlan {
  std::vector<std::size_t> partner;  // a derangement of 0..B-1 (empty for B < 2)
  std::vector<double> lambda;        // one Beta(a, a) draw per pair
};

inline constexpr double kMixupBetaShape = 0.3;

MixPlan draw_mix_plan(std::size_t batch, std::mt19937_64& rng, double beta_shape = kMixupBetaShape);

// mean_i KL(f(mix(x_i, x_j)) || mix(y_i, y_j)); `targets` are the student's own
// detached predictions on `x`.
ParamLoss loss_mix(const NetworkWeights& w, const Matrix& x, const Matrix& targets, const MixPlan& plan);

// mean_i JS(softmax(f_sub(x_i)), softmax(f_full(x_i))).
ParamLoss loss_od(const NetworkWeights& w, const SubnetworkMask& mask, const Matrix& x);

enum class WgForm { cosine, one_minus_cosine };
std::string to_string(WgForm f);
WgForm wg_form_from_string(const std::string& s);

struct WgLoss {
  double value = 0.0;
  double weight = 1.0;  // 1 + exp(-H(subnetwork predictions)), held constant
  double cosine = 0.0;
  std::vector<double> gradient;
};

// Entropy-weighted cosine between the two path contributions to grad L_od,
// both restricted to the parameters the paths share.
WgLoss loss_wg(const NetworkWeights& w, const SubnetworkMask& mask, const Matrix& x, WgForm form = WgForm::cosine);

struct OdPathGradients {
  double value = 0.0;
  std::vector<double> via_sub;   // contribution flowing through the subnetwork forward
  std::vector<double> via_full;  // contribution flowing through the full forward
};
OdPathGradients od_path_gradients(const NetworkWeights& w, const SubnetworkMask& mask, const Matrix& x);

inline constexpr double kDefaultEpsilon = 0.6;
inline constexpr double kDefaultZeta = 0.3;

inline double loss_sr(double od, double wg, double epsilon = kDefaultEpsilon, double zeta = kDefaultZeta) {
  return epsilon * od + zeta * wg;
}

struct LossBreakdown {
  double kd = 0.0, mix = 0.0, im = 0.0, dt = 0.0;
  double od = 0.0, wg = 0.0, sr = 0.0;
  double cm = 0.0, self_ce = 0.0;
  double total = 0.0;
};

// Individually computed Stage One components with gradients over theta.
struct StageOneComponents {
  ParamLoss kd, mix, im, od, wg;
};

struct StageOneLoss {
  LossBreakdown breakdown;
  std::vector<double> gradient;
};

// (kd + mix - im) + (epsilon * od + zeta * wg), gradients composed the same way.
StageOneLoss stage_one_total(const StageOneComponents& c, double epsilon, double zeta);

struct StageOneSwitches {
  bool kd = true, mix = true, im = true, sr = true;
};

// Evaluates every enabled component on one batch; disabled ones are zero.
StageOneComponents stage_one_components(const NetworkWeights& w, const SubnetworkMask& mask, const Matrix& x,
                                        const Matrix& pseudo_labels, const MixPlan& plan,
                                        const StageOneSwitches& on, WgForm form);

}  // namespace ddsr
