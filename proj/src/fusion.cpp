// SPDX-License-Identifier: Apache-2.0
#include "ddsr/fusion.hpp"

#include <cmath>

#include "ddsr/errors.hpp"

namespace ddsr {
namespace {

void check_pair(const PredictionMatrix& yb, const PredictionMatrix& yc) {
  if (yb.empty() || yc.empty()) throw invalid_input("fuse: empty prediction matrix");
  if (yb.class_count() != yc.class_count()) throw invalid_input("fuse: class counts differ");
  if (yb.size() != yc.size()) throw invalid_input("fuse: sample counts differ");
}

PredictionMatrix blend(const PredictionMatrix& yb, const PredictionMatrix& yc_aligned, double weight_c) {
  const double weight_b = 1.0 - weight_c;
  Matrix out(yb.size(), yb.class_count());
  for (std::size_t i = 0; i < yb.size(); ++i) {
    auto b = yb.row(i);
    auto c = yc_aligned.row(i);
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] = weight_c * c[j] + weight_b * b[j];
  }
  return PredictionMatrix(yb.ids(), std::move(out));
}

}  // namespace

std::string to_string(FusionBranch b) {
  switch (b) {
    case FusionBranch::clip_dominant: return "clip-dominant";
    case FusionBranch::alpha_weighted: return "alpha-weighted";
    case FusionBranch::fixed_weight: return "fixed-weight";
  }
  return "unknown";
}

double individual_uncertainty(const Matrix& m) {
  if (m.empty()) throw invalid_input("individual_uncertainty: empty matrix");
  double total = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) total += entropy(m.row(i));
  return total / static_cast<double>(m.rows());
}

double global_uncertainty(const Matrix& m) {
  if (m.empty()) throw invalid_input("global_uncertainty: empty matrix");
  return entropy(mean_distribution(m));
}

FusionReport fusion_report(const PredictionMatrix& yb, const PredictionMatrix& yc, double threshold) {
  check_pair(yb, yc);
  if (!std::isfinite(threshold)) throw invalid_input("fuse: threshold must be finite");
  FusionReport r;
  r.iu_b = individual_uncertainty(yb);
  r.iu_c = individual_uncertainty(yc);
  r.gu_b = global_uncertainty(yb);
  r.gu_c = global_uncertainty(yc);
  r.delta_gu = r.gu_b - r.gu_c;
  const double iu_sum = r.iu_b + r.iu_c;
  r.alpha = iu_sum < kDegenerateIu ? 0.5 : r.iu_c / iu_sum;
  r.threshold = threshold;
  if (r.delta_gu < threshold) {
    r.branch = FusionBranch::clip_dominant;
    r.weight_c = 1.0 - r.alpha / 2.0;
  } else {
    r.branch = FusionBranch::alpha_weighted;
    r.weight_c = r.alpha;
  }
  return r;
}

FusionResult fuse(const PredictionMatrix& yb, const PredictionMatrix& yc, double threshold) {
  const PredictionMatrix yc_aligned = yc.aligned_to(yb.ids());
  FusionReport report = fusion_report(yb, yc_aligned, threshold);
  return {blend(yb, yc_aligned, report.weight_c), report};
}

FusionResult fuse_fixed(const PredictionMatrix& yb, const PredictionMatrix& yc, double weight_c) {
  if (!(weight_c >= 0.0 && weight_c <= 1.0)) throw invalid_input("fixed fusion weight must be in [0, 1]");
  const PredictionMatrix yc_aligned = yc.aligned_to(yb.ids());
  FusionReport report = fusion_report(yb, yc_aligned, kDefaultGuThreshold);
  report.branch = FusionBranch::fixed_weight;
  report.weight_c = weight_c;
  return {blend(yb, yc_aligned, weight_c), report};
}

void ema_refine(PseudoLabelStore& store, const PredictionMatrix& yt) {
  if (!(store.beta >= 0.0 && store.beta <= 1.0)) throw invalid_input("ema_refine: beta must be in [0, 1]");
  if (yt.class_count() != store.labels.class_count()) throw invalid_input("ema_refine: class counts differ");
  const PredictionMatrix aligned = yt.aligned_to(store.labels.ids());
  const double beta = store.beta;
  Matrix out = store.labels.rows();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto o = out.row(i);
    auto t = aligned.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] = beta * o[j] + (1.0 - beta) * t[j];
  }
  store.labels = PredictionMatrix(store.labels.ids(), std::move(out));
}

}  // namespace ddsr
