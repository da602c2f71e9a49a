// SPDX-License-Identifier: Apache-2.0
#pragma once

// Uncertainty-driven fusion of two teachers' soft predictions, and the EMA
// refinement of the resulting pseudo-labels with the student's predictions.

#include <optional>
#include <string>

#include "ddsr/matrix.hpp"
#include "ddsr/prob_core.hpp"

namespace ddsr {

inline constexpr double kDefaultGuThreshold = 0.05;  // nats

enum class FusionBranch { clip_dominant, alpha_weighted, fixed_weight };

std::string to_string(FusionBranch b);

struct FusionReport {
  double iu_b = 0.0;
  double iu_c = 0.0;
  double gu_b = 0.0;
  double gu_c = 0.0;
  double delta_gu = 0.0;  // gu_b - gu_c
  double alpha = 0.5;     // iu_c / (iu_b + iu_c)
  double threshold = kDefaultGuThreshold;
  FusionBranch branch = FusionBranch::alpha_weighted;
  double weight_c = 0.5;  // coefficient applied to the vision-language teacher rows
};

struct FusionResult {
  PredictionMatrix labels;
  FusionReport report;
};

// Mean per-row entropy.
double individual_uncertainty(const Matrix& m);
inline double individual_uncertainty(const PredictionMatrix& m) { return individual_uncertainty(m.rows()); }

// Entropy of the mean row.
double global_uncertainty(const Matrix& m);
inline double global_uncertainty(const PredictionMatrix& m) { return global_uncertainty(m.rows()); }

// IU_b + IU_c below this value means both teachers are fully confident; alpha falls back to 0.5.
inline constexpr double kDegenerateIu = 1e-12;

// Computes IU/GU/alpha/delta-GU and the branch without building the fused matrix.
FusionReport fusion_report(const PredictionMatrix& yb, const PredictionMatrix& yc, double threshold);

// Rows follow yb's id order; yc is aligned by id.
FusionResult fuse(const PredictionMatrix& yb, const PredictionMatrix& yc, double threshold = kDefaultGuThreshold);

// Baseline with a hand-picked weight on the vision-language teacher (no adaptivity).
FusionResult fuse_fixed(const PredictionMatrix& yb, const PredictionMatrix& yc, double weight_c);

struct PseudoLabelStore {
  PredictionMatrix labels;
  double beta = 0.9;
  FusionReport report;
  int epoch_of_last_fusion = 0;
};

// labels <- beta * labels + (1 - beta) * yt, rows matched by sample id.
void ema_refine(PseudoLabelStore& store, const PredictionMatrix& yt);

}  // namespace ddsr
