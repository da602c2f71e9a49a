// SPDX-License-Identifier: Apache-2.0
#pragma once

// Two-stage adaptation driver. Stage One distils the fused teacher
// pseudo-labels into the student with subnetwork rectification, EMA label
// refinement and periodic prompt refresh; Stage Two self-trains on
// nearest-prototype labels.

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ddsr/config.hpp"
#include "ddsr/dataset.hpp"
#include "ddsr/fusion.hpp"
#include "ddsr/losses.hpp"
#include "ddsr/target_net.hpp"
#include "ddsr/teachers.hpp"

namespace ddsr {

struct MetricsRecord {
  int epoch = 0;
  int stage = 1;
  LossBreakdown loss;
  std::optional<FusionReport> fusion;  // set on epochs where labels were (re)fused
  std::optional<double> target_accuracy;
  double gu_of_target = 0.0;
  std::vector<double> prompt_bias;
  std::size_t empty_prototypes = 0;
  double max_abs_od = 0.0;  // over the epoch's batches
  double max_abs_wg = 0.0;
};

using MetricsCallback = std::function<void(const MetricsRecord&)>;

struct RunState {
  NetworkWeights model;
  OptimizerState optimizer;
  std::mt19937_64 rng;
};

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size);

// Fresh student and optimizer for a run; deterministic in cfg.seed.
RunState make_run_state(const PipelineConfig& cfg, const Dataset& data);

struct StageOneResult {
  PseudoLabelStore store;
  PredictionMatrix first_fusion;  // labels produced by the epoch-1 fusion
  std::vector<MetricsRecord> metrics;
};

StageOneResult run_stage_one(const PipelineConfig& cfg, const Dataset& data, const TeacherOracle& teacher_b,
                             PromptedTeacher& teacher_c, RunState& state, const MetricsCallback& on_epoch = {});

std::vector<MetricsRecord> run_stage_two(const PipelineConfig& cfg, const Dataset& data, RunState& state,
                                         const MetricsCallback& on_epoch = {});

struct PipelineResult {
  NetworkWeights stage_one_model;
  NetworkWeights final_model;
  StageOneResult stage_one;
  std::vector<MetricsRecord> metrics;  // all epochs, both stages
  PromptedTeacher teacher_c;
};

PipelineResult run_pipeline(const PipelineConfig& cfg, const Dataset& data, const TeacherOracle& teacher_b,
                            const PromptedTeacher& teacher_c, const MetricsCallback& on_epoch = {});

struct PrototypeSet {
  Matrix mu;                        // C x feature_dim
  std::vector<double> soft_counts;  // sum of probability mass per class
  std::vector<bool> empty;          // soft_count < 1e-12
};

inline constexpr double kEmptyPrototypeMass = 1e-12;

// Probability-weighted class centroids. `hard` mode only sums samples whose argmax is the class.
PrototypeSet compute_prototypes(const Matrix& features, const Matrix& predictions,
                                PrototypeMode mode = PrototypeMode::soft);

struct PrototypeAssignment {
  std::vector<std::size_t> labels;
  std::size_t zero_norm_features = 0;
};

// Nearest non-empty prototype by cosine distance; ties go to the lowest class index.
PrototypeAssignment assign_nearest_prototype(const Matrix& features, const PrototypeSet& protos);

// Fraction of samples whose argmax prediction matches the hidden label.
double evaluate(const NetworkWeights& model, const Dataset& data, unsigned threads = 1);
double accuracy_of(const PredictionMatrix& predictions, const Dataset& data);

// Student predictions on the whole set (inference pass).
PredictionMatrix predict(const NetworkWeights& model, const Dataset& data, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Ablation / sensitivity harness.

struct AblationRow {
  std::string axis;
  std::string label;
  double value = 0.0;
  double stage_one_accuracy = 0.0;
  double final_accuracy = 0.0;
  double gu_of_target = 0.0;
  double max_abs_od = 0.0;
  double max_abs_wg = 0.0;
};

// Axis names: "loss" (labels are loss switches to drop; "full" keeps all),
// "gamma", "gu_threshold", "epsilon", "zeta", "clip_weight".
struct AblationAxis {
  std::string name;
  std::vector<double> values;        // numeric axes
  std::vector<std::string> labels;   // loss axis
};

std::vector<AblationRow> run_ablation_grid(const PipelineConfig& base, const AblationAxis& axis, const Dataset& data,
                                           const TeacherOracle& teacher_b, const PromptedTeacher& teacher_c);

}  // namespace ddsr
