// SPDX-License-Identifier: Apache-2.0
#pragma once

// Read-only prediction oracles: a synthetic Bayes scorer standing in for the
// black-box source model, a prompted teacher (frozen scorer plus a learnable
// per-class logit bias) standing in for the vision-language model, and a
// file-backed oracle for predictions exported by real models.

#include <cstddef>
#include <filesystem>
#include <variant>
#include <vector>

#include "ddsr/dataset.hpp"
#include "ddsr/matrix.hpp"
#include "ddsr/prob_core.hpp"

namespace ddsr {

struct SyntheticBayesTeacher {
  Matrix class_means;  // C x d
  double cov_scale = 1.0;
  double temperature = 1.0;
  std::vector<double> label_bias;  // additive logit bias, size C

  std::size_t class_count() const noexcept { return class_means.rows(); }
  // Temperature-scaled logits (-|x - mu_c|^2 / (2 cov_scale) + bias_c) / temperature.
  Matrix scaled_logits(const Matrix& x) const;
  void validate() const;
};

class FileTeacher {
 public:
  explicit FileTeacher(PredictionMatrix rows) : rows_(std::move(rows)) {}
  std::size_t class_count() const noexcept { return rows_.class_count(); }
  const PredictionMatrix& rows() const noexcept { return rows_; }
  // Stored rows for the given ids; throws missing_prediction for unknown ids.
  Matrix lookup(const std::vector<std::string>& ids) const;

 private:
  PredictionMatrix rows_;
};

using FrozenScorer = std::variant<SyntheticBayesTeacher, FileTeacher>;

// Only prompt_bias mutates; the base scorer is never touched after construction.
class PromptedTeacher {
 public:
  PromptedTeacher(FrozenScorer base, double prompt_lr);

  std::size_t class_count() const;
  const FrozenScorer& base() const noexcept { return base_; }
  const std::vector<double>& prompt_bias() const noexcept { return prompt_bias_; }
  void set_prompt_bias(std::vector<double> w);
  double prompt_lr() const noexcept { return prompt_lr_; }
  // 1/temperature for a Bayes base, 1 for a file base (logits = ln p).
  double bias_scale() const;

  // Frozen logits before the prompt bias is added.
  Matrix base_logits(const Dataset& data) const;

 private:
  FrozenScorer base_;
  std::vector<double> prompt_bias_;
  double prompt_lr_;
};

using TeacherOracle = std::variant<SyntheticBayesTeacher, PromptedTeacher, FileTeacher>;

std::size_t class_count(const TeacherOracle& oracle);

PredictionMatrix query(const SyntheticBayesTeacher& t, const Dataset& data);
PredictionMatrix query(const PromptedTeacher& t, const Dataset& data);
PredictionMatrix query(const FileTeacher& t, const Dataset& data);
PredictionMatrix query(const TeacherOracle& oracle, const Dataset& data);

struct ConsistencyLoss {
  double value = 0.0;             // mean_i -(y_t,i . y_c,i)
  std::vector<double> gradient;   // d value / d prompt_bias
};

// L_cm and its gradient with respect to the prompt bias; target_predictions
// are the student's predictions aligned with data rows.
ConsistencyLoss consistency_loss(const PromptedTeacher& t, const Dataset& data, const Matrix& target_predictions);

// One gradient-descent step on the prompt bias. Returns the pre-update loss.
double prompt_step(PromptedTeacher& t, const Dataset& data, const Matrix& target_predictions);

FileTeacher load_file_teacher(const std::filesystem::path& path, std::size_t expected_classes);

}  // namespace ddsr
