// SPDX-License-Identifier: Apache-2.0
#include "ddsr/teachers.hpp"

#include <algorithm>
#include <cmath>

#include "ddsr/errors.hpp"
#include "ddsr/formats.hpp"

namespace ddsr {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Smallest probability fed to ln when a file row is turned into logits.
constexpr double kLogFloor = 1e-300;

}  // namespace

void SyntheticBayesTeacher::validate() const {
  if (class_means.rows() < 2) throw invalid_input("teacher needs at least 2 classes");
  if (label_bias.size() != class_means.rows()) throw invalid_input("label_bias size does not match class count");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw invalid_input("teacher temperature must be positive");
  if (!(cov_scale > 0.0) || !std::isfinite(cov_scale)) throw invalid_input("teacher cov_scale must be positive");
  for (double v : class_means.data())
    if (!std::isfinite(v)) throw invalid_input("teacher means must be finite");
}

Matrix SyntheticBayesTeacher::scaled_logits(const Matrix& x) const {
  if (x.cols() != class_means.cols()) throw invalid_input("teacher: feature dimension mismatch");
  const std::size_t c = class_count(), d = x.cols();
  Matrix out(x.rows(), c);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x(i, j) - class_means(k, j);
        dist += diff * diff;
      }
      out(i, k) = (-dist / (2.0 * cov_scale) + label_bias[k]) / temperature;
    }
  }
  return out;
}

Matrix FileTeacher::lookup(const std::vector<std::string>& ids) const {
  Matrix out(ids.size(), class_count());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto r = rows_.row_for(ids[i]);
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

PromptedTeacher::PromptedTeacher(FrozenScorer base, double prompt_lr)
    : base_(std::move(base)), prompt_lr_(prompt_lr) {
  if (!(prompt_lr >= 0.0) || !std::isfinite(prompt_lr)) throw invalid_input("prompt_lr must be >= 0");
  if (auto* b = std::get_if<SyntheticBayesTeacher>(&base_)) b->validate();
  prompt_bias_.assign(class_count(), 0.0);
}

std::size_t PromptedTeacher::class_count() const {
  return std::visit([](const auto& b) { return b.class_count(); }, base_);
}

void PromptedTeacher::set_prompt_bias(std::vector<double> w) {
  if (w.size() != class_count()) throw invalid_input("prompt bias size does not match class count");
  for (double v : w)
    if (!std::isfinite(v)) throw invalid_input("prompt bias must be finite");
  prompt_bias_ = std::move(w);
}

double PromptedTeacher::bias_scale() const {
  if (const auto* b = std::get_if<SyntheticBayesTeacher>(&base_)) return 1.0 / b->temperature;
  return 1.0;
}

Matrix PromptedTeacher::base_logits(const Dataset& data) const {
  return std::visit(overloaded{
                        [&](const SyntheticBayesTeacher& b) { return b.scaled_logits(data.features); },
                        [&](const FileTeacher& f) {
                          Matrix m = f.lookup(data.ids);
                          for (double& v : m.data()) v = std::log(std::max(v, kLogFloor));
                          return m;
                        },
                    },
                    base_);
}

std::size_t class_count(const TeacherOracle& oracle) {
  return std::visit([](const auto& t) { return t.class_count(); }, oracle);
}

PredictionMatrix query(const SyntheticBayesTeacher& t, const Dataset& data) {
  t.validate();
  return PredictionMatrix(data.ids, softmax_rows(t.scaled_logits(data.features)));
}

PredictionMatrix query(const PromptedTeacher& t, const Dataset& data) {
  Matrix logits = t.base_logits(data);
  const double scale = t.bias_scale();
  for (std::size_t i = 0; i < logits.rows(); ++i)
    for (std::size_t k = 0; k < logits.cols(); ++k) logits(i, k) += scale * t.prompt_bias()[k];
  return PredictionMatrix(data.ids, softmax_rows(logits));
}

PredictionMatrix query(const FileTeacher& t, const Dataset& data) {
  return PredictionMatrix(data.ids, t.lookup(data.ids));
}

PredictionMatrix query(const TeacherOracle& oracle, const Dataset& data) {
  return std::visit([&](const auto& t) { return query(t, data); }, oracle);
}

ConsistencyLoss consistency_loss(const PromptedTeacher& t, const Dataset& data, const Matrix& target_predictions) {
  const std::size_t c = t.class_count();
  if (target_predictions.cols() != c) throw invalid_input("consistency loss: class count mismatch");
  if (target_predictions.rows() != data.size()) throw invalid_input("consistency loss: row count mismatch");
  if (data.size() == 0) throw invalid_input("consistency loss: empty batch");
  const PredictionMatrix yc = query(t, data);
  const double scale = t.bias_scale();
  const double inv_n = 1.0 / static_cast<double>(data.size());
  ConsistencyLoss out;
  out.gradient.assign(c, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto p = yc.row(i);
    auto y = target_predictions.row(i);
    double dot = 0.0;
    for (std::size_t k = 0; k < c; ++k) dot += y[k] * p[k];
    out.value -= dot * inv_n;
    // d(-y.p)/du_k = -p_k (y_k - y.p) with u = logits + scale * w.
    for (std::size_t k = 0; k < c; ++k) out.gradient[k] -= scale * p[k] * (y[k] - dot) * inv_n;
  }
  return out;
}

double prompt_step(PromptedTeacher& t, const Dataset& data, const Matrix& target_predictions) {
  const ConsistencyLoss loss = consistency_loss(t, data, target_predictions);
  std::vector<double> w = t.prompt_bias();
  for (std::size_t k = 0; k < w.size(); ++k) w[k] -= t.prompt_lr() * loss.gradient[k];
  t.set_prompt_bias(std::move(w));
  return loss.value;
}

FileTeacher load_file_teacher(const std::filesystem::path& path, std::size_t expected_classes) {
  return FileTeacher(read_prediction_matrix(path, expected_classes));
}

}  // namespace ddsr
