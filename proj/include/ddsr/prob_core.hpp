// SPDX-License-Identifier: Apache-2.0
#pragma once

// Probability-simplex primitives. Every log here is the natural log, so
// entropies and divergences are in nats.

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ddsr/matrix.hpp"

namespace ddsr {

inline constexpr double kSimplexTolerance = 1e-9;
inline constexpr double kKlFloor = 1e-12;
inline constexpr double kCosineZeroNorm = 1e-12;

// Throws invalid_input unless p has >= 2 entries in [0,1] summing to 1 within tol.
void validate_prob_vector(std::span<const double> p, double tol = kSimplexTolerance);

double entropy(std::span<const double> p);
double kl_div(std::span<const double> p, std::span<const double> q);
double js_div(std::span<const double> p, std::span<const double> q);
double cosine(std::span<const double> u, std::span<const double> v);

std::vector<double> softmax(std::span<const double> z, double temperature = 1.0);
std::vector<double> log_softmax(std::span<const double> z);

std::size_t argmax(std::span<const double> v);

// A set of soft predictions, one simplex row per sample id.
class PredictionMatrix {
 public:
  PredictionMatrix() = default;
  // Validates every row and the uniqueness of ids.
  PredictionMatrix(std::vector<std::string> ids, Matrix rows);

  std::size_t size() const noexcept { return rows_.rows(); }
  std::size_t class_count() const noexcept { return rows_.cols(); }
  bool empty() const noexcept { return rows_.empty(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const Matrix& rows() const noexcept { return rows_; }
  std::span<const double> row(std::size_t i) const { return rows_.row(i); }

  // Index of a sample id, or -1 when absent.
  std::ptrdiff_t find(const std::string& id) const;
  std::span<const double> row_for(const std::string& id) const;

  // Returns a copy with rows permuted to follow `ids`; throws on any id mismatch.
  PredictionMatrix aligned_to(const std::vector<std::string>& ids) const;

 private:
  std::vector<std::string> ids_;
  Matrix rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::vector<double> mean_distribution(const Matrix& rows);
inline std::vector<double> mean_distribution(const PredictionMatrix& m) { return mean_distribution(m.rows()); }

// Row-wise softmax of a logit matrix.
Matrix softmax_rows(const Matrix& logits, double temperature = 1.0);

}  // namespace ddsr
