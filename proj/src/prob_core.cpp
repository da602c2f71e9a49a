// SPDX-License-Identifier: Apache-2.0
#include "ddsr/prob_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ddsr/errors.hpp"

namespace ddsr {
namespace {

void require_same_size(std::span<const double> a, std::span<const double> b, const char* op) {
  if (a.size() != b.size()) throw invalid_input(std::string(op) + ": dimension mismatch");
}

// Clamp to the KL floor and renormalize.
std::vector<double> floored(std::span<const double> p) {
  std::vector<double> out(p.begin(), p.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::max(v, kKlFloor);
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

}  // namespace

void validate_prob_vector(std::span<const double> p, double tol) {
  if (p.size() < 2) throw invalid_input("probability vector needs at least 2 classes");
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw invalid_input("probability entry outside [0,1]");
    total += v;
  }
  if (std::abs(total - 1.0) > tol) throw invalid_input("probability vector does not sum to 1");
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) throw invalid_input("entropy: invalid probability entry");
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(h, 0.0);
}

double kl_div(std::span<const double> p, std::span<const double> q) {
  require_same_size(p, q, "kl_div");
  const auto ps = floored(p);
  const auto qs = floored(q);
  double d = 0.0;
  for (std::size_t j = 0; j < ps.size(); ++j) d += ps[j] * std::log(ps[j] / qs[j]);
  return std::max(d, 0.0);
}

double js_div(std::span<const double> p, std::span<const double> q) {
  require_same_size(p, q, "js_div");
  // 0 ln 0 = 0; m_j >= p_j / 2 so the ratio is finite wherever p_j > 0.
  double d = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double m = 0.5 * (p[j] + q[j]);
    const double a = p[j] > 0.0 ? 0.5 * p[j] * std::log(p[j] / m) : 0.0;
    const double b = q[j] > 0.0 ? 0.5 * q[j] * std::log(q[j] / m) : 0.0;
    d += a + b;
  }
  return std::max(d, 0.0);
}

double cosine(std::span<const double> u, std::span<const double> v) {
  require_same_size(u, v, "cosine");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const double nu = std::sqrt(uu), nv = std::sqrt(vv);
  if (nu < kCosineZeroNorm || nv < kCosineZeroNorm) return 0.0;
  return std::clamp(uv / (nu * nv), -1.0, 1.0);
}

std::vector<double> log_softmax(std::span<const double> z) {
  if (z.empty()) throw invalid_input("log_softmax: empty logits");
  const double zmax = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - zmax);
  const double lse = zmax + std::log(s);
  std::vector<double> out(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) out[j] = z[j] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> z, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw invalid_input("softmax: temperature must be positive");
  if (z.empty()) throw invalid_input("softmax: empty logits");
  for (double v : z)
    if (!std::isfinite(v)) throw invalid_input("softmax: non-finite logit");
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double s = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    out[j] = std::exp((z[j] - zmax) / temperature);
    s += out[j];
  }
  for (double& v : out) v /= s;
  return out;
}

std::size_t argmax(std::span<const double> v) {
  // Lowest index wins ties.
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

PredictionMatrix::PredictionMatrix(std::vector<std::string> ids, Matrix rows)
    : ids_(std::move(ids)), rows_(std::move(rows)) {
  if (ids_.size() != rows_.rows()) throw invalid_input("prediction matrix: id count does not match rows");
  if (rows_.cols() < 2) throw invalid_input("prediction matrix: needs at least 2 classes");
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) throw invalid_input("prediction matrix: duplicate id " + ids_[i]);
    validate_prob_vector(rows_.row(i));
  }
}

std::ptrdiff_t PredictionMatrix::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::span<const double> PredictionMatrix::row_for(const std::string& id) const {
  const auto i = find(id);
  if (i < 0) throw missing_prediction("no prediction for sample id " + id);
  return row(static_cast<std::size_t>(i));
}

PredictionMatrix PredictionMatrix::aligned_to(const std::vector<std::string>& ids) const {
  if (ids.size() != size()) throw invalid_input("prediction matrix: sample count mismatch");
  if (ids == ids_) return *this;
  Matrix out(ids.size(), class_count());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto k = find(ids[i]);
    if (k < 0) throw invalid_input("prediction matrix: sample id " + ids[i] + " not present");
    auto src = row(static_cast<std::size_t>(k));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return PredictionMatrix(ids, std::move(out));
}

std::vector<double> mean_distribution(const Matrix& rows) {
  if (rows.empty()) throw invalid_input("mean_distribution: empty matrix");
  std::vector<double> mean(rows.cols(), 0.0);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    auto r = rows.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) mean[j] += r[j];
  }
  const double n = static_cast<double>(rows.rows());
  for (double& v : mean) v /= n;
  return mean;
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto p = softmax(logits.row(i), temperature);
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace ddsr
