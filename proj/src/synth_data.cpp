// SPDX-License-Identifier: Apache-2.0
#include "ddsr/synth_data.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "ddsr/errors.hpp"

namespace ddsr {
namespace {

void validate_spec(const DomainSpec& s) {
  const std::size_t c = s.class_means.rows();
  if (c < 2) throw invalid_input("domain spec needs at least 2 classes");
  if (s.class_weights.size() != c) throw invalid_input("class_weights size does not match class count");
  double total = 0.0;
  for (double w : s.class_weights) {
    if (!(w >= 0.0)) throw invalid_input("class_weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw invalid_input("class_weights must sum to 1");
  if (!(s.noise_scale >= 0.0)) throw invalid_input("noise_scale must be non-negative");
  for (double v : s.class_means.data())
    if (!std::isfinite(v)) throw invalid_input("class means must be finite");
}

std::string make_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%06zu", prefix, i);
  return buf;
}

Dataset sample_domain(const DomainSpec& spec, std::size_t n, std::uint64_t seed, char prefix) {
  const std::size_t c = spec.class_means.rows(), d = spec.class_means.cols();
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(spec.class_weights.begin(), spec.class_weights.end());
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset out;
  out.class_count = c;
  out.features = Matrix(n, d);
  out.labels.emplace(n);
  out.ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = pick(rng);
    (*out.labels)[i] = y;
    for (std::size_t k = 0; k < d; ++k) out.features(i, k) = spec.class_means(y, k) + spec.noise_scale * noise(rng);
    out.ids.push_back(make_id(prefix, i));
  }
  return out;
}

}  // namespace

Matrix rotate_planes(const Matrix& points, double angle) {
  Matrix out = points;
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t k = 0; k + 1 < out.cols(); k += 2) {
      const double x = points(i, k), y = points(i, k + 1);
      out(i, k) = c * x - s * y;
      out(i, k + 1) = s * x + c * y;
    }
  }
  return out;
}

Matrix shifted_means(const Matrix& means, const Shift& shift) {
  if (!shift.translation.empty() && shift.translation.size() != means.cols())
    throw invalid_input("translation dimension does not match means");
  Matrix out = rotate_planes(means, shift.angle);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t k = 0; k < out.cols(); ++k)
      out(i, k) = shift.scale * out(i, k) + (shift.translation.empty() ? 0.0 : shift.translation[k]);
  return out;
}

DomainPair make_domain_pair(DomainSpec source, Shift shift, std::size_t n_source, std::size_t n_target,
                            std::uint64_t seed) {
  DomainPair p;
  p.target = source;
  p.target.class_means = shifted_means(source.class_means, shift);
  p.source = std::move(source);
  p.shift = std::move(shift);
  p.n_source = n_source;
  p.n_target = n_target;
  p.seed = seed;
  validate_domain_pair(p);
  return p;
}

void validate_domain_pair(const DomainPair& pair) {
  validate_spec(pair.source);
  validate_spec(pair.target);
  if (!(pair.shift.scale > 0.0)) throw invalid_input("shift scale must be positive");
  if (pair.source.class_means.cols() != pair.target.class_means.cols())
    throw invalid_input("source and target dimensions differ");
}

Dataset generate(const DomainPair& pair) {
  validate_domain_pair(pair);
  // Distinct streams for source and target draws from one seed.
  return sample_domain(pair.target, pair.n_target, pair.seed * 2 + 1, 't');
}

Dataset generate_source(const DomainPair& pair) {
  validate_domain_pair(pair);
  return sample_domain(pair.source, pair.n_source, pair.seed * 2, 's');
}

double bayes_accuracy(const DomainSpec& spec, std::size_t draws, std::uint64_t oracle_seed) {
  validate_spec(spec);
  const std::size_t c = spec.class_means.rows(), d = spec.class_means.cols();
  std::mt19937_64 rng(oracle_seed);
  std::discrete_distribution<std::size_t> pick(spec.class_weights.begin(), spec.class_weights.end());
  std::normal_distribution<double> noise(0.0, 1.0);
  const double var = spec.noise_scale * spec.noise_scale;
  std::vector<double> x(d);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < draws; ++t) {
    const std::size_t y = pick(rng);
    for (std::size_t k = 0; k < d; ++k) x[k] = spec.class_means(y, k) + spec.noise_scale * noise(rng);
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c; ++k) {
      if (spec.class_weights[k] <= 0.0) continue;
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) dist += (x[j] - spec.class_means(k, j)) * (x[j] - spec.class_means(k, j));
      // Zero noise degenerates to nearest-mean.
      const double score = var > 0.0 ? std::log(spec.class_weights[k]) - dist / (2.0 * var) : -dist;
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    correct += best == y;
  }
  return static_cast<double>(correct) / static_cast<double>(draws);
}

}  // namespace ddsr
