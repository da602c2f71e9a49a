// SPDX-License-Identifier: Apache-2.0
#pragma once

// Two-domain Gaussian benchmarks with a rigid-motion covariate shift.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ddsr/dataset.hpp"
#include "ddsr/matrix.hpp"

namespace ddsr {

struct DomainSpec {
  Matrix class_means;                 // C x d
  std::vector<double> class_weights;  // on the simplex
  double noise_scale = 1.0;           // isotropic standard deviation
};

struct Shift {
  double angle = 0.0;  // radians, applied in each coordinate plane (0,1), (2,3), ...
  std::vector<double> translation;
  double scale = 1.0;
};

struct DomainPair {
  DomainSpec source;
  DomainSpec target;
  Shift shift;
  std::size_t n_source = 0;
  std::size_t n_target = 0;
  std::uint64_t seed = 0;
};

// Rotates every row by `angle` in the planes (0,1), (2,3), ...; an odd last
// coordinate is left alone.
Matrix rotate_planes(const Matrix& points, double angle);

// scale * R(angle) * mean + translation for each class mean.
Matrix shifted_means(const Matrix& means, const Shift& shift);

// Target spec is derived from the source spec and the shift.
DomainPair make_domain_pair(DomainSpec source, Shift shift, std::size_t n_source, std::size_t n_target,
                            std::uint64_t seed);
void validate_domain_pair(const DomainPair& pair);

// Target-domain samples with ground truth. Ids are "t000000", "t000001", ...
Dataset generate(const DomainPair& pair);
// Source-domain samples, ids "s000000", ...
Dataset generate_source(const DomainPair& pair);

inline constexpr std::uint64_t kBayesOracleSeed = 0x5eed0bae5ULL;

// Monte-Carlo accuracy of the Bayes classifier for isotropic equal-covariance classes.
double bayes_accuracy(const DomainSpec& spec, std::size_t draws = 1'000'000,
                      std::uint64_t oracle_seed = kBayesOracleSeed);

}  // namespace ddsr
