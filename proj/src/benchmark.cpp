// SPDX-License-Identifier: Apache-2.0
#include "ddsr/benchmark.hpp"

#include "ddsr/errors.hpp"

namespace ddsr {

Benchmark make_benchmark(const BenchmarkParams& p, std::uint64_t seed) {
  if (p.classes < 2 || p.dim < p.classes) throw invalid_input("benchmark needs 2 <= classes <= dim");
  Matrix means(p.classes, p.dim, 0.0);
  for (std::size_t c = 0; c < p.classes; ++c) means(c, c) = p.radius;
  DomainSpec source{means, std::vector<double>(p.classes, 1.0 / static_cast<double>(p.classes)), p.noise};
  Shift shift{p.angle, std::vector<double>(p.dim, 0.0), 1.0};

  Benchmark b{make_domain_pair(source, shift, p.n_source, p.n_target, seed), {}, {}};
  const double cov = p.noise > 0.0 ? p.noise * p.noise : 1.0;

  b.teacher_b.class_means = means;
  b.teacher_b.cov_scale = cov;
  b.teacher_b.label_bias.assign(p.classes, 0.0);
  b.teacher_b.label_bias[1] = p.b_bias;

  b.teacher_c.class_means = rotate_planes(means, p.c_track * p.angle);
  b.teacher_c.cov_scale = cov;
  b.teacher_c.temperature = p.c_temperature;
  b.teacher_c.label_bias.assign(p.classes, 0.0);
  b.teacher_c.label_bias[p.classes - 1] = p.c_bias;
  return b;
}

}  // namespace ddsr
