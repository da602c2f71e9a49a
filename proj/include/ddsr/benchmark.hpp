// SPDX-License-Identifier: Apache-2.0
#pragma once

// The default synthetic benchmark: a 4-class, 8-dimensional Gaussian task
// under a planar rotation, a source-trained teacher that ignores the shift and
// a vision-language stand-in that partially tracks it.

#include <cstdint>

#include "ddsr/synth_data.hpp"
#include "ddsr/teachers.hpp"

namespace ddsr {

struct Benchmark {
  DomainPair pair;
  SyntheticBayesTeacher teacher_b;
  SyntheticBayesTeacher teacher_c;  // frozen scorer under the prompt
};

struct BenchmarkParams {
  std::size_t classes = 4;
  std::size_t dim = 8;
  double radius = 3.0;
  double noise = 1.0;
  double angle = 0.7;
  std::size_t n_target = 2000;
  std::size_t n_source = 2000;
  double b_bias = 1.5;          // logit bias of teacher_b on class 1
  double c_track = 0.1;         // fraction of the rotation teacher_c knows about
  double c_bias = 1.5;          // logit bias of teacher_c on class C-1
  double c_temperature = 2.0;
};

Benchmark make_benchmark(const BenchmarkParams& p, std::uint64_t seed);
inline Benchmark default_benchmark(std::uint64_t seed = 0) { return make_benchmark(BenchmarkParams{}, seed); }

}  // namespace ddsr
