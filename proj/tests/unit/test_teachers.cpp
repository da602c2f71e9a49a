// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"

#include "ddsr/errors.hpp"
#include "ddsr/formats.hpp"
#include "ddsr/teachers.hpp"

using namespace ddsr;
using V = std::vector<double>;

namespace {

SyntheticBayesTeacher three_class(double temperature = 1.0) {
  SyntheticBayesTeacher t;
  t.class_means = Matrix(3, 2, V{0, 0, 6, 0, 0, 6});
  t.temperature = temperature;
  t.label_bias = {0.0, 0.0, 0.0};
  return t;
}

Dataset batch(const Matrix& x) {
  Dataset d;
  d.features = x;
  d.class_count = 3;
  for (std::size_t i = 0; i < x.rows(); ++i) d.ids.push_back("r" + std::to_string(i));
  return d;
}

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("bayes teacher at a class mean") {
  const auto t = three_class();
  const auto p = query(t, batch(Matrix(1, 2, V{6, 0})));
  CHECK(argmax(p.row(0)) == 1);
}

TEST_CASE("temperature raises entropy") {
  const Dataset d = batch(Matrix(1, 2, V{2, 1}));
  CHECK(entropy(query(three_class(10.0), d).row(0)) > entropy(query(three_class(1.0), d).row(0)));
}

TEST_CASE("teacher validation") {
  auto t = three_class();
  t.temperature = 0.0;
  CHECK_THROWS_AS(t.validate(), invalid_input);
  t = three_class();
  t.label_bias = {0.0};
  CHECK_THROWS_AS(t.validate(), invalid_input);
}

TEST_CASE("file teacher round trip") {
  const auto path = std::filesystem::temp_directory_path() / "ddsr_teacher_rt.csv";
  const Dataset d = batch(oracle::random_matrix(20, 2, 4));
  const auto p = query(three_class(), d);
  write_prediction_matrix(path, p);
  const auto ft = load_file_teacher(path, 3);
  const auto q = query(ft, d);
  for (std::size_t k = 0; k < p.rows().data().size(); ++k)
    CHECK(std::abs(p.rows().data()[k] - q.rows().data()[k]) <= 1e-12);
  Dataset other = d;
  other.ids[3] = "unknown";
  CHECK_THROWS_AS(query(ft, other), missing_prediction);
  std::filesystem::remove(path);
}

TEST_CASE("consistency gradient matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PromptedTeacher t(three_class(2.0), 0.05);
    t.set_prompt_bias({0.3, -0.2, 0.1});
    const Dataset d = batch(oracle::random_matrix(16, 2, seed, 3.0));
    const Matrix y = oracle::random_simplex_rows(16, 3, seed + 10);
    const auto g = consistency_loss(t, d, y).gradient;
    const auto fd = oracle::fd_gradient(
        [&](const V& w) {
          PromptedTeacher u = t;
          u.set_prompt_bias(w);
          return consistency_loss(u, d, y).value;
        },
        t.prompt_bias(), 1e-5);
    CHECK(oracle::relative_error(g, fd) < 1e-5);
  }
}

TEST_CASE("uniform student predictions leave the prompt alone") {
  PromptedTeacher t(three_class(), 0.1);
  const Dataset d = batch(oracle::random_matrix(10, 2, 2, 3.0));
  const Matrix y(10, 3, 1.0 / 3.0);
  for (double g : consistency_loss(t, d, y).gradient) CHECK(std::abs(g) <= 1e-12);
  prompt_step(t, d, y);
  for (double w : t.prompt_bias()) CHECK(std::abs(w) <= 1e-12);
}

TEST_CASE("zero prompt learning rate is the identity") {
  PromptedTeacher t(three_class(), 0.0);
  const Dataset d = batch(oracle::random_matrix(10, 2, 2, 3.0));
  const double l = prompt_step(t, d, oracle::random_simplex_rows(10, 3, 1));
  CHECK(l < 0.0);
  CHECK(t.prompt_bias() == V{0.0, 0.0, 0.0});
}

TEST_CASE("prompting toward one class raises its mass monotonically and leaves the base frozen") {
  PromptedTeacher t(three_class(), 0.1);
  const auto base_before = std::get<SyntheticBayesTeacher>(t.base());
  const Dataset d = batch(oracle::random_matrix(30, 2, 7, 3.0));
  Matrix y(30, 3, 0.0);
  for (std::size_t i = 0; i < 30; ++i) y(i, 2) = 1.0;
  double prev = mean_distribution(query(t, d))[2];
  for (int s = 0; s < 100; ++s) {
    prompt_step(t, d, y);
    const double now = mean_distribution(query(t, d))[2];
    REQUIRE(now > prev);
    prev = now;
  }
  const auto& base_after = std::get<SyntheticBayesTeacher>(t.base());
  CHECK(same_bits(base_before.class_means, base_after.class_means));
  CHECK(std::memcmp(&base_before.cov_scale, &base_after.cov_scale, sizeof(double)) == 0);
  CHECK(std::memcmp(&base_before.temperature, &base_after.temperature, sizeof(double)) == 0);
  CHECK(base_before.label_bias == base_after.label_bias);
}

TEST_CASE("query does not mutate the oracle") {
  PromptedTeacher t(three_class(), 0.1);
  t.set_prompt_bias({0.1, 0.2, 0.3});
  const Dataset d = batch(oracle::random_matrix(5, 2, 1));
  const auto a = query(TeacherOracle{t}, d);
  const auto b = query(TeacherOracle{t}, d);
  CHECK(a.rows() == b.rows());
  CHECK(t.prompt_bias() == V{0.1, 0.2, 0.3});
}

TEST_CASE("prompted file teacher uses log-probabilities") {
  const auto path = std::filesystem::temp_directory_path() / "ddsr_teacher_log.csv";
  const Dataset d = batch(oracle::random_matrix(6, 2, 4));
  const auto p = query(three_class(), d);
  write_prediction_matrix(path, p);
  PromptedTeacher t(load_file_teacher(path, 3), 0.1);
  CHECK(t.bias_scale() == 1.0);
  const auto q = query(t, d);
  for (std::size_t k = 0; k < p.rows().data().size(); ++k)
    CHECK(std::abs(p.rows().data()[k] - q.rows().data()[k]) <= 1e-12);
  std::filesystem::remove(path);
}
