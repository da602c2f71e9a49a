// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "ddsr/fusion.hpp"

using namespace ddsr;
using V = std::vector<double>;

namespace {

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("s" + std::to_string(i));
  return out;
}

PredictionMatrix pm(std::size_t n, std::size_t c, V v) { return PredictionMatrix(ids(n), Matrix(n, c, std::move(v))); }

// yb with a uniform marginal and yc whose marginal has entropy ln 4 - gap.
std::pair<PredictionMatrix, PredictionMatrix> gap_pair(double gap) {
  Matrix b(4, 4, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) b(i, j) = 0.1;
    b(i, i) = 0.7;
  }
  const V q = oracle::distribution_with_entropy(4, std::log(4.0) - gap);
  Matrix c(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) c(i, j) = q[j];
  return {PredictionMatrix(ids(4), b), PredictionMatrix(ids(4), c)};
}

}  // namespace

TEST_CASE("individual_uncertainty") {
  CHECK(individual_uncertainty(pm(2, 2, {1, 0, 0, 1})) == 0.0);
  CHECK(individual_uncertainty(pm(2, 3, V(6, 1.0 / 3))) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  CHECK(individual_uncertainty(pm(2, 2, {1, 0, 0.5, 0.5})) == doctest::Approx(std::log(2.0) / 2).epsilon(1e-14));
}

TEST_CASE("global_uncertainty") {
  CHECK(global_uncertainty(pm(2, 2, {1, 0, 0, 1})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(global_uncertainty(pm(2, 2, {1, 0, 1, 0})) == 0.0);
  CHECK(global_uncertainty(pm(2, 2, {0.8, 0.2, 0.2, 0.8})) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("branch selection around a 0.07 gap") {
  const auto [yb, yc] = gap_pair(0.07);
  const auto lo = fuse(yb, yc, 0.05), hi = fuse(yb, yc, 0.08);
  CHECK(lo.report.delta_gu == doctest::Approx(0.07).epsilon(1e-12));
  CHECK(lo.report.branch == FusionBranch::alpha_weighted);
  CHECK(hi.report.branch == FusionBranch::clip_dominant);
  CHECK(lo.report.weight_c == doctest::Approx(lo.report.alpha));
  CHECK(hi.report.weight_c == doctest::Approx(1.0 - hi.report.alpha / 2));
}

TEST_CASE("equal IU gives alpha one half and clip-dominant weights 0.75/0.25 on teacher_c/teacher_b") {
  const auto a = pm(2, 2, {0.9, 0.1, 0.1, 0.9});
  const auto r = fuse(a, a, 0.05);
  CHECK(r.report.alpha == 0.5);
  CHECK(r.report.branch == FusionBranch::clip_dominant);
  CHECK(r.report.weight_c == 0.75);
}

TEST_CASE("fully confident teachers fall back to alpha one half") {
  const auto a = pm(2, 2, {1, 0, 0, 1});
  CHECK(fuse(a, a).report.alpha == 0.5);
}

TEST_CASE("fuse aligns teacher_c by id") {
  const PredictionMatrix yb({"x", "y"}, Matrix(2, 2, V{1, 0, 0, 1}));
  const PredictionMatrix yc({"y", "x"}, Matrix(2, 2, V{0, 1, 1, 0}));
  const auto r = fuse(yb, yc);
  CHECK(r.labels.ids() == yb.ids());
  CHECK(r.labels.row(0)[0] == 1.0);
  CHECK(r.labels.row(1)[1] == 1.0);
}

TEST_CASE("fusion matches the naive oracle on random instances") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> n_dist(1, 30), c_dist(2, 8);
  std::uniform_real_distribution<double> th(-0.5, 0.5);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = n_dist(rng), c = c_dist(rng);
    const Matrix b = oracle::random_simplex_rows(n, c, rng()), cc = oracle::random_simplex_rows(n, c, rng());
    const double threshold = th(rng);
    const auto r = fuse(PredictionMatrix(ids(n), b), PredictionMatrix(ids(n), cc), threshold);
    const auto o = oracle::naive_fuse(b, cc, threshold);
    REQUIRE(std::abs(r.report.iu_b - o.iu_b) <= 1e-12);
    REQUIRE(std::abs(r.report.iu_c - o.iu_c) <= 1e-12);
    REQUIRE(std::abs(r.report.gu_b - o.gu_b) <= 1e-12);
    REQUIRE(std::abs(r.report.gu_c - o.gu_c) <= 1e-12);
    REQUIRE((r.report.branch == FusionBranch::clip_dominant) == o.clip_dominant);
    if (o.clip_dominant) REQUIRE(r.report.weight_c > 0.5);
    for (std::size_t k = 0; k < n * c; ++k) REQUIRE(std::abs(r.labels.rows().data()[k] - o.fused.data()[k]) <= 1e-12);
    for (std::size_t i = 0; i < n; ++i) REQUIRE_NOTHROW(validate_prob_vector(r.labels.row(i)));
  }
}

TEST_CASE("IU and GU on large matrices") {
  const Matrix m = oracle::random_simplex_rows(1000, 100, 77);
  const auto o = oracle::naive_fuse(m, m, 0.0);
  CHECK(std::abs(individual_uncertainty(m) - o.iu_b) <= 1e-12);
  CHECK(std::abs(global_uncertainty(m) - o.gu_b) <= 1e-12);
}

TEST_CASE("fixed-weight fusion") {
  const auto yb = pm(1, 2, {1, 0}), yc = pm(1, 2, {0, 1});
  const auto r = fuse_fixed(yb, yc, 0.2);
  CHECK(r.report.branch == FusionBranch::fixed_weight);
  CHECK(r.labels.row(0)[1] == doctest::Approx(0.2));
  CHECK_THROWS(fuse_fixed(yb, yc, 1.5));
}

TEST_CASE("ema_refine") {
  PseudoLabelStore s{pm(1, 2, {1, 0}), 0.9, {}, 1};
  ema_refine(s, pm(1, 2, {0, 1}));
  CHECK(s.labels.row(0)[0] == doctest::Approx(0.9));
  CHECK(s.labels.row(0)[1] == doctest::Approx(0.1));

  PseudoLabelStore same{pm(1, 2, {0.3, 0.7}), 0.9, {}, 1};
  ema_refine(same, pm(1, 2, {0.3, 0.7}));
  CHECK(same.labels.row(0)[0] == doctest::Approx(0.3).epsilon(1e-15));

  PseudoLabelStore zero{pm(1, 2, {0.3, 0.7}), 0.0, {}, 1};
  ema_refine(zero, pm(1, 2, {0.6, 0.4}));
  CHECK(zero.labels.row(0)[0] == 0.6);
}

TEST_CASE("ema_refine keeps a shared argmax") {
  const Matrix a = oracle::random_simplex_rows(500, 5, 1), b = oracle::random_simplex_rows(500, 5, 2);
  PseudoLabelStore s{PredictionMatrix(ids(500), a), 0.7, {}, 1};
  ema_refine(s, PredictionMatrix(ids(500), b));
  for (std::size_t i = 0; i < 500; ++i) {
    REQUIRE_NOTHROW(validate_prob_vector(s.labels.row(i)));
    if (argmax(a.row(i)) == argmax(b.row(i))) REQUIRE(argmax(s.labels.row(i)) == argmax(a.row(i)));
  }
}
