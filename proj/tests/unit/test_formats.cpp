// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"

#include "ddsr/errors.hpp"
#include "ddsr/formats.hpp"

using namespace ddsr;
namespace fs = std::filesystem;

namespace {

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name, const std::string& text = "")
      : path(fs::temp_directory_path() / name) {
    if (!text.empty()) std::ofstream(path) << text;
  }
  ~TempFile() { fs::remove(path); }
};

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("id" + std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("prediction matrix round trip is bit exact") {
  TempFile f("ddsr_pm_rt.csv");
  const PredictionMatrix m(ids(200), oracle::random_simplex_rows(200, 7, 3));
  write_prediction_matrix(f.path, m);
  const auto r = read_prediction_matrix(f.path, 7);
  CHECK(r.ids() == m.ids());
  CHECK(r.rows() == m.rows());
}

TEST_CASE("three valid rows") {
  TempFile f("ddsr_pm_3.csv", "id,p0,p1\na,0.5,0.5\nb,1,0\nc,0.25,0.75\n");
  CHECK(read_prediction_matrix(f.path).size() == 3);
}

TEST_CASE("small drift is renormalized") {
  TempFile f("ddsr_pm_drift.csv", "id,p0,p1\na,0.5000004,0.5\n");
  const auto r = read_prediction_matrix(f.path);
  CHECK(r.row(0)[0] + r.row(0)[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("rows off the simplex name their line") {
  TempFile f("ddsr_pm_bad.csv", "id,p0,p1\na,0.5,0.5\nb,0.4,0.5\n");
  try {
    read_prediction_matrix(f.path);
    FAIL("expected a parse error");
  } catch (const parse_error& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("malformed prediction files") {
  TempFile wrong_c("ddsr_pm_c.csv", "id,p0,p1\na,0.5,0.5\n");
  CHECK_THROWS_AS(read_prediction_matrix(wrong_c.path, 3), parse_error);
  TempFile dup("ddsr_pm_dup.csv", "id,p0,p1\na,0.5,0.5\na,0.5,0.5\n");
  CHECK_THROWS_AS(read_prediction_matrix(dup.path), parse_error);
  TempFile text("ddsr_pm_txt.csv", "id,p0,p1\na,half,0.5\n");
  CHECK_THROWS_AS(read_prediction_matrix(text.path), parse_error);
  CHECK_THROWS(read_prediction_matrix(fs::temp_directory_path() / "ddsr_does_not_exist.csv"));
}

TEST_CASE("dataset round trip") {
  TempFile f("ddsr_ds_rt.csv");
  Dataset d{ids(30), oracle::random_matrix(30, 5, 2), 3, std::vector<std::size_t>(30, 1)};
  (*d.labels)[4] = 2;
  write_dataset(f.path, d, true);
  const auto r = read_dataset(f.path);
  CHECK(r.ids == d.ids);
  CHECK(r.features == d.features);
  CHECK(r.labels == d.labels);
  CHECK(r.class_count == 3);
  write_dataset(f.path, d, false);
  CHECK_FALSE(read_dataset(f.path).labels.has_value());
}

TEST_CASE("dataset header is checked") {
  TempFile f("ddsr_ds_bad.csv", "ddsr-dataset,2,2,2\na,0,0,1\n");
  CHECK_THROWS_AS(read_dataset(f.path), parse_error);
  TempFile g("ddsr_ds_label.csv", "ddsr-dataset,1,2,1\na,0.5,7\n");
  CHECK_THROWS_AS(read_dataset(g.path), parse_error);
}

TEST_CASE("digest") {
  TempFile f("ddsr_digest.txt", "abc");
  CHECK(file_digest(f.path) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
