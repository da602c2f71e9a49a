// SPDX-License-Identifier: Apache-2.0
#pragma once

// Plain-text interchange formats. Floats are written with 17 significant
// digits so a write/read cycle reproduces every double exactly.
//
// Prediction matrix (CSV):
//   id,p0,p1,...,p{C-1}
//   <id>,<p0>,...,<p{C-1}>
//
// Dataset (CSV):
//   ddsr-dataset,<d>,<C>,<n>
//   <id>,<x0>,...,<x{d-1}>[,<label>]

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "ddsr/dataset.hpp"
#include "ddsr/prob_core.hpp"

namespace ddsr {

inline constexpr double kRowSumTolerance = 1e-6;

std::string format_double(double v);

void write_prediction_matrix(const std::filesystem::path& path, const PredictionMatrix& m);
// Rows whose sum is within kRowSumTolerance of 1 are renormalized; anything
// else is a parse_error naming the line. expected_classes = 0 accepts any C.
PredictionMatrix read_prediction_matrix(const std::filesystem::path& path, std::size_t expected_classes = 0);

void write_dataset(const std::filesystem::path& path, const Dataset& data, bool with_labels = true);
Dataset read_dataset(const std::filesystem::path& path);

// SHA-256 of a file's bytes, lowercase hex.
std::string file_digest(const std::filesystem::path& path);

}  // namespace ddsr
