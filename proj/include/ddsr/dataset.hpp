// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ddsr/matrix.hpp"

namespace ddsr {

// Unlabeled target samples, optionally carrying hidden ground truth that is
// only ever read by evaluation.
struct Dataset {
  std::vector<std::string> ids;
  Matrix features;  // n x d
  std::size_t class_count = 0;
  std::optional<std::vector<std::size_t>> labels;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
};

// Throws invalid_input on shape or id problems.
void validate_dataset(const Dataset& data);

}  // namespace ddsr
