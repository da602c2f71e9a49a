// SPDX-License-Identifier: Apache-2.0
#include "ddsr/dataset.hpp"

#include <cmath>
#include <unordered_set>

#include "ddsr/errors.hpp"

namespace ddsr {

void validate_dataset(const Dataset& data) {
  if (data.ids.size() != data.features.rows()) throw invalid_input("dataset: id count does not match rows");
  if (data.features.cols() < 1) throw invalid_input("dataset: feature dimension must be >= 1");
  if (data.class_count < 2) throw invalid_input("dataset: needs at least 2 classes");
  std::unordered_set<std::string> seen;
  for (const auto& id : data.ids)
    if (!seen.insert(id).second) throw invalid_input("dataset: duplicate id " + id);
  for (double v : data.features.data())
    if (!std::isfinite(v)) throw invalid_input("dataset: non-finite feature value");
  if (data.labels) {
    if (data.labels->size() != data.size()) throw invalid_input("dataset: label count does not match rows");
    for (auto y : *data.labels)
      if (y >= data.class_count) throw invalid_input("dataset: label out of range");
  }
}

}  // namespace ddsr
