// SPDX-License-Identifier: Apache-2.0
#include "ddsr/matrix.hpp"

#include <algorithm>

#include "ddsr/errors.hpp"

namespace ddsr {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw invalid_input("matrix data size does not match shape");
}

Matrix Matrix::gather(std::span<const std::size_t> rows) const {
  Matrix out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace ddsr
