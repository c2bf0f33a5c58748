#include "ptp/tensor.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "ptp/errors.hpp"

namespace ptp {

NumArray::NumArray(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

NumArray::NumArray(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("NumArray: data length " + std::to_string(data_.size()) +
                         " does not match shape " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

NumArray NumArray::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return NumArray(1, n, std::move(values));
}

NumArray NumArray::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return NumArray(n, 1, std::move(values));
}

NumArray NumArray::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("NumArray::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return NumArray(r, c, std::move(data));
}

double NumArray::item() const {
  if (data_.size() != 1) {
    throw DimensionError("NumArray::item on " + std::to_string(rows_) + "x" +
                         std::to_string(cols_) + " array");
  }
  return data_[0];
}

bool NumArray::all_finite() const {
  return Eigen::Map<const Eigen::ArrayXd>(data_.data(), static_cast<Eigen::Index>(data_.size())).allFinite();
}

void NumArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace ptp
