#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ptp {

// Dense row-major 2-D array of doubles. Vectors are 1xN rows, scalars 1x1.
class NumArray {
 public:
  NumArray() = default;
  NumArray(std::size_t rows, std::size_t cols, double fill = 0.0);
  NumArray(std::size_t rows, std::size_t cols, std::vector<double> data);

  static NumArray scalar(double v) { return NumArray(1, 1, v); }
  static NumArray row(std::vector<double> values);
  static NumArray column(std::vector<double> values);
  static NumArray from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  bool same_shape(const NumArray& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  // Only valid for 1x1 arrays.
  double item() const;
  bool all_finite() const;
  void fill(double v);

  friend bool operator==(const NumArray&, const NumArray&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace ptp
