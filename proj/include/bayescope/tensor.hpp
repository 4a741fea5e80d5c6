#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bayescope/errors.hpp"

namespace bayescope {

using Shape = std::vector<std::size_t>;

/// Dense n-dimensional array of 64-bit floats, row-major.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape);  // zero-filled
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D element access, row-major.
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    std::size_t extent(std::size_t axis) const { return shape_[axis]; }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void fill(double v);
    bool all_finite() const;
    double item() const;  // single-element tensors only

    std::string shape_str() const;

  private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

}  // namespace bayescope
