#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cmt {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major float64 array. Images are stored H x W x C (band last),
/// token matrices as T x C, convolution kernels as kh x kw x Cin x Cout.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* ptr() noexcept { return data_.data(); }
    const double* ptr() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    /// Single element of a one-element tensor.
    double item() const;

    Tensor reshaped(Shape shape) const;
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double s);

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Throws DimensionError naming both shapes unless they agree.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace cmt
