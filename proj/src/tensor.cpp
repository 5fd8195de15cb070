#include "cmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "cmt/errors.hpp"

namespace cmt {

std::string shape_str(const Shape& shape) {
    return fmt::format("[{}]", fmt::join(shape, "x"));
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_extents(const Shape& shape) {
    if (shape.empty())
        throw ArgumentError("tensor shape must have at least one axis");
    for (auto e : shape)
        if (e == 0) throw ArgumentError(fmt::format("tensor extent must be positive, got {}", shape_str(shape)));
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents(shape_);
    if (data_.size() != shape_numel(shape_))
        throw DimensionError(fmt::format("data length {} does not match shape {}", data_.size(), shape_str(shape_)));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(m * n);
    for (const auto& r : rows) {
        if (r.size() != n) throw DimensionError("ragged matrix literal");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({m, n}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size())
        throw ArgumentError(fmt::format("axis {} out of range for shape {}", axis, shape_str(shape_)));
    return shape_[axis];
}

double Tensor::item() const {
    if (data_.size() != 1)
        throw ContractError(fmt::format("item() on tensor of shape {}", shape_str(shape_)));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw DimensionError(fmt::format("cannot reshape {} to {}", shape_str(shape_), shape_str(shape)));
    return Tensor(std::move(shape), data_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op, shape_str(a.shape()), shape_str(b.shape())));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace cmt
