#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace planter {

/// Raised when an operation would produce (or was handed) NaN/Inf values.
struct NonFiniteError : std::runtime_error {
    explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

/// Rank-4 shape, (batch, channels, height, width). All extents >= 1 for a valid tensor.
struct Shape4 {
    int n = 0, c = 0, h = 0, w = 0;

    std::size_t count() const { return std::size_t(n) * c * std::size_t(h) * w; }
    bool valid() const { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }
    bool operator==(const Shape4&) const = default;
    std::string str() const;
};

/// Dense rank-4 tensor of 64-bit floats in row-major (n, c, h, w) order.
class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Shape4 shape, double fill = 0.0);
    Tensor4(Shape4 shape, std::vector<double> values);

    static Tensor4 scalar(double v) { return Tensor4({1, 1, 1, 1}, {v}); }

    const Shape4& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    std::size_t index(int b, int c, int y, int x) const {
        return ((std::size_t(b) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    double& operator()(int b, int c, int y, int x) { return data_[index(b, c, y, x)]; }
    double operator()(int b, int c, int y, int x) const { return data_[index(b, c, y, x)]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    void fill(double v);
    bool all_finite() const;
    /// Throws NonFiniteError mentioning `context` if any element is NaN/Inf.
    void require_finite(const char* context) const;

    /// Same shape, all elements zero.
    Tensor4 zeros_like() const { return Tensor4(shape_); }

    bool operator==(const Tensor4&) const = default;

private:
    Shape4 shape_{};
    std::vector<double> data_;
};

/// Scalar value of a (1,1,1,1) tensor.
double as_scalar(const Tensor4& t);

}  // namespace planter
