#include "planter/tensor.hpp"

#include <utility>

namespace planter {

std::string Shape4::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

Tensor4::Tensor4(Shape4 shape, double fill) : shape_(shape) {
    if (!shape.valid()) throw std::invalid_argument("Tensor4: invalid shape " + shape.str());
    data_.assign(shape.count(), fill);
}

Tensor4::Tensor4(Shape4 shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
    if (!shape.valid()) throw std::invalid_argument("Tensor4: invalid shape " + shape.str());
    if (data_.size() != shape.count())
        throw std::invalid_argument("Tensor4: " + std::to_string(data_.size()) +
                                    " values for shape " + shape.str());
}

void Tensor4::fill(double v) {
    for (auto& x : data_) x = v;
}

bool Tensor4::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

void Tensor4::require_finite(const char* context) const {
    if (!all_finite()) throw NonFiniteError(std::string(context) + ": non-finite value in tensor");
}

double as_scalar(const Tensor4& t) {
    if (t.size() != 1) throw std::invalid_argument("as_scalar: tensor has " + std::to_string(t.size()) + " elements");
    return t[0];
}

}  // namespace planter
