#include "rmm/tensor.hpp"

#include <cmath>

namespace rmm {

namespace {

std::size_t checked_numel(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw ConfigError("tensor shape must have at least one dimension");
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw ConfigError("tensor dimensions must be positive, got shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
    std::size_t n = checked_numel(shape);
    if (n != values.size()) {
        throw ConfigError("tensor value count " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = checked_numel(shape);
    Tensor t;
    t.shape = std::move(shape);
    t.values.assign(n, 0.0);
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t = zeros(std::move(shape));
    for (double& x : t.values) x = v;
    return t;
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ContractError("rows() on rank-" + std::to_string(rank()) + " tensor");
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ContractError("cols() on rank-" + std::to_string(rank()) + " tensor");
    return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    return values[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return values[r * cols() + c];
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.values == b.values;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ConfigError("max_abs_diff shape mismatch: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        m = std::fmax(m, std::fabs(a.values[i] - b.values[i]));
    }
    return m;
}

}  // namespace rmm
