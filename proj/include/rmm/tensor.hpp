#pragma once
// Dense row-major double tensor. Rank 1 and 2 cover everything this library
// needs; shape dimensions are strictly positive (an absent sequence is
// represented by the caller, never by a zero-sized tensor).

#include <cstddef>
#include <string>
#include <vector>

#include "rmm/common.hpp"

namespace rmm {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<double> values_);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double v);

    std::size_t rank() const { return shape.size(); }
    std::size_t numel() const { return values.size(); }

    // Rank-2 accessors. rows()/cols() throw unless rank is exactly 2.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// "[3,4]" style rendering for error messages.
std::string shape_str(const std::vector<std::size_t>& shape);

// Exact elementwise equality (used by determinism tests).
bool bit_equal(const Tensor& a, const Tensor& b);

// Largest |a-b| over all elements; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace rmm
