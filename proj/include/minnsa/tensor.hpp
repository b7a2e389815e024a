#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "minnsa/common.hpp"

namespace minnsa {

/// Dense row-major matrix of doubles. Just storage plus indexing; all the
/// numerical work in this project is explicit loops.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {v.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {v.data() + i * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

/// Dense (b x m x p) tensor, row-major in the last index.
struct Tensor3 {
    std::size_t b = 0;
    std::size_t m = 0;
    std::size_t p = 0;
    Vec v;

    Tensor3() = default;
    Tensor3(std::size_t b_, std::size_t m_, std::size_t p_, double fill = 0.0)
        : b(b_), m(m_), p(p_), v(b_ * m_ * p_, fill) {}

    double& at(std::size_t i, std::size_t j, std::size_t k) { return v[(i * m + j) * p + k]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return v[(i * m + j) * p + k]; }

    std::span<double> row(std::size_t i, std::size_t j) { return {v.data() + (i * m + j) * p, p}; }
    std::span<const double> row(std::size_t i, std::size_t j) const {
        return {v.data() + (i * m + j) * p, p};
    }

    bool operator==(const Tensor3&) const = default;
};

/// Boolean matrix backed by bytes (1 = true), used for instance masks.
struct BoolMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> v;

    BoolMatrix() = default;
    BoolMatrix(std::size_t r, std::size_t c, bool fill = false)
        : rows(r), cols(c), v(r * c, fill ? 1 : 0) {}

    std::uint8_t& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    bool at(std::size_t i, std::size_t j) const { return v[i * cols + j] != 0; }

    std::span<const std::uint8_t> row(std::size_t i) const { return {v.data() + i * cols, cols}; }

    bool operator==(const BoolMatrix&) const = default;
};

}  // namespace minnsa
