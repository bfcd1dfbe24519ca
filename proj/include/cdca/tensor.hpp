// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor of 64-bit reals, error types and the
// counter-based random generator shared by every module.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdca {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes do not conform.
class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a scalar argument or index is outside its valid range.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string shape_str(const Shape& shape);

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    // Rank-2 accessors. rows() of a rank-1 tensor is 1.
    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<const double> row(std::size_t r) const;
    std::span<double> row(std::size_t r);

    const std::vector<double>& values() const noexcept { return data_; }

    /// Rows selected by index, in the order given.
    Tensor gather_rows(std::span<const std::size_t> indices) const;

    bool all_finite() const noexcept;

    /// Shape and value equality (IEEE ==).
    friend bool operator==(const Tensor& a, const Tensor& b);

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Bitwise equality of shape and every stored double.
bool bit_equal(const Tensor& a, const Tensor& b) noexcept;

/// Rows of `a` followed by rows of `b`; column counts must match.
Tensor concat_rows(const Tensor& a, const Tensor& b);

/// Counter-based generator: draw k of stream `seed` is a pure function of
/// (seed, k), so a saved (seed, counter) pair reproduces the rest of the
/// sequence on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
        : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller; consumes two draws, caches nothing.
    double normal() noexcept;
    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n) noexcept;

    /// Independent generator derived from this one's seed and a stream label.
    Rng fork(std::uint64_t stream) const noexcept;

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

} // namespace cdca
