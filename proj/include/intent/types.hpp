#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace intent {

/// Dense row-major storage: one observation per row.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = RowMatrix<double>;
using Vector = ColVector<double>;
using Index = Eigen::Index;

/// Malformed or inconsistent input data (files, corpora, partitions).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration value outside its documented range.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An internal structural invariant failed to hold.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Numerical failure (overflow, NaN) during a computation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-module seed offsets. Every random stream is derived as `seed + offset`.
namespace seed_offset {
inline constexpr std::uint64_t synth = 0;
inline constexpr std::uint64_t split = 1;
inline constexpr std::uint64_t sample = 2;
inline constexpr std::uint64_t attention = 3;
inline constexpr std::uint64_t dec = 4;
inline constexpr std::uint64_t kmeans = 5;
inline constexpr std::uint64_t hierarchy = 6;
inline constexpr std::uint64_t ann = 7;
}  // namespace seed_offset

}  // namespace intent
