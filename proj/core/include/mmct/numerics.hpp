#pragma once

#include <cstdint>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mmct/errors.hpp"

namespace mmct {

using Vector = std::vector<double>;

/// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values; // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Counter-based deterministic random generator (splitmix64).
///
/// The state advances by the constant 0x9E3779B97F4A7C15 on every draw and
/// the output is a finalizer of the state, so the stream is a pure function
/// of (seed, number of draws). Identical seeds and call sequences produce
/// identical streams on every platform.
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform double in [0, 1), 53 bits of precision.
    double uniform();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller; consumes exactly two u64 draws.
    double normal();

    /// Uniform integer in [0, n). Uses modulo reduction; the bias is
    /// negligible for the n used here (n << 2^64).
    std::uint64_t below(std::uint64_t n);

    Vector normal_vector(std::size_t dim, double stddev = 1.0);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t state() const { return state_; }

    static SeededRng from_state(std::uint64_t seed, std::uint64_t state) {
        SeededRng rng(seed);
        rng.state_ = state;
        return rng;
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

/// Scales v to Euclidean norm 1. Throws ZeroNorm if ||v|| <= 1e-12.
Vector l2_normalize(const Vector& v);

double l2_norm(const Vector& v);

double dot(const Vector& a, const Vector& b);

/// a += s * b
void add_scaled(Vector& a, const Vector& b, double s);

Vector matvec(const Matrix& m, const Vector& x);

/// m^T * x (x has length m.rows, result has length m.cols).
Vector matvec_transpose(const Matrix& m, const Vector& x);

Matrix matmul(const Matrix& a, const Matrix& b);

/// m += u * v^T
void outer_accumulate(Matrix& m, const Vector& u, const Vector& v);

/// Central-difference gradient of f at x: (f(x + h e_i) - f(x - h e_i)) / 2h.
/// Throws NonFiniteFunction if any evaluation of f is NaN or infinite.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& x, double h = 1e-5);

} // namespace mmct
