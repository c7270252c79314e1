#include "mmct/numerics.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mmct {

std::uint64_t SeededRng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SeededRng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double SeededRng::normal() {
    // u1 in (0, 1] so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
    return next_u64() % n;
}

Vector SeededRng::normal_vector(std::size_t dim, double stddev) {
    Vector v(dim);
    for (auto& x : v) x = stddev * normal();
    return v;
}

double l2_norm(const Vector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

Vector l2_normalize(const Vector& v) {
    const double n = l2_norm(v);
    if (n <= 1e-12) {
        throw ZeroNorm("l2_normalize: vector norm " + std::to_string(n) + " <= 1e-12");
    }
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("dot: sizes " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void add_scaled(Vector& a, const Vector& b, double s) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("add_scaled: sizes " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
    }
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

Vector matvec(const Matrix& m, const Vector& x) {
    if (m.cols != x.size()) {
        throw DimensionMismatch("matvec: matrix cols " + std::to_string(m.cols) +
                                " vs vector " + std::to_string(x.size()));
    }
    Vector y(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.values.data() + r * m.cols;
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
    return y;
}

Vector matvec_transpose(const Matrix& m, const Vector& x) {
    if (m.rows != x.size()) {
        throw DimensionMismatch("matvec_transpose: matrix rows " + std::to_string(m.rows) +
                                " vs vector " + std::to_string(x.size()));
    }
    Vector y(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.values.data() + r * m.cols;
        const double xr = x[r];
        for (std::size_t c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
    }
    return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw DimensionMismatch("matmul: inner dims " + std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows));
    }
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            for (std::size_t j = 0; j < b.cols; ++j) {
                out.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return out;
}

void outer_accumulate(Matrix& m, const Vector& u, const Vector& v) {
    if (m.rows != u.size() || m.cols != v.size()) {
        throw DimensionMismatch("outer_accumulate: matrix " + std::to_string(m.rows) + "x" +
                                std::to_string(m.cols) + " vs vectors " +
                                std::to_string(u.size()) + ", " + std::to_string(v.size()));
    }
    for (std::size_t r = 0; r < u.size(); ++r) {
        for (std::size_t c = 0; c < v.size(); ++c) {
            m.values[r * m.cols + c] += u[r] * v[c];
        }
    }
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& x, double h) {
    Vector grad(x.size(), 0.0);
    Vector probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double fp = f(probe);
        probe[i] = saved - h;
        const double fm = f(probe);
        probe[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NonFiniteFunction("finite_diff_grad: non-finite value at coordinate " +
                                    std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

} // namespace mmct
