#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace actflow {

/// Dense row-major 2-D array of doubles. The single numeric currency of all
/// layers: a "vector" is a Tensor with one row, a sequence of T D-vectors is
/// a T x D Tensor. Immutable after construction by convention (layers never
/// mutate their inputs), so sharing across threads is safe.
class Tensor {
public:
    Tensor() : rows_(0), cols_(0) {}

    Tensor(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values)) {
        if (values_.size() != rows_ * cols_)
            throw std::invalid_argument("Tensor: values length != rows*cols");
    }

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }

    static Tensor row_vector(std::initializer_list<double> v) {
        return Tensor(1, v.size(), std::vector<double>(v));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    double* row_data(std::size_t r) { return values_.data() + r * cols_; }
    const double* row_data(std::size_t r) const { return values_.data() + r * cols_; }

    /// Copy of row r as a 1 x cols tensor.
    Tensor row(std::size_t r) const {
        Tensor out(1, cols_);
        for (std::size_t c = 0; c < cols_; ++c) out[c] = (*this)(r, c);
        return out;
    }

    void fill(double v) { for (auto& x : values_) x = v; }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

private:
    std::size_t rows_, cols_;
    std::vector<double> values_;
};

inline void require_shape(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
    if (t.rows() != rows || t.cols() != cols)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) +
                                    "x" + std::to_string(cols) + ", got " + t.shape_str());
}

/// Deterministic 64-bit RNG (splitmix64). The stream depends only on the
/// seed and call order, independent of platform or standard library, which
/// keeps corpora, initializations and shuffles reproducible everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform index in [0, n). n must be positive.
    std::size_t index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    /// Fisher-Yates shuffle, deterministic given seed and call order.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace actflow
