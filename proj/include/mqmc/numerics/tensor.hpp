#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mqmc::num {

class NumericsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_string(const Shape& shape);

// Dense row-major tensor of rank 1 or 2. A rank-1 tensor of length n acts as
// an n x 1 column wherever a matrix view is needed.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() : shape_{0} {}

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(shape_size(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
        validate_shape();
        if (data_.size() != shape_size(shape_)) {
            throw NumericsError("tensor: " + std::to_string(data_.size()) +
                                " values do not fill shape " + shape_string(shape_));
        }
    }

    static Tensor vector(std::initializer_list<T> values) {
        return Tensor(Shape{values.size()}, std::vector<T>(values));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T{0}) {
        return Tensor(Shape{rows, cols}, fill);
    }

    static Tensor identity(std::size_t n) {
        Tensor t = matrix(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = T{1};
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const { return shape_[0]; }
    std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 1; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols(), cols()); }
    std::span<const T> row(std::size_t r) const {
        return std::span<const T>(data_).subspan(r * cols(), cols());
    }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    bool operator==(const Tensor& other) const = default;

private:
    void validate_shape() const {
        if (shape_.empty() || shape_.size() > 2) {
            throw NumericsError("tensor: rank must be 1 or 2, got " + std::to_string(shape_.size()));
        }
        for (std::size_t extent : shape_) {
            if (extent == 0) throw NumericsError("tensor: zero extent in shape " + shape_string(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

// Elementwise helpers used outside autodiff graphs.

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) throw NumericsError("dot: length mismatch");
    T acc{0};
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T l2_norm(std::span<const T> a) {
    return std::sqrt(dot(a, a));
}

template <typename T>
T leaky_relu(T x, T slope) {
    return x >= T{0} ? x : slope * x;
}

// Throws on length mismatch or a zero-norm argument.
template <typename T>
T cosine_similarity(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) throw NumericsError("cosine_similarity: length mismatch");
    const T na = l2_norm(a);
    const T nb = l2_norm(b);
    if (na == T{0} || nb == T{0}) throw NumericsError("cosine_similarity: zero-norm input");
    T c = dot(a, b) / (na * nb);
    if (c > T{1}) c = T{1};
    if (c < T{-1}) c = T{-1};
    return c;
}

}  // namespace mqmc::num
