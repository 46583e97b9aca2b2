#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "htnn/errors.hpp"

namespace htnn {

using Shape = std::vector<std::size_t>;

inline std::size_t num_elements(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(std::span<const std::size_t> shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ')';
    return os.str();
}

/// Row-major strides (last mode fastest).
inline std::vector<std::size_t> row_major_strides(std::span<const std::size_t> shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t k = shape.size(); k-- > 1;) {
        strides[k - 1] = strides[k] * shape[k];
    }
    return strides;
}

/**
 * Dense real tensor with an explicit shape.
 *
 * Storage is a flat row-major buffer: the flat position of the (0-based)
 * multi-index (i_0, ..., i_{d-1}) is sum_k i_k * prod_{l>k} n_l. An order-0
 * tensor is a scalar holding one value.
 */
class Tensor {
public:
    Tensor() : data_(1, 0.0) {}

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        check_modes();
        data_.assign(num_elements(shape_), fill);
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_modes();
        if (data_.size() != num_elements(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

    static Tensor vector(std::vector<double> values) {
        const std::size_t n = values.size();
        return Tensor(Shape{n}, std::move(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t order() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t mode) const { return shape_.at(mode); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    std::size_t offset(std::span<const std::size_t> index) const {
        if (index.size() != shape_.size()) {
            throw ShapeError("index of order " + std::to_string(index.size()) +
                             " used on tensor of shape " + shape_string(shape_));
        }
        std::size_t flat = 0;
        for (std::size_t k = 0; k < index.size(); ++k) {
            if (index[k] >= shape_[k]) {
                throw ShapeError("index out of range on mode " + std::to_string(k));
            }
            flat = flat * shape_[k] + index[k];
        }
        return flat;
    }

    double& at(std::initializer_list<std::size_t> index) {
        return data_[offset(std::span(index.begin(), index.size()))];
    }
    double at(std::initializer_list<std::size_t> index) const {
        return data_[offset(std::span(index.begin(), index.size()))];
    }
    double& at(std::span<const std::size_t> index) { return data_[offset(index)]; }
    double at(std::span<const std::size_t> index) const { return data_[offset(index)]; }

    /// Same data under a new shape with equal element count.
    Tensor reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }
    Tensor reshaped(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

    Tensor& operator+=(const Tensor& other) {
        require_same_shape(other);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += other.data_[i];
        }
        return *this;
    }

    Tensor& operator-=(const Tensor& other) {
        require_same_shape(other);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] -= other.data_[i];
        }
        return *this;
    }

    Tensor& operator*=(double alpha) {
        for (double& v : data_) {
            v *= alpha;
        }
        return *this;
    }

    void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    void check_modes() const {
        for (std::size_t k = 0; k < shape_.size(); ++k) {
            if (shape_[k] == 0) {
                throw ShapeError("mode " + std::to_string(k) + " has length 0");
            }
        }
    }

    void require_same_shape(const Tensor& other) const {
        if (other.shape_ != shape_) {
            throw ShapeError("shape mismatch " + shape_string(shape_) + " vs " +
                             shape_string(other.shape_));
        }
    }

    Shape shape_;
    std::vector<double> data_;
};

inline Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
inline Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
inline Tensor operator*(double alpha, Tensor a) { return a *= alpha; }

/// Reshape an order-1 tensor into `shape` (row-major).
inline Tensor tensorize(const Tensor& v, Shape shape) {
    if (v.order() != 1) {
        throw ShapeError("tensorize expects an order-1 tensor, got shape " + shape_string(v.shape()));
    }
    if (num_elements(shape) != v.size()) {
        throw ShapeError("cannot tensorize length " + std::to_string(v.size()) + " into shape " +
                         shape_string(shape));
    }
    return v.reshaped(std::move(shape));
}

inline Tensor flatten(const Tensor& t) { return t.reshaped(Shape{t.size()}); }
inline Tensor flatten(Tensor&& t) {
    const std::size_t n = t.size();
    return std::move(t).reshaped(Shape{n});
}

namespace detail {

inline bool is_identity(std::span<const std::size_t> perm) {
    for (std::size_t k = 0; k < perm.size(); ++k) {
        if (perm[k] != k) {
            return false;
        }
    }
    return true;
}

inline void check_permutation(std::span<const std::size_t> perm, std::size_t order) {
    if (perm.size() != order) {
        throw ArgumentError("permutation of length " + std::to_string(perm.size()) +
                            " for tensor of order " + std::to_string(order));
    }
    std::vector<bool> seen(order, false);
    for (std::size_t p : perm) {
        if (p >= order || seen[p]) {
            throw ArgumentError("invalid permutation entry " + std::to_string(p));
        }
        seen[p] = true;
    }
}

// Strided copy: out mode k walks input mode perm[k].
inline void permute_into(const Tensor& t, std::span<const std::size_t> perm, std::span<double> out) {
    const std::size_t d = perm.size();
    const auto in_strides = row_major_strides(t.shape());
    std::vector<std::size_t> out_shape(d), step(d);
    for (std::size_t k = 0; k < d; ++k) {
        out_shape[k] = t.dim(perm[k]);
        step[k] = in_strides[perm[k]];
    }
    const auto src = t.data();
    if (d == 0) {
        out[0] = src[0];
        return;
    }
    // Innermost output mode handled as a tight loop.
    const std::size_t inner = out_shape[d - 1];
    const std::size_t inner_step = step[d - 1];
    std::vector<std::size_t> idx(d, 0);
    std::size_t in_off = 0;
    std::size_t out_off = 0;
    const std::size_t total = out.size();
    while (out_off < total) {
        for (std::size_t i = 0; i < inner; ++i) {
            out[out_off + i] = src[in_off + i * inner_step];
        }
        out_off += inner;
        std::size_t k = d - 1;
        while (k-- > 0) {
            ++idx[k];
            in_off += step[k];
            if (idx[k] < out_shape[k]) {
                break;
            }
            in_off -= step[k] * out_shape[k];
            idx[k] = 0;
        }
    }
}

} // namespace detail

/// Output mode k takes the length and entries of input mode perm[k].
inline Tensor permute(const Tensor& t, std::span<const std::size_t> perm) {
    detail::check_permutation(perm, t.order());
    if (detail::is_identity(perm)) {
        return t;
    }
    Shape out_shape(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k) {
        out_shape[k] = t.dim(perm[k]);
    }
    Tensor out(std::move(out_shape));
    detail::permute_into(t, perm, out.data());
    return out;
}

inline Tensor permute(const Tensor& t, std::initializer_list<std::size_t> perm) {
    return permute(t, std::span(perm.begin(), perm.size()));
}

inline std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k) {
        inv[perm[k]] = k;
    }
    return inv;
}

namespace detail {

inline std::vector<std::size_t> free_modes(std::size_t order, std::span<const std::size_t> contracted) {
    std::vector<bool> used(order, false);
    for (std::size_t m : contracted) {
        used[m] = true;
    }
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < order; ++k) {
        if (!used[k]) {
            out.push_back(k);
        }
    }
    return out;
}

inline void check_mode_list(std::span<const std::size_t> modes, std::size_t order, const char* name) {
    std::vector<bool> seen(order, false);
    for (std::size_t m : modes) {
        if (m >= order) {
            throw ArgumentError(std::string("contraction mode ") + std::to_string(m) + " out of range for " +
                                name + " of order " + std::to_string(order));
        }
        if (seen[m]) {
            throw ArgumentError(std::string("duplicate contraction mode ") + std::to_string(m) + " in " + name);
        }
        seen[m] = true;
    }
}

// Matricize `t` as rows = `row_modes`, cols = `col_modes`, copying only when needed.
inline std::vector<double> matricize(const Tensor& t, std::span<const std::size_t> row_modes,
                                     std::span<const std::size_t> col_modes) {
    std::vector<std::size_t> perm(row_modes.begin(), row_modes.end());
    perm.insert(perm.end(), col_modes.begin(), col_modes.end());
    if (is_identity(perm)) {
        return t.storage();
    }
    std::vector<double> out(t.size());
    permute_into(t, perm, out);
    return out;
}

} // namespace detail

/**
 * Generalized tensor contraction.
 *
 * Sums over the paired modes modes_a[k] <-> modes_b[k] (0-based). The result
 * holds the uncontracted modes of `a` in their original order followed by the
 * uncontracted modes of `b`. Each output entry is a plain sequential sum over
 * the contracted index block, so results do not depend on threading.
 */
inline Tensor contract(const Tensor& a, const Tensor& b, std::span<const std::size_t> modes_a,
                       std::span<const std::size_t> modes_b) {
    if (modes_a.size() != modes_b.size()) {
        throw ArgumentError("contraction mode lists differ in length");
    }
    detail::check_mode_list(modes_a, a.order(), "lhs");
    detail::check_mode_list(modes_b, b.order(), "rhs");
    std::size_t inner = 1;
    for (std::size_t k = 0; k < modes_a.size(); ++k) {
        if (a.dim(modes_a[k]) != b.dim(modes_b[k])) {
            throw ContractionError("contracted modes (" + std::to_string(modes_a[k]) + ", " +
                                   std::to_string(modes_b[k]) + ") have lengths " +
                                   std::to_string(a.dim(modes_a[k])) + " and " +
                                   std::to_string(b.dim(modes_b[k])));
        }
        inner *= a.dim(modes_a[k]);
    }
    const auto free_a = detail::free_modes(a.order(), modes_a);
    const auto free_b = detail::free_modes(b.order(), modes_b);

    Shape out_shape;
    std::size_t rows = 1;
    std::size_t cols = 1;
    for (std::size_t m : free_a) {
        out_shape.push_back(a.dim(m));
        rows *= a.dim(m);
    }
    for (std::size_t m : free_b) {
        out_shape.push_back(b.dim(m));
        cols *= b.dim(m);
    }

    const std::vector<double> lhs = detail::matricize(a, free_a, modes_a);
    const std::vector<double> rhs = detail::matricize(b, modes_b, free_b);
    Tensor out(std::move(out_shape));
    auto c = out.data();
    for (std::size_t i = 0; i < rows; ++i) {
        double* crow = c.data() + i * cols;
        const double* arow = lhs.data() + i * inner;
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = arow[k];
            const double* brow = rhs.data() + k * cols;
            for (std::size_t j = 0; j < cols; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

inline Tensor contract(const Tensor& a, const Tensor& b, std::initializer_list<std::size_t> modes_a,
                       std::initializer_list<std::size_t> modes_b) {
    return contract(a, b, std::span(modes_a.begin(), modes_a.size()), std::span(modes_b.begin(), modes_b.size()));
}

/// Multiply-add count of contract(a, b, modes_a, modes_b) given only shapes.
inline std::size_t contraction_madds(std::span<const std::size_t> shape_a, std::span<const std::size_t> shape_b,
                                     std::span<const std::size_t> modes_b) {
    std::size_t contracted = 1;
    for (std::size_t m : modes_b) {
        contracted *= shape_b[m];
    }
    return num_elements(shape_a) * (num_elements(shape_b) / contracted);
}

/// Row-major matrix-vector product for an (rows x cols) tensor.
inline Tensor matvec(const Tensor& m, std::span<const double> x) {
    if (m.order() != 2 || m.dim(1) != x.size()) {
        throw ShapeError("matvec: matrix " + shape_string(m.shape()) + " with vector of length " +
                         std::to_string(x.size()));
    }
    const std::size_t rows = m.dim(0);
    const std::size_t cols = m.dim(1);
    Tensor y(Shape{rows});
    const auto a = m.data();
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            acc += a[i * cols + j] * x[j];
        }
        y[i] = acc;
    }
    return y;
}

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, x < 0 ? -x : x);
    }
    return m;
}

/// max|a-b| / max(max|b|, tiny); the comparison used by the oracle suites.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("relative_error: length mismatch");
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = a[i] - b[i];
        diff = std::max(diff, e < 0 ? -e : e);
    }
    const double scale = std::max(max_abs(b), 1e-300);
    return diff / scale;
}

} // namespace htnn
