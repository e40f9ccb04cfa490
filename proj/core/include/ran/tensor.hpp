#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ran/errors.hpp"

namespace ran {

/// Extents of a dense row-major tensor, rank 0..4.
struct Shape {
    std::array<int, 4> extent{1, 1, 1, 1};
    int rank = 0;

    Shape() = default;
    Shape(int a) : extent{a, 1, 1, 1}, rank(1) {}
    Shape(int a, int b) : extent{a, b, 1, 1}, rank(2) {}
    Shape(int a, int b, int c) : extent{a, b, c, 1}, rank(3) {}
    Shape(int a, int b, int c, int d) : extent{a, b, c, d}, rank(4) {}

    int operator[](int i) const { return extent[static_cast<size_t>(i)]; }

    int64_t numel() const {
        int64_t n = 1;
        for (int i = 0; i < rank; ++i) n *= extent[static_cast<size_t>(i)];
        return rank == 0 ? 0 : n;
    }

    bool operator==(const Shape& o) const {
        if (rank != o.rank) return false;
        for (int i = 0; i < rank; ++i)
            if (extent[static_cast<size_t>(i)] != o.extent[static_cast<size_t>(i)]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        if (rank == 0) return "()";
        std::string s;
        for (int i = 0; i < rank; ++i) {
            if (i) s += "x";
            s += std::to_string(extent[static_cast<size_t>(i)]);
        }
        return s;
    }
};

/// Dense row-major tensor of `T` (float for training, double for gradient
/// checking). `grad` is an optional same-length buffer, used for parameters.
template <typename T>
struct TensorT {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;

    TensorT() = default;
    explicit TensorT(const Shape& s, T fill = T(0))
        : shape(s), data(static_cast<size_t>(s.numel()), fill) {}

    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& at(int i) {
        assert(shape.rank == 1);
        return data[static_cast<size_t>(i)];
    }
    T at(int i) const {
        assert(shape.rank == 1);
        return data[static_cast<size_t>(i)];
    }
    T& at(int i, int j) {
        assert(shape.rank == 2);
        return data[static_cast<size_t>(i) * shape.extent[1] + static_cast<size_t>(j)];
    }
    T at(int i, int j) const {
        assert(shape.rank == 2);
        return data[static_cast<size_t>(i) * shape.extent[1] + static_cast<size_t>(j)];
    }
    T& at(int i, int j, int k) {
        assert(shape.rank == 3);
        return data[(static_cast<size_t>(i) * shape.extent[1] + static_cast<size_t>(j)) * shape.extent[2] +
                    static_cast<size_t>(k)];
    }
    T at(int i, int j, int k) const {
        assert(shape.rank == 3);
        return data[(static_cast<size_t>(i) * shape.extent[1] + static_cast<size_t>(j)) * shape.extent[2] +
                    static_cast<size_t>(k)];
    }
    T& at(int i, int j, int k, int l) {
        assert(shape.rank == 4);
        return data[((static_cast<size_t>(i) * shape.extent[1] + static_cast<size_t>(j)) * shape.extent[2] +
                     static_cast<size_t>(k)) *
                        shape.extent[3] +
                    static_cast<size_t>(l)];
    }
    T at(int i, int j, int k, int l) const {
        assert(shape.rank == 4);
        return data[((static_cast<size_t>(i) * shape.extent[1] + static_cast<size_t>(j)) * shape.extent[2] +
                     static_cast<size_t>(k)) *
                        shape.extent[3] +
                    static_cast<size_t>(l)];
    }

    bool has_grad() const { return !grad.empty(); }
    void alloc_grad() { grad.assign(data.size(), T(0)); }
    void zero_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
        else std::fill(grad.begin(), grad.end(), T(0));
    }
    void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
    for (T v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

/// Debug-build guard: forward/backward ops call this on their outputs.
template <typename T>
inline void debug_check_finite(const TensorT<T>& t, const char* where) {
#ifndef NDEBUG
    if (!all_finite(t)) throw Error(std::string("non-finite value produced by ") + where);
#else
    (void)t;
    (void)where;
#endif
}

template <typename To, typename From>
TensorT<To> cast_tensor(const TensorT<From>& src) {
    TensorT<To> out(src.shape);
    for (size_t i = 0; i < src.data.size(); ++i) out.data[i] = static_cast<To>(src.data[i]);
    if (src.has_grad()) {
        out.grad.resize(src.grad.size());
        for (size_t i = 0; i < src.grad.size(); ++i) out.grad[i] = static_cast<To>(src.grad[i]);
    }
    return out;
}

} // namespace ran
