#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "ran/rng.hpp"
#include "ran/tensor.hpp"

namespace ran {

/// A named model parameter plus its Adam state. `value.grad` is the gradient
/// buffer consumed by adam_step.
template <typename T>
struct Param {
    TensorT<T> value;
    TensorT<T> m;
    TensorT<T> v;
    int64_t step = 0;
};

/// Named parameters, iterated in sorted-name order everywhere so that
/// optimizer updates and serialization are deterministic.
template <typename T>
struct ParamStoreT {
    std::map<std::string, Param<T>> entries;
    uint64_t rng_seed = 0;

    bool has(const std::string& name) const { return entries.count(name) != 0; }

    TensorT<T>& create(const std::string& name, const Shape& shape) {
        if (has(name)) throw Error("param store: duplicate parameter '" + name + "'");
        Param<T>& p = entries[name];
        p.value = TensorT<T>(shape);
        p.m = TensorT<T>(shape);
        p.v = TensorT<T>(shape);
        return p.value;
    }

    /// Fan-scaled uniform init in [-sqrt(6/(fan_in+fan_out)), +...].
    TensorT<T>& create_uniform(const std::string& name, const Shape& shape, int fan_in, int fan_out,
                               Rng& rng) {
        TensorT<T>& t = create(name, shape);
        const double limit = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
        for (auto& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
        return t;
    }

    Param<T>& param(const std::string& name) {
        auto it = entries.find(name);
        if (it == entries.end()) throw Error("param store: unknown parameter '" + name + "'");
        return it->second;
    }
    const Param<T>& param(const std::string& name) const {
        auto it = entries.find(name);
        if (it == entries.end()) throw Error("param store: unknown parameter '" + name + "'");
        return it->second;
    }

    TensorT<T>& value(const std::string& name) { return param(name).value; }
    const TensorT<T>& value(const std::string& name) const { return param(name).value; }

    void alloc_grads() {
        for (auto& [name, p] : entries) p.value.zero_grad();
    }
    void zero_grads() { alloc_grads(); }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& [name, p] : entries) n += p.value.numel();
        return n;
    }
};

using ParamStore = ParamStoreT<float>;
using ParamStore64 = ParamStoreT<double>;

template <typename To, typename From>
ParamStoreT<To> cast_store(const ParamStoreT<From>& src) {
    ParamStoreT<To> out;
    out.rng_seed = src.rng_seed;
    for (const auto& [name, p] : src.entries) {
        Param<To> q;
        q.value = cast_tensor<To>(p.value);
        q.m = cast_tensor<To>(p.m);
        q.v = cast_tensor<To>(p.v);
        q.step = p.step;
        out.entries[name] = std::move(q);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update over every entry, in sorted-name order.
/// Every entry must carry a populated gradient.
template <typename T>
void adam_step(ParamStoreT<T>& store, const AdamConfig& cfg) {
    for (auto& [name, p] : store.entries) {
        if (p.value.grad.size() != p.value.data.size())
            throw Error("adam_step: missing gradient for parameter '" + name + "'");
        p.step += 1;
        const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
        const double corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
        for (size_t i = 0; i < p.value.data.size(); ++i) {
            const double g = static_cast<double>(p.value.grad[i]);
            const double m = cfg.beta1 * static_cast<double>(p.m.data[i]) + (1.0 - cfg.beta1) * g;
            const double v = cfg.beta2 * static_cast<double>(p.v.data[i]) + (1.0 - cfg.beta2) * g * g;
            p.m.data[i] = static_cast<T>(m);
            p.v.data[i] = static_cast<T>(v);
            const double update = cfg.lr * (m / corr1) / (std::sqrt(v / corr2) + cfg.eps);
            p.value.data[i] = static_cast<T>(static_cast<double>(p.value.data[i]) - update);
        }
    }
}

template <typename T>
void adam_step(ParamStoreT<T>& store, double lr) {
    AdamConfig cfg;
    cfg.lr = lr;
    adam_step(store, cfg);
}

// ---------------------------------------------------------------------------
// Gradient maps: per-sample gradient buffers reduced in a fixed order so that
// batch results are independent of worker count.
// ---------------------------------------------------------------------------

template <typename T>
using GradMapT = std::map<std::string, TensorT<T>>;

using GradMap = GradMapT<float>;

template <typename T>
GradMapT<T> grad_map_like(const ParamStoreT<T>& store) {
    GradMapT<T> g;
    for (const auto& [name, p] : store.entries) g[name] = TensorT<T>(p.value.shape);
    return g;
}

template <typename T>
void accumulate_grad_map(GradMapT<T>& into, const GradMapT<T>& from) {
    for (const auto& [name, t] : from) {
        auto it = into.find(name);
        if (it == into.end()) throw Error("grad map: unknown parameter '" + name + "'");
        for (size_t i = 0; i < t.data.size(); ++i) it->second.data[i] += t.data[i];
    }
}

/// Adds a grad map into the store's gradient buffers (allocating as needed).
template <typename T>
void add_grad_map_to_store(ParamStoreT<T>& store, const GradMapT<T>& g) {
    for (const auto& [name, t] : g) {
        Param<T>& p = store.param(name);
        if (p.value.grad.size() != p.value.data.size()) p.value.zero_grad();
        for (size_t i = 0; i < t.data.size(); ++i) p.value.grad[i] += t.data[i];
    }
}

} // namespace ran
