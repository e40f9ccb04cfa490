#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ran/ops.hpp"
#include "ran/param_store.hpp"

// Four-directional 2D-LSTM context aggregator. Each directional scan walks
// the grid from one corner to the diagonally opposite corner; a cell consumes
// the hidden/cell states of its two predecessors (one step back along each
// axis, toward the starting corner). Off-grid predecessors are zero states.
//
// Gate layout per direction: input gate i (H), forget gates f packed as one
// 2H vector (first half gates the x predecessor, second half the y
// predecessor), candidate cc (H, a single shared candidate), output gate o
// (H). Hidden-to-gate maps take the concatenation (h_x then h_y, fixed
// order); cell update is c = i*cc + f_x*c_x + f_y*c_y and h = o*c.

namespace ran {

struct Direction {
    int row_step; // +1 scans rows top->bottom
    int col_step; // +1 scans cols left->right
    const char* tag;
};

/// Serialized direction order: dr (from top-left), dl (from top-right),
/// ur (from bottom-left), ul (from bottom-right).
inline const std::array<Direction, 4>& directions() {
    static const std::array<Direction, 4> dirs = {
        Direction{+1, +1, "dr"},
        Direction{+1, -1, "dl"},
        Direction{-1, +1, "ur"},
        Direction{-1, -1, "ul"},
    };
    return dirs;
}

inline const Direction& direction_from_tag(const std::string& tag) {
    for (const Direction& d : directions())
        if (tag == d.tag) return d;
    throw Error("unknown scan direction '" + tag + "'");
}

enum class ScanSchedule { sequential, wavefront };

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <typename T>
struct Lstm2dDirParams {
    const TensorT<T>*Wi, *Wf, *Wc, *Wo; // (2H, K) hidden-to-gate
    const TensorT<T>*Ui, *Uf, *Uc, *Uo; // (D, K) input-to-gate
    const TensorT<T>*bi, *bf, *bc, *bo; // (K)
    int hidden = 0;
    int input_dim = 0;

    static Lstm2dDirParams bind(const ParamStoreT<T>& s, const std::string& prefix) {
        Lstm2dDirParams p;
        p.Wi = &s.value(prefix + "Wi");
        p.Wf = &s.value(prefix + "Wf");
        p.Wc = &s.value(prefix + "Wc");
        p.Wo = &s.value(prefix + "Wo");
        p.Ui = &s.value(prefix + "Ui");
        p.Uf = &s.value(prefix + "Uf");
        p.Uc = &s.value(prefix + "Uc");
        p.Uo = &s.value(prefix + "Uo");
        p.bi = &s.value(prefix + "bi");
        p.bf = &s.value(prefix + "bf");
        p.bc = &s.value(prefix + "bc");
        p.bo = &s.value(prefix + "bo");
        p.hidden = p.bi->shape[0];
        p.input_dim = p.Ui->shape[0];
        return p;
    }
};

template <typename T>
struct Lstm2dDirGrads {
    TensorT<T>*Wi, *Wf, *Wc, *Wo, *Ui, *Uf, *Uc, *Uo, *bi, *bf, *bc, *bo;

    static Lstm2dDirGrads bind(GradMapT<T>& g, const std::string& prefix) {
        auto get = [&](const char* n) -> TensorT<T>* {
            auto it = g.find(prefix + n);
            if (it == g.end()) throw Error("grad map missing '" + prefix + n + "'");
            return &it->second;
        };
        return Lstm2dDirGrads{get("Wi"), get("Wf"), get("Wc"), get("Wo"),
                              get("Ui"), get("Uf"), get("Uc"), get("Uo"),
                              get("bi"), get("bf"), get("bc"), get("bo")};
    }
};

// ---------------------------------------------------------------------------
// Cell kernel
// ---------------------------------------------------------------------------

namespace detail {

// acc[k] += x[j] * W[j, k], W row-major (rows, k_cols)
template <typename T>
inline void addmv_rows(const T* x, int rows, const T* w, int k, T* acc) {
    for (int j = 0; j < rows; ++j) {
        const T xv = x[j];
        const T* wrow = w + static_cast<size_t>(j) * k;
        for (int o = 0; o < k; ++o) acc[o] += xv * wrow[o];
    }
}

// out[j] += sum_k W[j, k] * g[k] for j in [0, rows)
template <typename T>
inline void addmv_t_rows(const T* g, int rows, const T* w, int k, T* out) {
    for (int j = 0; j < rows; ++j) {
        const T* wrow = w + static_cast<size_t>(j) * k;
        T acc = T(0);
        for (int o = 0; o < k; ++o) acc += wrow[o] * g[o];
        out[j] += acc;
    }
}

// gw[j, k] += x[j] * g[k]
template <typename T>
inline void add_outer(const T* x, int rows, const T* g, int k, T* gw) {
    for (int j = 0; j < rows; ++j) {
        const T xv = x[j];
        T* gwrow = gw + static_cast<size_t>(j) * k;
        for (int o = 0; o < k; ++o) gwrow[o] += xv * g[o];
    }
}

template <typename T>
inline T sigmoid_scalar(T a) {
    return T(1) / (T(1) + std::exp(-a));
}

/// Forward for one cell. h_x/h_y/c_x/c_y may be null (off-grid -> zero).
/// Writes gates and states into the provided slots (each length H except
/// f_out which is 2H).
template <typename T>
void lstm2d_cell_kernel(const Lstm2dDirParams<T>& P, const T* p, const T* h_x, const T* h_y,
                        const T* c_x, const T* c_y, T* i_out, T* f_out, T* cc_out, T* o_out,
                        T* c_out, T* h_out) {
    const int H = P.hidden, D = P.input_dim;
    const int H2 = 2 * H;
    // Pre-activations, in fixed order: bias, h_x block, h_y block, input.
    std::vector<T> a(static_cast<size_t>(H) * 3 + H2);
    T* a_i = a.data();
    T* a_f = a_i + H;
    T* a_c = a_f + H2;
    T* a_o = a_c + H;
    for (int g = 0; g < H; ++g) a_i[g] = P.bi->data[static_cast<size_t>(g)];
    for (int g = 0; g < H2; ++g) a_f[g] = P.bf->data[static_cast<size_t>(g)];
    for (int g = 0; g < H; ++g) a_c[g] = P.bc->data[static_cast<size_t>(g)];
    for (int g = 0; g < H; ++g) a_o[g] = P.bo->data[static_cast<size_t>(g)];
    if (h_x) {
        addmv_rows(h_x, H, P.Wi->ptr(), H, a_i);
        addmv_rows(h_x, H, P.Wf->ptr(), H2, a_f);
        addmv_rows(h_x, H, P.Wc->ptr(), H, a_c);
        addmv_rows(h_x, H, P.Wo->ptr(), H, a_o);
    }
    if (h_y) {
        addmv_rows(h_y, H, P.Wi->ptr() + static_cast<size_t>(H) * H, H, a_i);
        addmv_rows(h_y, H, P.Wf->ptr() + static_cast<size_t>(H) * H2, H2, a_f);
        addmv_rows(h_y, H, P.Wc->ptr() + static_cast<size_t>(H) * H, H, a_c);
        addmv_rows(h_y, H, P.Wo->ptr() + static_cast<size_t>(H) * H, H, a_o);
    }
    addmv_rows(p, D, P.Ui->ptr(), H, a_i);
    addmv_rows(p, D, P.Uf->ptr(), H2, a_f);
    addmv_rows(p, D, P.Uc->ptr(), H, a_c);
    addmv_rows(p, D, P.Uo->ptr(), H, a_o);

    for (int g = 0; g < H; ++g) i_out[g] = sigmoid_scalar(a_i[g]);
    for (int g = 0; g < H2; ++g) f_out[g] = sigmoid_scalar(a_f[g]);
    for (int g = 0; g < H; ++g) cc_out[g] = std::tanh(a_c[g]);
    for (int g = 0; g < H; ++g) o_out[g] = sigmoid_scalar(a_o[g]);
    for (int g = 0; g < H; ++g) {
        T c = i_out[g] * cc_out[g];
        if (c_x) c += f_out[g] * c_x[g];
        if (c_y) c += f_out[H + g] * c_y[g];
        c_out[g] = c;
        h_out[g] = o_out[g] * c;
    }
}

/// Backward for one cell. dh = total gradient on this cell's h; dc_in = total
/// gradient on this cell's c from successor forget paths. Accumulates into
/// predecessor dh_/dc_ slots (when non-null), the input grad dp (when
/// non-null), and parameter grads.
template <typename T>
void lstm2d_cell_backward_kernel(const Lstm2dDirParams<T>& P, const Lstm2dDirGrads<T>& G,
                                 const T* p, const T* h_x, const T* h_y, const T* c_x,
                                 const T* c_y, const T* i_g, const T* f_g, const T* cc_g,
                                 const T* o_g, const T* c_g, const T* dh, const T* dc_in,
                                 T* dh_x, T* dh_y, T* dc_x, T* dc_y, T* dp) {
    const int H = P.hidden, D = P.input_dim;
    const int H2 = 2 * H;
    std::vector<T> buf(static_cast<size_t>(H) * 3 + H2);
    T* da_i = buf.data();
    T* da_f = da_i + H;
    T* da_c = da_f + H2;
    T* da_o = da_c + H;
    for (int g = 0; g < H; ++g) {
        const T dc = dc_in[g] + dh[g] * o_g[g];
        const T do_ = dh[g] * c_g[g];
        const T di = dc * cc_g[g];
        const T dcc = dc * i_g[g];
        da_i[g] = di * i_g[g] * (T(1) - i_g[g]);
        da_c[g] = dcc * (T(1) - cc_g[g] * cc_g[g]);
        da_o[g] = do_ * o_g[g] * (T(1) - o_g[g]);
        const T dfx = c_x ? dc * c_x[g] : T(0);
        const T dfy = c_y ? dc * c_y[g] : T(0);
        da_f[g] = dfx * f_g[g] * (T(1) - f_g[g]);
        da_f[H + g] = dfy * f_g[H + g] * (T(1) - f_g[H + g]);
        if (dc_x) dc_x[g] += dc * f_g[g];
        if (dc_y) dc_y[g] += dc * f_g[H + g];
    }
    // Bias grads.
    for (int g = 0; g < H; ++g) G.bi->data[static_cast<size_t>(g)] += da_i[g];
    for (int g = 0; g < H2; ++g) G.bf->data[static_cast<size_t>(g)] += da_f[g];
    for (int g = 0; g < H; ++g) G.bc->data[static_cast<size_t>(g)] += da_c[g];
    for (int g = 0; g < H; ++g) G.bo->data[static_cast<size_t>(g)] += da_o[g];
    // Hidden-to-gate weight grads and predecessor hidden grads.
    if (h_x) {
        add_outer(h_x, H, da_i, H, G.Wi->ptr());
        add_outer(h_x, H, da_f, H2, G.Wf->ptr());
        add_outer(h_x, H, da_c, H, G.Wc->ptr());
        add_outer(h_x, H, da_o, H, G.Wo->ptr());
    }
    if (h_y) {
        add_outer(h_y, H, da_i, H, G.Wi->ptr() + static_cast<size_t>(H) * H);
        add_outer(h_y, H, da_f, H2, G.Wf->ptr() + static_cast<size_t>(H) * H2);
        add_outer(h_y, H, da_c, H, G.Wc->ptr() + static_cast<size_t>(H) * H);
        add_outer(h_y, H, da_o, H, G.Wo->ptr() + static_cast<size_t>(H) * H);
    }
    if (dh_x) {
        addmv_t_rows(da_i, H, P.Wi->ptr(), H, dh_x);
        addmv_t_rows(da_f, H, P.Wf->ptr(), H2, dh_x);
        addmv_t_rows(da_c, H, P.Wc->ptr(), H, dh_x);
        addmv_t_rows(da_o, H, P.Wo->ptr(), H, dh_x);
    }
    if (dh_y) {
        addmv_t_rows(da_i, H, P.Wi->ptr() + static_cast<size_t>(H) * H, H, dh_y);
        addmv_t_rows(da_f, H, P.Wf->ptr() + static_cast<size_t>(H) * H2, H2, dh_y);
        addmv_t_rows(da_c, H, P.Wc->ptr() + static_cast<size_t>(H) * H, H, dh_y);
        addmv_t_rows(da_o, H, P.Wo->ptr() + static_cast<size_t>(H) * H, H, dh_y);
    }
    // Input-to-gate weight grads and input grad.
    add_outer(p, D, da_i, H, G.Ui->ptr());
    add_outer(p, D, da_f, H2, G.Uf->ptr());
    add_outer(p, D, da_c, H, G.Uc->ptr());
    add_outer(p, D, da_o, H, G.Uo->ptr());
    if (dp) {
        addmv_t_rows(da_i, D, P.Ui->ptr(), H, dp);
        addmv_t_rows(da_f, D, P.Uf->ptr(), H2, dp);
        addmv_t_rows(da_c, D, P.Uc->ptr(), H, dp);
        addmv_t_rows(da_o, D, P.Uo->ptr(), H, dp);
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Single-cell op (tensor-level view of the kernel)
// ---------------------------------------------------------------------------

template <typename T>
struct Lstm2dCellOut {
    TensorT<T> h, c;
};

template <typename T>
Lstm2dCellOut<T> lstm2d_cell(const TensorT<T>& p, const TensorT<T>& h_x, const TensorT<T>& h_y,
                             const TensorT<T>& c_x, const TensorT<T>& c_y,
                             const Lstm2dDirParams<T>& params) {
    const int H = params.hidden;
    if (p.numel() != params.input_dim)
        throw ShapeError("lstm2d_cell: input dim " + std::to_string(p.numel()) + " != " +
                         std::to_string(params.input_dim));
    for (const TensorT<T>* t : {&h_x, &h_y, &c_x, &c_y})
        if (t->numel() != H)
            throw ShapeError("lstm2d_cell: state dim " + std::to_string(t->numel()) + " != hidden " +
                             std::to_string(H));
    Lstm2dCellOut<T> out{TensorT<T>(Shape(H)), TensorT<T>(Shape(H))};
    std::vector<T> gates(static_cast<size_t>(H) * 5);
    detail::lstm2d_cell_kernel(params, p.ptr(), h_x.ptr(), h_y.ptr(), c_x.ptr(), c_y.ptr(),
                               gates.data(), gates.data() + H, gates.data() + 3 * H,
                               gates.data() + 4 * H, out.c.ptr(), out.h.ptr());
    debug_check_finite(out.h, "lstm2d_cell");
    return out;
}

// ---------------------------------------------------------------------------
// Directional scan
// ---------------------------------------------------------------------------

template <typename T>
struct ScanCache {
    int n = 0, m = 0, hidden = 0;
    TensorT<T> i, f, cc, o, c, h; // N x M x {H, 2H, H, H, H, H}

    void reset(int n_, int m_, int h_) {
        n = n_;
        m = m_;
        hidden = h_;
        i = TensorT<T>(Shape(n, m, h_));
        f = TensorT<T>(Shape(n, m, 2 * h_));
        cc = TensorT<T>(Shape(n, m, h_));
        o = TensorT<T>(Shape(n, m, h_));
        c = TensorT<T>(Shape(n, m, h_));
        h = TensorT<T>(Shape(n, m, h_));
    }
};

/// Hidden and cell state fields of one completed scan.
template <typename T>
struct Lstm2dState {
    TensorT<T> h, c;
};

namespace detail {

template <typename T>
void scan_cell(const TensorT<T>& input, const Direction& dir, const Lstm2dDirParams<T>& P,
               ScanCache<T>& cache, int i, int j) {
    const int n = cache.n, m = cache.m, H = cache.hidden;
    const int pi = i - dir.row_step; // y predecessor (other row)
    const int pj = j - dir.col_step; // x predecessor (other column)
    const bool has_x = pj >= 0 && pj < m;
    const bool has_y = pi >= 0 && pi < n;
    const size_t at = static_cast<size_t>(i) * m + j;
    const size_t at_x = static_cast<size_t>(i) * m + pj;
    const size_t at_y = static_cast<size_t>(pi) * m + j;
    const T* h_x = has_x ? &cache.h.data[at_x * H] : nullptr;
    const T* c_x = has_x ? &cache.c.data[at_x * H] : nullptr;
    const T* h_y = has_y ? &cache.h.data[at_y * H] : nullptr;
    const T* c_y = has_y ? &cache.c.data[at_y * H] : nullptr;
    const T* p = &input.data[at * static_cast<size_t>(P.input_dim)];
    lstm2d_cell_kernel(P, p, h_x, h_y, c_x, c_y, &cache.i.data[at * H],
                       &cache.f.data[at * 2 * H], &cache.cc.data[at * H], &cache.o.data[at * H],
                       &cache.c.data[at * H], &cache.h.data[at * H]);
}

} // namespace detail

/// Runs one directional scan over input (N x M x D), filling the cache. The
/// wavefront schedule evaluates each anti-diagonal's cells in parallel; both
/// schedules perform the identical per-cell arithmetic, so outputs are
/// bitwise equal.
template <typename T>
void directional_scan(const TensorT<T>& input, const Direction& dir,
                      const Lstm2dDirParams<T>& params, ScanSchedule schedule,
                      ScanCache<T>& cache) {
    if (input.shape.rank != 3)
        throw ShapeError("directional_scan: input must be NxMxD, got " + input.shape.str());
    if (input.shape[2] != params.input_dim)
        throw ShapeError("directional_scan: input depth " + std::to_string(input.shape[2]) +
                         " != param input dim " + std::to_string(params.input_dim));
    const int n = input.shape[0], m = input.shape[1];
    cache.reset(n, m, params.hidden);

    if (schedule == ScanSchedule::sequential) {
        const int i0 = dir.row_step > 0 ? 0 : n - 1;
        const int j0 = dir.col_step > 0 ? 0 : m - 1;
        for (int a = 0; a < n; ++a) {
            const int i = i0 + a * dir.row_step;
            for (int b = 0; b < m; ++b) {
                const int j = j0 + b * dir.col_step;
                detail::scan_cell(input, dir, params, cache, i, j);
            }
        }
        return;
    }

    // Wavefront: cells whose transformed coordinates sum to k are mutually
    // independent given diagonals < k.
    for (int k = 0; k <= n + m - 2; ++k) {
        const int a_lo = std::max(0, k - (m - 1));
        const int a_hi = std::min(n - 1, k);
        const int64_t count = a_hi - a_lo + 1;
        if (count <= 0) continue;
        parallel_for_diagonal(count, [&](int64_t t) {
            const int a = a_lo + static_cast<int>(t);
            const int b = k - a;
            const int i = dir.row_step > 0 ? a : n - 1 - a;
            const int j = dir.col_step > 0 ? b : m - 1 - b;
            detail::scan_cell(input, dir, params, cache, i, j);
        });
    }
}

/// Convenience wrapper returning the state fields.
template <typename T>
Lstm2dState<T> directional_scan_state(const TensorT<T>& input, const Direction& dir,
                                      const Lstm2dDirParams<T>& params, ScanSchedule schedule) {
    ScanCache<T> cache;
    directional_scan(input, dir, params, schedule, cache);
    return Lstm2dState<T>{cache.h, cache.c};
}

/// Backward over one completed scan. dh_out carries the consumers' gradient
/// on every cell's hidden state. Accumulates parameter grads into G and, when
/// dinput is non-null, input grads.
template <typename T>
void directional_scan_backward(const TensorT<T>& input, const Direction& dir,
                               const Lstm2dDirParams<T>& P, const Lstm2dDirGrads<T>& G,
                               const ScanCache<T>& cache, const TensorT<T>& dh_out,
                               TensorT<T>* dinput) {
    const int n = cache.n, m = cache.m, H = cache.hidden;
    if (dh_out.shape != Shape(n, m, H))
        throw ShapeError("directional_scan_backward: dh shape " + dh_out.shape.str());
    if (dinput && dinput->shape != input.shape) *dinput = TensorT<T>(input.shape);
    TensorT<T> dh_acc = dh_out; // gradient on h, grown by successor contributions
    TensorT<T> dc_acc(Shape(n, m, H));
    const int i0 = dir.row_step > 0 ? n - 1 : 0; // reverse scan order
    const int j0 = dir.col_step > 0 ? m - 1 : 0;
    for (int a = 0; a < n; ++a) {
        const int i = i0 - a * dir.row_step;
        for (int b = 0; b < m; ++b) {
            const int j = j0 - b * dir.col_step;
            const int pi = i - dir.row_step;
            const int pj = j - dir.col_step;
            const bool has_x = pj >= 0 && pj < m;
            const bool has_y = pi >= 0 && pi < n;
            const size_t at = static_cast<size_t>(i) * m + j;
            const size_t at_x = static_cast<size_t>(i) * m + pj;
            const size_t at_y = static_cast<size_t>(pi) * m + j;
            detail::lstm2d_cell_backward_kernel(
                P, G, &input.data[at * static_cast<size_t>(P.input_dim)],
                has_x ? &cache.h.data[at_x * H] : nullptr, has_y ? &cache.h.data[at_y * H] : nullptr,
                has_x ? &cache.c.data[at_x * H] : nullptr, has_y ? &cache.c.data[at_y * H] : nullptr,
                &cache.i.data[at * H], &cache.f.data[at * 2 * H], &cache.cc.data[at * H],
                &cache.o.data[at * H], &cache.c.data[at * H], &dh_acc.data[at * H],
                &dc_acc.data[at * H], has_x ? &dh_acc.data[at_x * H] : nullptr,
                has_y ? &dh_acc.data[at_y * H] : nullptr, has_x ? &dc_acc.data[at_x * H] : nullptr,
                has_y ? &dc_acc.data[at_y * H] : nullptr,
                dinput ? &dinput->data[at * static_cast<size_t>(P.input_dim)] : nullptr);
        }
    }
}

// ---------------------------------------------------------------------------
// Stacked four-direction model with class head
// ---------------------------------------------------------------------------

/// Where the four directions are combined: per-layer hidden averaging (each
/// layer consumes the mean of the previous layer's four scans) or final
/// logits averaging (four independent direction towers whose head outputs
/// are averaged).
enum class AveragePoint { hidden, logits };

struct RanLstmConfig {
    int layers = 2;
    int hidden = 32;
    int input_dim = 64;
    AveragePoint average_point = AveragePoint::hidden;

    void validate() const {
        if (layers < 1) throw ConfigError("lstm.layers", "must be >= 1");
        if (hidden < 1) throw ConfigError("lstm.hidden", "must be >= 1");
        if (input_dim < 1) throw ConfigError("lstm.input_dim", "must be >= 1");
    }
};

/// Named presets: "1L" (single layer) and "2L" (two stacked layers).
inline RanLstmConfig build_ran_lstm_variant(const std::string& name, int input_dim,
                                            int hidden = 32) {
    RanLstmConfig cfg;
    cfg.input_dim = input_dim;
    cfg.hidden = hidden;
    if (name == "1L") cfg.layers = 1;
    else if (name == "2L") cfg.layers = 2;
    else throw ConfigError("lstm.variant", "unknown RAN-LSTM variant '" + name + "'");
    return cfg;
}

inline std::string lstm_dir_prefix(int layer, const char* tag) {
    return "lstm.l" + std::to_string(layer) + "." + tag + ".";
}

template <typename T>
void ran_lstm_init(ParamStoreT<T>& store, const RanLstmConfig& cfg, Rng& rng) {
    cfg.validate();
    const int H = cfg.hidden;
    for (int l = 0; l < cfg.layers; ++l) {
        const int din = l == 0 ? cfg.input_dim : H;
        for (const Direction& d : directions()) {
            const std::string pre = lstm_dir_prefix(l, d.tag);
            Rng r = rng.substream(pre);
            store.create_uniform(pre + "Wi", Shape(2 * H, H), 2 * H, H, r);
            store.create_uniform(pre + "Wf", Shape(2 * H, 2 * H), 2 * H, 2 * H, r);
            store.create_uniform(pre + "Wc", Shape(2 * H, H), 2 * H, H, r);
            store.create_uniform(pre + "Wo", Shape(2 * H, H), 2 * H, H, r);
            store.create_uniform(pre + "Ui", Shape(din, H), din, H, r);
            store.create_uniform(pre + "Uf", Shape(din, 2 * H), din, 2 * H, r);
            store.create_uniform(pre + "Uc", Shape(din, H), din, H, r);
            store.create_uniform(pre + "Uo", Shape(din, H), din, H, r);
            store.create(pre + "bi", Shape(H));
            store.create(pre + "bf", Shape(2 * H));
            store.create(pre + "bc", Shape(H));
            store.create(pre + "bo", Shape(H));
        }
    }
    Rng rh = rng.substream("lstm.head");
    store.create_uniform("lstm.head.W", Shape(H, 2), H, 2, rh);
    store.create("lstm.head.b", Shape(2));
}

template <typename T>
struct RanLstmCache {
    // hidden averaging: layer_inputs[l] feeds layer l; back() feeds the head.
    std::vector<TensorT<T>> layer_inputs;
    std::vector<std::array<ScanCache<T>, 4>> scans; // [layer][direction]
    // logits averaging: per-direction towers.
    std::array<std::vector<TensorT<T>>, 4> tower_inputs; // [dir][layer], plus head input at back()
};

template <typename T>
TensorT<T> ran_lstm_forward(const TensorT<T>& grid, const RanLstmConfig& cfg,
                            const ParamStoreT<T>& store, ScanSchedule schedule,
                            RanLstmCache<T>* cache) {
    cfg.validate();
    if (grid.shape.rank != 3 || grid.shape[2] != cfg.input_dim)
        throw ShapeError("ran_lstm_forward: grid " + grid.shape.str() + " does not match input dim " +
                         std::to_string(cfg.input_dim));
    const int n = grid.shape[0], m = grid.shape[1], H = cfg.hidden;
    RanLstmCache<T> local;
    RanLstmCache<T>& C = cache ? *cache : local;
    C.scans.assign(static_cast<size_t>(cfg.layers), {});

    TensorT<T> head_in;
    if (cfg.average_point == AveragePoint::hidden) {
        C.layer_inputs.clear();
        C.layer_inputs.push_back(grid);
        for (int l = 0; l < cfg.layers; ++l) {
            TensorT<T> mean(Shape(n, m, H));
            for (int d = 0; d < 4; ++d) {
                const auto P = Lstm2dDirParams<T>::bind(store, lstm_dir_prefix(l, directions()[d].tag));
                directional_scan(C.layer_inputs.back(), directions()[d], P, schedule,
                                 C.scans[static_cast<size_t>(l)][static_cast<size_t>(d)]);
            }
            for (size_t i = 0; i < mean.data.size(); ++i) {
                mean.data[i] = (C.scans[static_cast<size_t>(l)][0].h.data[i] +
                                C.scans[static_cast<size_t>(l)][1].h.data[i] +
                                C.scans[static_cast<size_t>(l)][2].h.data[i] +
                                C.scans[static_cast<size_t>(l)][3].h.data[i]) *
                               T(0.25);
            }
            C.layer_inputs.push_back(std::move(mean));
        }
        head_in = C.layer_inputs.back();
        return conv1x1(head_in, store.value("lstm.head.W"), store.value("lstm.head.b"));
    }

    // logits averaging: independent towers, shared head weights.
    TensorT<T> logits(Shape(n, m, 2));
    for (int d = 0; d < 4; ++d) {
        auto& tower = C.tower_inputs[static_cast<size_t>(d)];
        tower.clear();
        tower.push_back(grid);
        for (int l = 0; l < cfg.layers; ++l) {
            const auto P = Lstm2dDirParams<T>::bind(store, lstm_dir_prefix(l, directions()[d].tag));
            directional_scan(tower.back(), directions()[d], P, schedule,
                             C.scans[static_cast<size_t>(l)][static_cast<size_t>(d)]);
            tower.push_back(C.scans[static_cast<size_t>(l)][static_cast<size_t>(d)].h);
        }
        TensorT<T> ld = conv1x1(tower.back(), store.value("lstm.head.W"), store.value("lstm.head.b"));
        for (size_t i = 0; i < logits.data.size(); ++i) logits.data[i] += ld.data[i] * T(0.25);
    }
    return logits;
}

template <typename T>
void ran_lstm_backward(const RanLstmConfig& cfg, const ParamStoreT<T>& store,
                       const RanLstmCache<T>& C, const TensorT<T>& dlogits, GradMapT<T>& grads,
                       TensorT<T>* dgrid = nullptr) {
    const TensorT<T>& headW = store.value("lstm.head.W");
    auto gW = grads.find("lstm.head.W");
    auto gb = grads.find("lstm.head.b");
    if (gW == grads.end() || gb == grads.end()) throw Error("ran_lstm_backward: head grads missing");

    if (cfg.average_point == AveragePoint::hidden) {
        TensorT<T> dx; // gradient on the current layer's output (mean of scans)
        conv1x1_backward(C.layer_inputs.back(), headW, dlogits, &dx, gW->second, gb->second);
        for (int l = cfg.layers - 1; l >= 0; --l) {
            TensorT<T> dh(dx.shape);
            for (size_t i = 0; i < dx.data.size(); ++i) dh.data[i] = dx.data[i] * T(0.25);
            TensorT<T> dprev(C.layer_inputs[static_cast<size_t>(l)].shape);
            for (int d = 0; d < 4; ++d) {
                const auto P = Lstm2dDirParams<T>::bind(store, lstm_dir_prefix(l, directions()[d].tag));
                auto G = Lstm2dDirGrads<T>::bind(grads, lstm_dir_prefix(l, directions()[d].tag));
                directional_scan_backward(C.layer_inputs[static_cast<size_t>(l)], directions()[d], P, G,
                                          C.scans[static_cast<size_t>(l)][static_cast<size_t>(d)], dh,
                                          (l > 0 || dgrid) ? &dprev : nullptr);
            }
            dx = std::move(dprev);
        }
        if (dgrid) *dgrid = std::move(dx);
        return;
    }

    TensorT<T> dl(dlogits.shape);
    for (size_t i = 0; i < dl.data.size(); ++i) dl.data[i] = dlogits.data[i] * T(0.25);
    for (int d = 0; d < 4; ++d) {
        const auto& tower = C.tower_inputs[static_cast<size_t>(d)];
        TensorT<T> dx;
        conv1x1_backward(tower.back(), headW, dl, &dx, gW->second, gb->second);
        for (int l = cfg.layers - 1; l >= 0; --l) {
            const auto P = Lstm2dDirParams<T>::bind(store, lstm_dir_prefix(l, directions()[d].tag));
            auto G = Lstm2dDirGrads<T>::bind(grads, lstm_dir_prefix(l, directions()[d].tag));
            TensorT<T> dprev(tower[static_cast<size_t>(l)].shape);
            directional_scan_backward(tower[static_cast<size_t>(l)], directions()[d], P, G,
                                      C.scans[static_cast<size_t>(l)][static_cast<size_t>(d)], dx,
                                      (l > 0 || dgrid) ? &dprev : nullptr);
            dx = std::move(dprev);
        }
        if (dgrid) {
            if (dgrid->shape != dx.shape) *dgrid = TensorT<T>(dx.shape);
            for (size_t i = 0; i < dx.data.size(); ++i) dgrid->data[i] += dx.data[i];
        }
    }
}

} // namespace ran
