#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "htnn/errors.hpp"
#include "htnn/ht_layer.hpp"
#include "htnn/ht_tensor.hpp"
#include "htnn/rng.hpp"
#include "htnn/tensor.hpp"

namespace htnn {

/// Gate order used everywhere: input (u), forget (f), output (o), candidate (c).
inline constexpr std::array<const char*, 4> gate_names{"u", "f", "o", "c"};

struct LSTMShape {
    Shape in_shape;  ///< tensorization of the input, N = prod
    Shape out_shape; ///< tensorization of the hidden state, H = prod
    std::size_t classes = 2;
    std::size_t leaf_rank = 3;
    std::size_t internal_rank = 3;
    std::size_t root_rank = 1;
    OddSplit odd_split = OddSplit::right_heavy;
    bool concatenated_gates = false; ///< one HT layer with output 4H instead of four
    double forget_bias = 1.0;
};

/**
 * Parameters of an LSTM whose input-to-hidden maps are HT layers.
 *
 * With separate gates `gates` holds four layers in u, f, o, c order. With
 * concatenated gates it holds one layer whose first output mode is 4*m_1, so
 * its output splits into four contiguous length-H chunks in the same order.
 */
struct LSTMParams {
    std::vector<HTLinearLayer> gates;
    std::array<Tensor, 4> V; ///< (H, H) recurrent matrices
    std::array<Tensor, 4> b; ///< length-H biases
    Tensor head_w;           ///< (C, H)
    Tensor head_b;           ///< length C

    std::size_t input_size() const { return gates.front().in_size(); }
    std::size_t hidden_size() const { return V[0].dim(0); }
    std::size_t classes() const { return head_b.size(); }
    bool concatenated() const { return gates.size() == 1; }

    static LSTMParams random(const LSTMShape& s, std::uint64_t seed) {
        if (s.in_shape.size() != s.out_shape.size() || s.in_shape.empty()) {
            throw ShapeError("input and hidden tensorizations must have the same nonzero order");
        }
        if (s.classes < 2) {
            throw ArgumentError("need at least 2 classes");
        }
        Rng rng(seed);
        const DimTree tree =
            assign_ranks(DimTree::balanced(s.in_shape.size(), s.odd_split), s.leaf_rank, s.internal_rank, s.root_rank);
        const std::size_t h = num_elements(s.out_shape);
        LSTMParams p;
        if (s.concatenated_gates) {
            Shape out = s.out_shape;
            out[0] *= 4;
            p.gates.push_back(HTLinearLayer::random(tree, s.in_shape, out, rng.next_u64()));
        } else {
            for (int g = 0; g < 4; ++g) {
                p.gates.push_back(HTLinearLayer::random(tree, s.in_shape, s.out_shape, rng.next_u64()));
            }
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(h));
        for (int g = 0; g < 4; ++g) {
            p.V[g] = Tensor(Shape{h, h});
            for (double& v : p.V[g].storage()) v = rng.uniform(-bound, bound);
            p.b[g] = Tensor(Shape{h});
        }
        p.b[1].fill(s.forget_bias);
        p.head_w = Tensor(Shape{s.classes, h});
        for (double& v : p.head_w.storage()) v = rng.uniform(-bound, bound);
        p.head_b = Tensor(Shape{s.classes});
        return p;
    }

    /// Every trainable tensor in a fixed order: HT components by layer and
    /// node id, then V, b, head weight, head bias.
    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for (auto& layer : gates)
            for (auto& c : layer.core().components()) out.push_back(&c);
        for (auto& v : V) out.push_back(&v);
        for (auto& v : b) out.push_back(&v);
        out.push_back(&head_w);
        out.push_back(&head_b);
        return out;
    }

    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        for (Tensor* t : const_cast<LSTMParams*>(this)->tensors()) out.push_back(t);
        return out;
    }

    /// Names matching tensors(), e.g. "W_u.3" for node 3 of the u-gate layer.
    std::vector<std::string> tensor_names() const {
        std::vector<std::string> out;
        for (std::size_t l = 0; l < gates.size(); ++l) {
            const std::string prefix = concatenated() ? std::string("W_ufoc") : std::string("W_") + gate_names[l];
            for (std::size_t id = 0; id < gates[l].tree().num_nodes(); ++id) {
                out.push_back(prefix + "." + std::to_string(id));
            }
        }
        for (const char* g : gate_names) out.push_back(std::string("V_") + g);
        for (const char* g : gate_names) out.push_back(std::string("b_") + g);
        out.push_back("head_w");
        out.push_back("head_b");
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const Tensor* t : tensors()) n += t->size();
        return n;
    }

    friend bool operator==(const LSTMParams& a, const LSTMParams& b) {
        return a.gates == b.gates && a.V == b.V && a.b == b.b && a.head_w == b.head_w && a.head_b == b.head_b;
    }
};

/// FNV-1a over the bit patterns of every parameter; detects stale caches.
inline std::uint64_t fingerprint(const LSTMParams& p) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (const Tensor* t : p.tensors()) {
        mix(t->size());
        for (double v : t->data()) mix(std::bit_cast<std::uint64_t>(v));
    }
    return h;
}

struct CellState {
    Tensor h;
    Tensor c;
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// out(b, i) += sum_j a(b, j) * m(i, j)
inline void add_rows_times_transpose(std::span<const double> a, const Tensor& m, std::size_t rows,
                                     std::span<double> out) {
    const std::size_t ni = m.dim(0), nj = m.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < ni; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < nj; ++j) acc += a[r * nj + j] * m[i * nj + j];
            out[r * ni + i] += acc;
        }
    }
}

/// Gate pre-activations from the HT layers: (rows, 4H), gates u, f, o, c.
inline Tensor gate_inputs(const LSTMParams& p, const Tensor& x_rows) {
    const std::size_t rows = x_rows.dim(0), h = p.hidden_size();
    if (p.concatenated()) {
        return forward(p.gates[0], x_rows);
    }
    Tensor z(Shape{rows, 4 * h});
    for (std::size_t g = 0; g < 4; ++g) {
        const Tensor y = forward(p.gates[g], x_rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < h; ++i) z[r * 4 * h + g * h + i] = y[r * h + i];
    }
    return z;
}

inline void check_params(const LSTMParams& p) {
    if (p.gates.size() != 1 && p.gates.size() != 4) {
        throw StructureError("LSTM needs 1 concatenated or 4 separate gate layers");
    }
    const std::size_t h = p.hidden_size();
    const std::size_t want_out = p.concatenated() ? 4 * h : h;
    for (const auto& layer : p.gates) {
        if (layer.out_size() != want_out || layer.in_size() != p.input_size()) {
            throw ShapeError("gate layer maps " + std::to_string(layer.in_size()) + " -> " +
                             std::to_string(layer.out_size()) + ", expected " + std::to_string(p.input_size()) +
                             " -> " + std::to_string(want_out));
        }
    }
    for (int g = 0; g < 4; ++g) {
        if (p.V[g].shape() != Shape{h, h} || p.b[g].shape() != Shape{h}) {
            throw ShapeError(std::string("recurrent parameters of gate ") + gate_names[g] + " have wrong shape");
        }
    }
    if (p.head_w.order() != 2 || p.head_w.dim(1) != h || p.head_b.shape() != Shape{p.head_w.dim(0)}) {
        throw ShapeError("classifier head has wrong shape");
    }
}

/// One step for a batch of rows given gate pre-activations from the input path.
/// Writes activations (rows, 4H) and the new state.
inline void step_rows(const LSTMParams& p, std::span<const double> zin, std::span<const double> h_prev,
                      std::span<const double> c_prev, std::size_t rows, std::span<double> acts,
                      std::span<double> c_out, std::span<double> h_out) {
    const std::size_t h = p.hidden_size();
    std::vector<double> pre(rows * 4 * h);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < 4 * h; ++k) pre[r * 4 * h + k] = zin[r * 4 * h + k] + p.b[k / h][k % h];
    std::vector<double> rec(rows * h);
    for (std::size_t g = 0; g < 4; ++g) {
        std::fill(rec.begin(), rec.end(), 0.0);
        add_rows_times_transpose(h_prev, p.V[g], rows, rec);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < h; ++i) pre[r * 4 * h + g * h + i] += rec[r * h + i];
    }
    for (std::size_t r = 0; r < rows; ++r) {
        double* a = &acts[r * 4 * h];
        const double* z = &pre[r * 4 * h];
        for (std::size_t i = 0; i < h; ++i) {
            const double u = sigmoid(z[i]), f = sigmoid(z[h + i]), o = sigmoid(z[2 * h + i]);
            const double g = std::tanh(z[3 * h + i]);
            a[i] = u;
            a[h + i] = f;
            a[2 * h + i] = o;
            a[3 * h + i] = g;
            const double c = f * c_prev[r * h + i] + u * g;
            c_out[r * h + i] = c;
            h_out[r * h + i] = o * std::tanh(c);
        }
    }
}

} // namespace detail

/// One LSTM step on a single input vector, no dropout.
inline CellState cell_step(const LSTMParams& p, const Tensor& x_t, const CellState& state) {
    detail::check_params(p);
    const std::size_t h = p.hidden_size();
    if (x_t.size() != p.input_size()) {
        throw ShapeError("input has length " + std::to_string(x_t.size()) + ", expected " +
                         std::to_string(p.input_size()));
    }
    if (state.h.size() != h || state.c.size() != h) {
        throw ShapeError("state has wrong hidden size");
    }
    const Tensor zin = detail::gate_inputs(p, x_t.reshaped(Shape{1, x_t.size()}));
    std::vector<double> acts(4 * h);
    CellState out{Tensor(Shape{h}), Tensor(Shape{h})};
    detail::step_rows(p, zin.data(), state.h.data(), state.c.data(), 1, acts, out.c.data(), out.h.data());
    return out;
}

/// Everything backward needs from a forward pass over a batch of sequences.
struct LSTMCache {
    Tensor x;                  ///< (B, T, N)
    Tensor mask;               ///< (B, T, 4H) dropout multipliers, valid when has_mask
    bool has_mask = false;
    std::vector<Tensor> acts;  ///< per step (B, 4H): u, f, o, g
    std::vector<Tensor> cells; ///< T+1 entries (B, H), cells[0] = 0
    std::vector<Tensor> hs;    ///< T+1 entries (B, H), hs[0] = 0
    bool train_mode = false;
    std::uint64_t params_fingerprint = 0;

    std::size_t batch() const { return x.dim(0); }
    std::size_t steps() const { return x.dim(1); }
};

/**
 * Forward pass over a batch of sequences x of shape (B, T, N).
 *
 * Returns logits (B, C). In train mode each gate pre-activation coming from
 * an HT layer is multiplied by an inverted-dropout mask drawn from `rng`.
 */
inline Tensor forward_batch(const LSTMParams& p, const Tensor& x, double dropout_rate, Rng& rng, bool train_mode,
                            LSTMCache* cache = nullptr) {
    detail::check_params(p);
    if (x.order() != 3 || x.dim(2) != p.input_size()) {
        throw ShapeError("sequence batch has shape " + shape_string(x.shape()) + ", expected (B, T, " +
                         std::to_string(p.input_size()) + ")");
    }
    if (x.dim(1) == 0 || x.dim(0) == 0) {
        throw ArgumentError("empty sequence");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ArgumentError("dropout rate must lie in [0, 1)");
    }
    const std::size_t bsz = x.dim(0), steps = x.dim(1), n = x.dim(2), h = p.hidden_size();
    Tensor zin = detail::gate_inputs(p, x.reshaped(Shape{bsz * steps, n}));
    Tensor mask;
    if (train_mode && dropout_rate > 0.0) {
        mask = Tensor(Shape{bsz, steps, 4 * h});
        const double keep = 1.0 / (1.0 - dropout_rate);
        for (double& m : mask.storage()) m = rng.uniform() < dropout_rate ? 0.0 : keep;
        for (std::size_t i = 0; i < zin.size(); ++i) zin[i] *= mask[i];
    }
    std::vector<Tensor> acts, cells, hs;
    cells.emplace_back(Shape{bsz, h});
    hs.emplace_back(Shape{bsz, h});
    std::vector<double> zt(bsz * 4 * h);
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t r = 0; r < bsz; ++r)
            std::copy_n(&zin[(r * steps + t) * 4 * h], 4 * h, &zt[r * 4 * h]);
        Tensor a(Shape{bsz, 4 * h}), c(Shape{bsz, h}), hn(Shape{bsz, h});
        detail::step_rows(p, zt, hs.back().data(), cells.back().data(), bsz, a.data(), c.data(), hn.data());
        acts.push_back(std::move(a));
        cells.push_back(std::move(c));
        hs.push_back(std::move(hn));
    }
    const std::size_t classes = p.classes();
    Tensor logits(Shape{bsz, classes});
    for (std::size_t r = 0; r < bsz; ++r)
        for (std::size_t k = 0; k < classes; ++k) logits[r * classes + k] = p.head_b[k];
    detail::add_rows_times_transpose(hs.back().data(), p.head_w, bsz, logits.data());
    if (cache) {
        cache->x = x;
        cache->has_mask = train_mode && dropout_rate > 0.0;
        cache->mask = std::move(mask);
        cache->acts = std::move(acts);
        cache->cells = std::move(cells);
        cache->hs = std::move(hs);
        cache->train_mode = train_mode;
        cache->params_fingerprint = fingerprint(p);
    }
    return logits;
}

/// Gradients in the order of LSTMParams::tensors(), plus the input gradient
/// (B, T, N) and the upstream signal fed to the HT layers (B*T, 4H).
struct LSTMGradients {
    std::vector<Tensor> params;
    Tensor input;
    Tensor gate_input;
};

inline LSTMGradients backward_batch(const LSTMParams& p, const LSTMCache& cache, const Tensor& dlogits) {
    if (!cache.train_mode || cache.hs.empty()) {
        throw StateError("backward needs a cache from a train-mode forward pass");
    }
    if (cache.params_fingerprint != fingerprint(p)) {
        throw StateError("parameters changed since the cached forward pass");
    }
    const std::size_t bsz = cache.batch(), steps = cache.steps(), n = cache.x.dim(2), h = p.hidden_size();
    const std::size_t classes = p.classes();
    if (dlogits.size() != bsz * classes) {
        throw ShapeError("logit gradient has " + std::to_string(dlogits.size()) + " entries, expected " +
                         std::to_string(bsz * classes));
    }
    std::array<Tensor, 4> dV, db;
    for (int g = 0; g < 4; ++g) {
        dV[g] = Tensor(Shape{h, h});
        db[g] = Tensor(Shape{h});
    }
    Tensor dhead_w(Shape{classes, h}), dhead_b(Shape{classes});
    std::vector<double> dh(bsz * h, 0.0), dc(bsz * h, 0.0);
    const Tensor& h_last = cache.hs.back();
    for (std::size_t r = 0; r < bsz; ++r) {
        for (std::size_t k = 0; k < classes; ++k) {
            const double gk = dlogits[r * classes + k];
            dhead_b[k] += gk;
            for (std::size_t j = 0; j < h; ++j) {
                dhead_w[k * h + j] += gk * h_last[r * h + j];
                dh[r * h + j] += gk * p.head_w[k * h + j];
            }
        }
    }
    Tensor dz(Shape{bsz * steps, 4 * h});
    std::vector<double> da(bsz * 4 * h);
    for (std::size_t t = steps; t-- > 0;) {
        const Tensor& a = cache.acts[t];
        const Tensor& c = cache.cells[t + 1];
        const Tensor& c_prev = cache.cells[t];
        const Tensor& h_prev = cache.hs[t];
        for (std::size_t r = 0; r < bsz; ++r) {
            for (std::size_t i = 0; i < h; ++i) {
                const std::size_t s = r * h + i;
                const double* ar = a.data().data() + r * 4 * h;
                const double u = ar[i], f = ar[h + i], o = ar[2 * h + i], g = ar[3 * h + i];
                const double tc = std::tanh(c[s]);
                const double dcell = dc[s] + dh[s] * o * (1.0 - tc * tc);
                double* d = &da[r * 4 * h];
                d[i] = dcell * g * u * (1.0 - u);
                d[h + i] = dcell * c_prev[s] * f * (1.0 - f);
                d[2 * h + i] = dh[s] * tc * o * (1.0 - o);
                d[3 * h + i] = dcell * u * (1.0 - g * g);
                dc[s] = dcell * f;
            }
        }
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t g = 0; g < 4; ++g) {
            for (std::size_t r = 0; r < bsz; ++r) {
                for (std::size_t i = 0; i < h; ++i) {
                    const double di = da[r * 4 * h + g * h + i];
                    if (di == 0.0) continue;
                    db[g][i] += di;
                    double* vrow = &dV[g][i * h];
                    const double* prow = p.V[g].data().data() + i * h;
                    for (std::size_t j = 0; j < h; ++j) {
                        vrow[j] += di * h_prev[r * h + j];
                        dh[r * h + j] += di * prow[j];
                    }
                }
            }
        }
        for (std::size_t r = 0; r < bsz; ++r) {
            double* out = &dz[(r * steps + t) * 4 * h];
            for (std::size_t k = 0; k < 4 * h; ++k) {
                const double m = cache.has_mask ? cache.mask[(r * steps + t) * 4 * h + k] : 1.0;
                out[k] = da[r * 4 * h + k] * m;
            }
        }
    }

    LSTMGradients out;
    const Tensor x_rows = cache.x.reshaped(Shape{bsz * steps, n});
    Tensor dx(Shape{bsz * steps, n});
    if (p.concatenated()) {
        LayerGradients lg = backward(p.gates[0], x_rows, dz);
        for (auto& c : lg.components) out.params.push_back(std::move(c));
        dx = std::move(lg.input);
    } else {
        for (std::size_t g = 0; g < 4; ++g) {
            Tensor part(Shape{bsz * steps, h});
            for (std::size_t r = 0; r < bsz * steps; ++r) std::copy_n(&dz[r * 4 * h + g * h], h, &part[r * h]);
            LayerGradients lg = backward(p.gates[g], x_rows, part);
            for (auto& c : lg.components) out.params.push_back(std::move(c));
            dx += lg.input;
        }
    }
    for (auto& v : dV) out.params.push_back(std::move(v));
    for (auto& v : db) out.params.push_back(std::move(v));
    out.params.push_back(std::move(dhead_w));
    out.params.push_back(std::move(dhead_b));
    out.input = std::move(dx).reshaped(Shape{bsz, steps, n});
    out.gate_input = std::move(dz);
    return out;
}

inline Tensor stack_sequence(const std::vector<Tensor>& xs) {
    if (xs.empty()) {
        throw ArgumentError("empty sequence");
    }
    const std::size_t n = xs.front().size();
    Tensor x(Shape{1, xs.size(), n});
    for (std::size_t t = 0; t < xs.size(); ++t) {
        if (xs[t].size() != n) {
            throw ShapeError("sequence elements differ in length");
        }
        std::copy(xs[t].data().begin(), xs[t].data().end(), x.data().begin() + t * n);
    }
    return x;
}

/// Single-sequence forward; logits have length C.
inline Tensor sequence_forward(const LSTMParams& p, const std::vector<Tensor>& xs, double dropout_rate,
                               std::uint64_t rng_seed, bool train_mode, LSTMCache* cache = nullptr) {
    Rng rng(rng_seed);
    return forward_batch(p, stack_sequence(xs), dropout_rate, rng, train_mode, cache).reshaped(Shape{p.classes()});
}

inline LSTMGradients sequence_backward(const LSTMParams& p, const LSTMCache& cache, const Tensor& dlogits) {
    return backward_batch(p, cache, dlogits);
}

/// Hidden states h[1..T] of one sequence in eval mode, each length H.
inline std::vector<Tensor> hidden_trajectory(const LSTMParams& p, const std::vector<Tensor>& xs) {
    LSTMCache cache;
    Rng rng(0);
    forward_batch(p, stack_sequence(xs), 0.0, rng, false, &cache);
    std::vector<Tensor> out;
    for (std::size_t t = 1; t < cache.hs.size(); ++t) out.push_back(cache.hs[t].reshaped(Shape{p.hidden_size()}));
    return out;
}

/// Plain LSTM with dense input matrices, used as a reference for the HT model.
struct DenseLSTM {
    std::array<Tensor, 4> W; ///< (H, N)
    std::array<Tensor, 4> V;
    std::array<Tensor, 4> b;

    static DenseLSTM from(const LSTMParams& p) {
        DenseLSTM d;
        const std::size_t h = p.hidden_size(), n = p.input_size();
        for (std::size_t g = 0; g < 4; ++g) {
            if (p.concatenated()) {
                const Tensor full = as_matrix(p.gates[0]);
                d.W[g] = Tensor(Shape{h, n});
                std::copy_n(full.data().begin() + g * h * n, h * n, d.W[g].data().begin());
            } else {
                d.W[g] = as_matrix(p.gates[g]);
            }
            d.V[g] = p.V[g];
            d.b[g] = p.b[g];
        }
        return d;
    }

    std::vector<Tensor> hidden_trajectory(const std::vector<Tensor>& xs) const {
        const std::size_t h = b[0].size();
        std::vector<double> hs(h, 0.0), cs(h, 0.0);
        std::vector<Tensor> out;
        for (const Tensor& x : xs) {
            std::array<std::vector<double>, 4> z;
            for (std::size_t g = 0; g < 4; ++g) {
                z[g].assign(h, 0.0);
                const std::size_t n = W[g].dim(1);
                for (std::size_t i = 0; i < h; ++i) {
                    double acc = b[g][i];
                    for (std::size_t j = 0; j < n; ++j) acc += W[g][i * n + j] * x[j];
                    for (std::size_t j = 0; j < h; ++j) acc += V[g][i * h + j] * hs[j];
                    z[g][i] = acc;
                }
            }
            for (std::size_t i = 0; i < h; ++i) {
                const double u = detail::sigmoid(z[0][i]), f = detail::sigmoid(z[1][i]);
                const double o = detail::sigmoid(z[2][i]), g = std::tanh(z[3][i]);
                cs[i] = f * cs[i] + u * g;
                hs[i] = o * std::tanh(cs[i]);
            }
            out.push_back(Tensor::vector(hs));
        }
        return out;
    }
};

} // namespace htnn
