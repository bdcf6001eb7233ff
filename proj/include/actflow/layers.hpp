#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "actflow/numerics.hpp"
#include "actflow/tensor.hpp"

namespace actflow {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

/// Numerically stable softmax of a 1 x n row vector (max-subtracted).
inline Tensor softmax(const Tensor& logits) {
    if (logits.size() == 0) throw std::invalid_argument("softmax: empty input");
    Tensor out(logits.rows(), logits.cols());
    double mx = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
    return out;
}

/// log(sum(exp(v))) with max subtraction.
inline double log_sum_exp(const double* v, std::size_t n) {
    double mx = v[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(v[i] - mx);
    return mx + std::log(sum);
}

/// Reverse-mode softmax: given s = softmax(z) and dL/ds, returns dL/dz.
inline Tensor softmax_backward(const Tensor& value, const Tensor& upstream) {
    if (!value.same_shape(upstream))
        throw std::logic_error("softmax_backward: shape mismatch");
    double inner = 0.0;
    for (std::size_t i = 0; i < value.size(); ++i) inner += upstream[i] * value[i];
    Tensor dz(value.rows(), value.cols());
    for (std::size_t i = 0; i < value.size(); ++i) dz[i] = value[i] * (upstream[i] - inner);
    return dz;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

struct LinearCache {
    Tensor input;  // 1 x in
};

/// output = W * input + bias, with input and output as row vectors.
/// W is out x in, bias is 1 x out.
inline Tensor linear(const Tensor& input, const Tensor& w, const Tensor& bias,
                     LinearCache& cache) {
    if (input.rows() != 1 || input.cols() != w.cols())
        throw std::invalid_argument("linear: input must be 1x" + std::to_string(w.cols()) +
                                    ", got " + input.shape_str());
    if (bias.size() != 0 && (bias.rows() != 1 || bias.cols() != w.rows()))
        throw std::invalid_argument("linear: bias shape mismatch");
    Tensor out(1, w.rows());
    for (std::size_t o = 0; o < w.rows(); ++o)
        out[o] = dot(w.row_data(o), input.data(), w.cols()) + (bias.size() ? bias[o] : 0.0);
    cache.input = input;
    return out;
}

/// Bias-free overload for the affine maps written without a bias term.
inline Tensor linear(const Tensor& input, const Tensor& w, LinearCache& cache) {
    return linear(input, w, Tensor(), cache);
}

/// Accumulates into input_grads (may be null), w_grads and bias_grads
/// (bias_grads may be null for the bias-free form).
inline void linear_backward(const LinearCache& cache, const Tensor& w, const Tensor& upstream,
                            Tensor* input_grads, Tensor& w_grads, Tensor* bias_grads) {
    if (upstream.rows() != 1 || upstream.cols() != w.rows())
        throw std::logic_error("linear_backward: upstream shape mismatch");
    if (cache.input.cols() != w.cols())
        throw std::logic_error("linear_backward: stale cache");
    for (std::size_t o = 0; o < w.rows(); ++o) {
        const double u = upstream[o];
        double* wg = w_grads.row_data(o);
        const double* x = cache.input.data();
        for (std::size_t i = 0; i < w.cols(); ++i) wg[i] += u * x[i];
        if (bias_grads) (*bias_grads)[o] += u;
    }
    if (input_grads) {
        for (std::size_t o = 0; o < w.rows(); ++o) {
            const double u = upstream[o];
            const double* wr = w.row_data(o);
            for (std::size_t i = 0; i < w.cols(); ++i) (*input_grads)[i] += u * wr[i];
        }
    }
}

// ---------------------------------------------------------------------------
// LSTM / BiLSTM
// ---------------------------------------------------------------------------

/// Gate order throughout: [input, forget, cell-candidate, output].
/// Cell equations (standard formulation):
///   z = W_x x + W_h h_prev + b
///   i = sig(z_0..H)  f = sig(z_H..2H)  g = tanh(z_2H..3H)  o = sig(z_3H..4H)
///   c = f.c_prev + i.g,  h = o.tanh(c)
struct LstmWeights {
    Tensor w_x;   // 4H x D
    Tensor w_h;   // 4H x H
    Tensor bias;  // 1 x 4H

    std::size_t hidden_size() const { return w_h.cols(); }
    std::size_t input_size() const { return w_x.cols(); }

    template <typename F>
    void for_each_tensor(const std::string& prefix, F&& f) {
        f(prefix + ".w_x", w_x);
        f(prefix + ".w_h", w_h);
        f(prefix + ".bias", bias);
    }
};

/// Glorot weights, zero bias except forget gate bias 1.0.
inline LstmWeights lstm_init(std::size_t hidden, std::size_t input, Rng& rng) {
    LstmWeights w;
    w.w_x = glorot_init(4 * hidden, input, rng);
    w.w_h = glorot_init(4 * hidden, hidden, rng);
    w.bias = Tensor(1, 4 * hidden);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) w.bias[j] = 1.0;
    return w;
}

inline LstmWeights lstm_zeros_like(const LstmWeights& w) {
    LstmWeights g;
    g.w_x = Tensor(w.w_x.rows(), w.w_x.cols());
    g.w_h = Tensor(w.w_h.rows(), w.w_h.cols());
    g.bias = Tensor(1, w.bias.cols());
    return g;
}

struct LstmStepCache {
    std::size_t pos;  // timestep position in the input sequence
    Tensor h_prev;    // 1 x H
    Tensor c_prev;    // 1 x H
    Tensor gates;     // 1 x 4H, post-activation
    Tensor tanh_c;    // 1 x H
};

struct LstmCache {
    std::vector<LstmStepCache> steps;  // in scan order
};

/// One-directional scan from zero initial state. Hidden state rows are
/// written at their sequence positions regardless of scan direction.
inline Tensor lstm_scan(const Tensor& inputs, const LstmWeights& w, bool reverse,
                        LstmCache& cache) {
    const std::size_t T = inputs.rows();
    const std::size_t D = inputs.cols();
    const std::size_t H = w.hidden_size();
    if (T == 0) throw std::invalid_argument("lstm_scan: empty sequence");
    if (D != w.input_size())
        throw std::invalid_argument("lstm_scan: input dim " + std::to_string(D) +
                                    " != weight input dim " + std::to_string(w.input_size()));

    Tensor hidden(T, H);
    Tensor h_prev(1, H), c_prev(1, H);
    cache.steps.clear();
    cache.steps.reserve(T);

    for (std::size_t step = 0; step < T; ++step) {
        const std::size_t pos = reverse ? T - 1 - step : step;
        const double* x = inputs.row_data(pos);

        Tensor gates(1, 4 * H);
        for (std::size_t gidx = 0; gidx < 4 * H; ++gidx)
            gates[gidx] = w.bias[gidx] + dot(w.w_x.row_data(gidx), x, D) +
                          dot(w.w_h.row_data(gidx), h_prev.data(), H);

        Tensor c(1, H), tanh_c(1, H);
        for (std::size_t j = 0; j < H; ++j) {
            const double gi = sigmoid(gates[j]);
            const double gf = sigmoid(gates[H + j]);
            const double gg = std::tanh(gates[2 * H + j]);
            const double go = sigmoid(gates[3 * H + j]);
            gates[j] = gi;
            gates[H + j] = gf;
            gates[2 * H + j] = gg;
            gates[3 * H + j] = go;
            c[j] = gf * c_prev[j] + gi * gg;
            tanh_c[j] = std::tanh(c[j]);
            hidden(pos, j) = go * tanh_c[j];
        }

        cache.steps.push_back({pos, h_prev, c_prev, gates, tanh_c});
        for (std::size_t j = 0; j < H; ++j) h_prev[j] = hidden(pos, j);
        c_prev = c;
    }
    return hidden;
}

/// BPTT for a single scan. upstream is T x H at sequence positions;
/// input_grads (T x D) may be null when inputs are not trainable.
inline void lstm_scan_backward(const LstmCache& cache, const Tensor& inputs,
                               const LstmWeights& w, const Tensor& upstream,
                               Tensor* input_grads, LstmWeights& grads) {
    const std::size_t T = cache.steps.size();
    const std::size_t D = w.input_size();
    const std::size_t H = w.hidden_size();
    if (upstream.rows() != T || upstream.cols() != H)
        throw std::logic_error("lstm_scan_backward: upstream shape mismatch");
    if (inputs.rows() != T || inputs.cols() != D)
        throw std::logic_error("lstm_scan_backward: stale cache");

    Tensor dh_carry(1, H), dc_carry(1, H), dz(1, 4 * H);
    for (std::size_t step = T; step-- > 0;) {
        const LstmStepCache& s = cache.steps[step];
        const double* x = inputs.row_data(s.pos);

        for (std::size_t j = 0; j < H; ++j) {
            const double gi = s.gates[j];
            const double gf = s.gates[H + j];
            const double gg = s.gates[2 * H + j];
            const double go = s.gates[3 * H + j];
            const double tc = s.tanh_c[j];

            const double dh = upstream(s.pos, j) + dh_carry[j];
            const double dout = dh * tc;
            const double dc = dc_carry[j] + dh * go * (1.0 - tc * tc);

            dz[j] = dc * gg * gi * (1.0 - gi);              // input gate
            dz[H + j] = dc * s.c_prev[j] * gf * (1.0 - gf);  // forget gate
            dz[2 * H + j] = dc * gi * (1.0 - gg * gg);       // candidate
            dz[3 * H + j] = dout * go * (1.0 - go);          // output gate
            dc_carry[j] = dc * gf;
        }

        for (std::size_t gidx = 0; gidx < 4 * H; ++gidx) {
            const double u = dz[gidx];
            if (u == 0.0) continue;
            double* wxg = grads.w_x.row_data(gidx);
            for (std::size_t i = 0; i < D; ++i) wxg[i] += u * x[i];
            double* whg = grads.w_h.row_data(gidx);
            for (std::size_t j = 0; j < H; ++j) whg[j] += u * s.h_prev[j];
            grads.bias[gidx] += u;
        }

        dh_carry.fill(0.0);
        for (std::size_t gidx = 0; gidx < 4 * H; ++gidx) {
            const double u = dz[gidx];
            if (u == 0.0) continue;
            const double* whr = w.w_h.row_data(gidx);
            for (std::size_t j = 0; j < H; ++j) dh_carry[j] += u * whr[j];
        }
        if (input_grads) {
            double* dx = input_grads->row_data(s.pos);
            for (std::size_t gidx = 0; gidx < 4 * H; ++gidx) {
                const double u = dz[gidx];
                if (u == 0.0) continue;
                const double* wxr = w.w_x.row_data(gidx);
                for (std::size_t i = 0; i < D; ++i) dx[i] += u * wxr[i];
            }
        }
    }
}

struct BiLstmCache {
    Tensor inputs;  // T x D
    LstmCache fwd, bwd;
};

/// hidden_states[i] = concat(forward hidden at i, backward hidden at i).
/// Both scans start from zero state. Returns T x 2H.
inline Tensor bilstm_forward(const Tensor& inputs, const LstmWeights& fwd,
                             const LstmWeights& bwd, BiLstmCache& cache) {
    if (inputs.rows() == 0) throw std::invalid_argument("bilstm_forward: empty sequence");
    if (fwd.hidden_size() != bwd.hidden_size())
        throw std::invalid_argument("bilstm_forward: direction hidden sizes differ");
    cache.inputs = inputs;
    Tensor hf = lstm_scan(inputs, fwd, false, cache.fwd);
    Tensor hb = lstm_scan(inputs, bwd, true, cache.bwd);
    const std::size_t T = inputs.rows(), H = fwd.hidden_size();
    Tensor out(T, 2 * H);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < H; ++j) {
            out(t, j) = hf(t, j);
            out(t, H + j) = hb(t, j);
        }
    return out;
}

inline void bilstm_backward(const BiLstmCache& cache, const LstmWeights& fwd,
                            const LstmWeights& bwd, const Tensor& upstream,
                            Tensor* input_grads, LstmWeights& fwd_grads,
                            LstmWeights& bwd_grads) {
    const std::size_t T = cache.inputs.rows(), H = fwd.hidden_size();
    if (upstream.rows() != T || upstream.cols() != 2 * H)
        throw std::logic_error("bilstm_backward: upstream shape mismatch");
    Tensor uf(T, H), ub(T, H);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < H; ++j) {
            uf(t, j) = upstream(t, j);
            ub(t, j) = upstream(t, H + j);
        }
    lstm_scan_backward(cache.fwd, cache.inputs, fwd, uf, input_grads, fwd_grads);
    lstm_scan_backward(cache.bwd, cache.inputs, bwd, ub, input_grads, bwd_grads);
}

// ---------------------------------------------------------------------------
// Attention pooling
// ---------------------------------------------------------------------------

struct AttentionWeights {
    Tensor w;  // 1 x 2H, scalar score per timestep

    template <typename F>
    void for_each_tensor(const std::string& prefix, F&& f) { f(prefix + ".w", w); }
};

struct AttentionCache {
    Tensor hidden;   // T x 2H
    Tensor scores;   // 1 x T, tanh outputs
    Tensor weights;  // 1 x T, softmax of scores
};

/// e_i = tanh(w . h_i), v = softmax(e), pooled = sum_i v_i h_i.
inline Tensor attention_pool(const Tensor& hidden, const AttentionWeights& w,
                             AttentionCache& cache) {
    const std::size_t T = hidden.rows(), W = hidden.cols();
    if (T == 0) throw std::invalid_argument("attention_pool: empty sequence");
    if (w.w.rows() != 1 || w.w.cols() != W)
        throw std::invalid_argument("attention_pool: weight shape mismatch");

    Tensor scores(1, T);
    for (std::size_t t = 0; t < T; ++t)
        scores[t] = std::tanh(dot(w.w.data(), hidden.row_data(t), W));
    Tensor weights = softmax(scores);

    Tensor pooled(1, W);
    for (std::size_t t = 0; t < T; ++t) {
        const double v = weights[t];
        const double* h = hidden.row_data(t);
        for (std::size_t j = 0; j < W; ++j) pooled[j] += v * h[j];
    }
    cache.hidden = hidden;
    cache.scores = scores;
    cache.weights = weights;
    return pooled;
}

/// Accumulates into hidden_grads (T x 2H) and w_grads.
inline void attention_backward(const AttentionCache& cache, const AttentionWeights& w,
                               const Tensor& upstream, Tensor& hidden_grads,
                               AttentionWeights& w_grads) {
    const std::size_t T = cache.hidden.rows(), W = cache.hidden.cols();
    if (upstream.rows() != 1 || upstream.cols() != W)
        throw std::logic_error("attention_backward: upstream shape mismatch");
    if (hidden_grads.rows() != T || hidden_grads.cols() != W)
        throw std::logic_error("attention_backward: hidden_grads shape mismatch");

    // pooled = sum v_t h_t
    Tensor dv(1, T);
    for (std::size_t t = 0; t < T; ++t) {
        dv[t] = dot(upstream.data(), cache.hidden.row_data(t), W);
        const double v = cache.weights[t];
        double* hg = hidden_grads.row_data(t);
        for (std::size_t j = 0; j < W; ++j) hg[j] += v * upstream[j];
    }
    // through softmax, then tanh score
    Tensor de = softmax_backward(cache.weights, dv);
    for (std::size_t t = 0; t < T; ++t) {
        const double e = cache.scores[t];
        const double da = de[t] * (1.0 - e * e);
        const double* h = cache.hidden.row_data(t);
        double* hg = hidden_grads.row_data(t);
        for (std::size_t j = 0; j < W; ++j) {
            w_grads.w[j] += da * h[j];
            hg[j] += da * w.w[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Convolution with max-over-time pooling
// ---------------------------------------------------------------------------

struct ConvFilter {
    std::size_t window;  // h
    Tensor weight;       // h x k
    Tensor bias;         // 1 x 1
};

struct ConvFilterBank {
    std::vector<ConvFilter> filters;

    std::size_t feature_count() const { return filters.size(); }

    std::size_t max_window() const {
        std::size_t m = 1;
        for (const auto& f : filters) m = std::max(m, f.window);
        return m;
    }

    template <typename F>
    void for_each_tensor(const std::string& prefix, F&& f) {
        for (std::size_t i = 0; i < filters.size(); ++i) {
            const std::string base = prefix + ".f" + std::to_string(i);
            f(base + ".weight", filters[i].weight);
            f(base + ".bias", filters[i].bias);
        }
    }
};

/// windows/counts as in the configuration, e.g. windows {3,4,5} counts {11,11,10}.
inline ConvFilterBank conv_bank_init(const std::vector<std::size_t>& windows,
                                     const std::vector<std::size_t>& counts,
                                     std::size_t token_dim, Rng& rng) {
    if (windows.size() != counts.size())
        throw std::invalid_argument("conv_bank_init: windows/counts length mismatch");
    ConvFilterBank bank;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        if (windows[w] == 0) throw std::invalid_argument("conv_bank_init: zero window");
        for (std::size_t c = 0; c < counts[w]; ++c) {
            ConvFilter f;
            f.window = windows[w];
            f.weight = glorot_init(windows[w], token_dim, rng);
            f.bias = Tensor(1, 1);
            bank.filters.push_back(std::move(f));
        }
    }
    return bank;
}

inline ConvFilterBank conv_bank_zeros_like(const ConvFilterBank& bank) {
    ConvFilterBank g;
    for (const auto& f : bank.filters) {
        ConvFilter z;
        z.window = f.window;
        z.weight = Tensor(f.weight.rows(), f.weight.cols());
        z.bias = Tensor(1, 1);
        g.filters.push_back(std::move(z));
    }
    return g;
}

struct ConvCache {
    Tensor padded;                      // n' x k, right-padded with zero rows
    std::size_t orig_rows = 0;
    std::vector<std::size_t> best_pos;  // winning window position per filter
    std::vector<double> best_act;       // tanh response at the winner
};

/// Per filter: c_j = tanh(sum(W . E[j:j+h-1]) + b) over window positions,
/// output = max_j c_j (ties to the lowest position). Features concatenate in
/// bank order. Utterances shorter than the largest window are zero-padded on
/// the right.
inline Tensor conv_max_pool(const Tensor& tokens, const ConvFilterBank& bank,
                            ConvCache& cache) {
    const std::size_t n = tokens.rows(), k = tokens.cols();
    if (n == 0) throw std::invalid_argument("conv_max_pool: empty utterance");
    for (const auto& f : bank.filters)
        if (f.weight.cols() != k)
            throw std::invalid_argument("conv_max_pool: filter width " +
                                        std::to_string(f.weight.cols()) +
                                        " != token dim " + std::to_string(k));

    const std::size_t padded_rows = std::max(n, bank.max_window());
    Tensor padded(padded_rows, k);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < k; ++c) padded(r, c) = tokens(r, c);

    const std::size_t m = bank.feature_count();
    Tensor features(1, m);
    cache.best_pos.assign(m, 0);
    cache.best_act.assign(m, 0.0);

    for (std::size_t fi = 0; fi < m; ++fi) {
        const ConvFilter& f = bank.filters[fi];
        const std::size_t h = f.window;
        const std::size_t positions = padded_rows - h + 1;
        double best = -2.0;  // tanh range is (-1, 1)
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < positions; ++j) {
            double a = f.bias[0];
            for (std::size_t r = 0; r < h; ++r)
                a += dot(f.weight.row_data(r), padded.row_data(j + r), k);
            const double c = std::tanh(a);
            if (c > best) {
                best = c;
                best_j = j;
            }
        }
        features[fi] = best;
        cache.best_pos[fi] = best_j;
        cache.best_act[fi] = best;
    }
    cache.padded = std::move(padded);
    cache.orig_rows = n;
    return features;
}

/// Gradient routes only to the winning window position of each filter.
/// token_grads (n x k, original unpadded rows) may be null.
inline void conv_backward(const ConvCache& cache, const ConvFilterBank& bank,
                          const Tensor& upstream, Tensor* token_grads,
                          ConvFilterBank& grads) {
    const std::size_t m = bank.feature_count();
    if (upstream.rows() != 1 || upstream.cols() != m)
        throw std::logic_error("conv_backward: upstream shape mismatch");
    if (cache.best_pos.size() != m)
        throw std::logic_error("conv_backward: stale cache");
    const std::size_t k = cache.padded.cols();

    for (std::size_t fi = 0; fi < m; ++fi) {
        const double u = upstream[fi];
        if (u == 0.0) continue;
        const ConvFilter& f = bank.filters[fi];
        const double act = cache.best_act[fi];
        const double da = u * (1.0 - act * act);
        const std::size_t j = cache.best_pos[fi];
        ConvFilter& g = grads.filters[fi];
        for (std::size_t r = 0; r < f.window; ++r) {
            const double* x = cache.padded.row_data(j + r);
            double* wg = g.weight.row_data(r);
            for (std::size_t c = 0; c < k; ++c) wg[c] += da * x[c];
            if (token_grads && j + r < cache.orig_rows) {
                double* tg = token_grads->row_data(j + r);
                const double* wr = f.weight.row_data(r);
                for (std::size_t c = 0; c < k; ++c) tg[c] += da * wr[c];
            }
        }
        g.bias[0] += da;
    }
}

}  // namespace actflow
