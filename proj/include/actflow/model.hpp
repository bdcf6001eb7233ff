#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "actflow/encoders.hpp"
#include "actflow/layers.hpp"
#include "actflow/numerics.hpp"
#include "actflow/sample.hpp"
#include "actflow/tensor.hpp"

namespace actflow {

/// Ablation grid switch set. alpha balances the two task losses:
/// alpha = 1 is the act-only single task, alpha = 0 utterance-only.
struct VariantConfig {
    bool use_act_encoder = true;
    bool use_autoencoder = true;
    double alpha = 0.5;
};

struct ModelDims {
    std::size_t act_count = 9;     // C_a
    std::size_t vocab_size = 0;    // |V|
    std::size_t token_dim = 300;   // k
    std::size_t hidden = 80;       // H per direction
    std::vector<std::size_t> conv_windows{3, 4, 5};
    std::vector<std::size_t> conv_counts{11, 11, 10};
    std::size_t autoenc_hidden = 128;  // d
    std::size_t autoenc_out = 160;     // s
    std::size_t candidate_count = 0;   // C_u
    bool trainable_embeddings = false;
    double recon_weight = 0.0;  // optional auxiliary reconstruction term

    std::size_t encoder_dim() const { return 2 * hidden; }
    std::size_t concat_dim() const { return 3 * encoder_dim(); }
    std::size_t conv_features() const {
        return std::accumulate(conv_counts.begin(), conv_counts.end(), std::size_t{0});
    }
    std::size_t head_input_dim(const VariantConfig& v) const {
        return v.use_autoencoder ? autoenc_out : concat_dim();
    }
};

/// Every trainable tensor of the model. Enumeration order is fixed; the
/// optimizer, the finite-difference oracle and the checkpoint writer all
/// rely on it. Token embeddings join the trainable set only when the
/// trainable_embeddings switch is on; they are stored here either way so a
/// params value is self-contained.
struct ModelParams {
    ModelDims dims;
    VariantConfig variant;

    SequenceEncoderParams act_enc;   // input: one-hot acts (C_a)
    HistoryEncoderParams hist_enc;   // conv(k) features -> BiLSTM(m)
    SequenceEncoderParams user_enc;  // input: token embeddings (k)
    Tensor enc_w;                    // d x 3*2H
    Tensor dec_w;                    // s x d
    Tensor recon_w;                  // 3*2H x d, present iff recon_weight > 0
    Tensor act_head;                 // C_a x head_dim
    Tensor utt_head;                 // C_u x head_dim
    Tensor embeddings;               // |V| x k

    template <typename F>
    void for_each_tensor(F&& f) {
        act_enc.for_each_tensor("act_enc", f);
        hist_enc.for_each_tensor("hist_enc", f);
        user_enc.for_each_tensor("user_enc", f);
        f(std::string("autoenc.enc_w"), enc_w);
        f(std::string("autoenc.dec_w"), dec_w);
        if (recon_w.size() > 0) f(std::string("autoenc.recon_w"), recon_w);
        f(std::string("head.act"), act_head);
        f(std::string("head.utt"), utt_head);
        if (dims.trainable_embeddings) f(std::string("embeddings"), embeddings);
    }

    /// Includes the frozen embedding matrix; used by persistence.
    template <typename F>
    void for_each_tensor_persisted(F&& f) {
        for_each_tensor(f);
        if (!dims.trainable_embeddings) f(std::string("embeddings"), embeddings);
    }
};

/// Glorot weights everywhere, zero biases except the LSTM forget gates.
/// The draw order below is fixed so a seed fully determines the model.
inline ModelParams init_model_params(const ModelDims& dims, const VariantConfig& variant,
                                     Rng& rng, Tensor embeddings) {
    if (dims.act_count == 0 || dims.candidate_count == 0)
        throw std::invalid_argument("init_model_params: empty act or candidate set");
    if (embeddings.rows() != dims.vocab_size || embeddings.cols() != dims.token_dim)
        throw std::invalid_argument("init_model_params: embedding matrix shape mismatch");

    ModelParams p;
    p.dims = dims;
    p.variant = variant;
    p.act_enc = sequence_encoder_init(dims.hidden, dims.act_count, rng);
    p.hist_enc.conv = conv_bank_init(dims.conv_windows, dims.conv_counts, dims.token_dim, rng);
    p.hist_enc.seq = sequence_encoder_init(dims.hidden, dims.conv_features(), rng);
    p.user_enc = sequence_encoder_init(dims.hidden, dims.token_dim, rng);
    p.enc_w = glorot_init(dims.autoenc_hidden, dims.concat_dim(), rng);
    p.dec_w = glorot_init(dims.autoenc_out, dims.autoenc_hidden, rng);
    if (dims.recon_weight > 0.0)
        p.recon_w = glorot_init(dims.concat_dim(), dims.autoenc_hidden, rng);
    const std::size_t head_dim = dims.head_input_dim(variant);
    p.act_head = glorot_init(dims.act_count, head_dim, rng);
    p.utt_head = glorot_init(dims.candidate_count, head_dim, rng);
    p.embeddings = std::move(embeddings);
    return p;
}

inline ModelParams zeros_like(const ModelParams& p) {
    ModelParams g;
    g.dims = p.dims;
    g.variant = p.variant;
    g.act_enc = sequence_encoder_zeros_like(p.act_enc);
    g.hist_enc.conv = conv_bank_zeros_like(p.hist_enc.conv);
    g.hist_enc.seq = sequence_encoder_zeros_like(p.hist_enc.seq);
    g.user_enc = sequence_encoder_zeros_like(p.user_enc);
    g.enc_w = Tensor(p.enc_w.rows(), p.enc_w.cols());
    g.dec_w = Tensor(p.dec_w.rows(), p.dec_w.cols());
    if (p.recon_w.size() > 0) g.recon_w = Tensor(p.recon_w.rows(), p.recon_w.cols());
    g.act_head = Tensor(p.act_head.rows(), p.act_head.cols());
    g.utt_head = Tensor(p.utt_head.rows(), p.utt_head.cols());
    g.embeddings = Tensor(p.embeddings.rows(), p.embeddings.cols());
    return g;
}

// ---------------------------------------------------------------------------
// Space transformation (the DialogAct2Vec autoencoder)
// ---------------------------------------------------------------------------

struct EncodedTriple {
    Tensor r_a, r_u, r_c;  // 1 x 2H each
};

struct TransformCache {
    Tensor r_input;     // 1 x 3*2H
    Tensor hidden_sig;  // 1 x d, sigmoid(enc_w . r_input)
};

/// r_input = [r_a, r_u, r_c] (r_a zeroed when the act encoder is off),
/// v = dec_w . sigmoid(enc_w . r_input). Without the autoencoder the
/// concatenation passes through unchanged and heads read 3*2H inputs.
inline Tensor transform(const EncodedTriple& triple, const ModelParams& p,
                        const VariantConfig& variant, TransformCache& cache) {
    const std::size_t e = triple.r_u.cols();
    if (triple.r_a.cols() != e || triple.r_c.cols() != e)
        throw std::invalid_argument("transform: encoder output dims differ");
    Tensor r_input(1, 3 * e);
    for (std::size_t j = 0; j < e; ++j) {
        r_input[j] = variant.use_act_encoder ? triple.r_a[j] : 0.0;
        r_input[e + j] = triple.r_u[j];
        r_input[2 * e + j] = triple.r_c[j];
    }
    cache.r_input = r_input;

    if (!variant.use_autoencoder) return r_input;

    if (p.enc_w.cols() != 3 * e)
        throw std::invalid_argument("transform: enc_w expects input dim " +
                                    std::to_string(p.enc_w.cols()));
    Tensor sig(1, p.enc_w.rows());
    for (std::size_t o = 0; o < p.enc_w.rows(); ++o)
        sig[o] = sigmoid(dot(p.enc_w.row_data(o), r_input.data(), r_input.size()));
    cache.hidden_sig = sig;

    Tensor v(1, p.dec_w.rows());
    for (std::size_t o = 0; o < p.dec_w.rows(); ++o)
        v[o] = dot(p.dec_w.row_data(o), sig.data(), sig.size());
    return v;
}

/// Maps dv back to the concatenated input gradient; accumulates enc/dec
/// weight grads. recon_upstream carries the optional reconstruction term.
inline Tensor transform_backward(const TransformCache& cache, const ModelParams& p,
                                 const VariantConfig& variant, const Tensor& upstream,
                                 ModelParams& grads) {
    if (!variant.use_autoencoder) return upstream;

    const Tensor& sig = cache.hidden_sig;
    Tensor dsig(1, sig.cols());
    for (std::size_t o = 0; o < p.dec_w.rows(); ++o) {
        const double u = upstream[o];
        double* wg = grads.dec_w.row_data(o);
        const double* wr = p.dec_w.row_data(o);
        for (std::size_t j = 0; j < sig.cols(); ++j) {
            wg[j] += u * sig[j];
            dsig[j] += u * wr[j];
        }
    }

    Tensor dr_input(1, cache.r_input.cols());
    for (std::size_t o = 0; o < p.enc_w.rows(); ++o) {
        const double dh = dsig[o] * sig[o] * (1.0 - sig[o]);
        if (dh == 0.0) continue;
        double* wg = grads.enc_w.row_data(o);
        const double* wr = p.enc_w.row_data(o);
        const double* x = cache.r_input.data();
        for (std::size_t j = 0; j < cache.r_input.cols(); ++j) {
            wg[j] += dh * x[j];
            dr_input[j] += dh * wr[j];
        }
    }
    return dr_input;
}

// ---------------------------------------------------------------------------
// Prediction heads
// ---------------------------------------------------------------------------

struct ActPrediction {
    Tensor probs;               // 1 x C_a
    std::size_t predicted = 0;  // argmax, ties to the lowest index
};

inline ActPrediction predict_act(const Tensor& v, const Tensor& act_head) {
    if (v.cols() != act_head.cols())
        throw std::invalid_argument("predict_act: head input dim mismatch");
    Tensor logits(1, act_head.rows());
    for (std::size_t o = 0; o < act_head.rows(); ++o)
        logits[o] = dot(act_head.row_data(o), v.data(), v.size());
    ActPrediction out;
    out.probs = softmax(logits);
    out.predicted = argmax(out.probs.data(), out.probs.size());
    return out;
}

struct RankedUtterance {
    std::size_t id;
    double score;
};

/// Top-k candidate ids by softmax probability, descending; ties favour the
/// lower id.
inline std::vector<RankedUtterance> predict_utterance(const Tensor& v, const Tensor& utt_head,
                                                      std::size_t k) {
    if (v.cols() != utt_head.cols())
        throw std::invalid_argument("predict_utterance: head input dim mismatch");
    const std::size_t c = utt_head.rows();
    if (k < 1 || k > c) throw std::invalid_argument("predict_utterance: k out of range");

    Tensor logits(1, c);
    for (std::size_t o = 0; o < c; ++o)
        logits[o] = dot(utt_head.row_data(o), v.data(), v.size());
    Tensor probs = softmax(logits);

    std::vector<std::size_t> ids(c);
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });

    std::vector<RankedUtterance> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back({ids[i], probs[ids[i]]});
    return out;
}

// ---------------------------------------------------------------------------
// Joint loss
// ---------------------------------------------------------------------------

/// Per-sample head outputs paired with gold targets, as produced by the
/// forward pass.
struct SampleEval {
    Tensor act_probs;
    Tensor utt_probs;
    std::size_t gold_act = 0;
    int gold_utt_id = -1;  // absent golds are excluded from the second term
};

/// Mean over the batch of alpha * act cross-entropy + (1-alpha) * utterance
/// cross-entropy. Samples whose gold utterance is missing from the candidate
/// set contribute only the act term.
inline double joint_loss(const std::vector<SampleEval>& batch, const VariantConfig& variant) {
    if (batch.empty()) throw std::invalid_argument("joint_loss: empty batch");
    double total = 0.0;
    for (const SampleEval& s : batch) {
        if (s.gold_act >= s.act_probs.size())
            throw std::invalid_argument("joint_loss: gold act index out of range");
        total += -variant.alpha * std::log(s.act_probs[s.gold_act]);
        if (s.gold_utt_id >= 0) {
            if (static_cast<std::size_t>(s.gold_utt_id) >= s.utt_probs.size())
                throw std::invalid_argument("joint_loss: gold utterance id out of range");
            total += -(1.0 - variant.alpha) * std::log(s.utt_probs[s.gold_utt_id]);
        }
    }
    return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Assembled forward / backward
// ---------------------------------------------------------------------------

struct ForwardCache {
    ActEncoderCache act;
    HistoryEncoderCache hist;
    UserEncoderCache user;
    TransformCache trans;
    Tensor v;
    Tensor act_probs;
    Tensor utt_probs;
    Tensor recon_diff;  // recon - r_input, when the aux term is active
};

struct ForwardResult {
    double loss = 0.0;
    ActPrediction act;
    Tensor utt_probs;  // 1 x C_u
    SampleEval eval;
};

/// Full forward pass: encoders -> transform -> heads -> per-sample loss.
inline ForwardResult model_forward(const TurnSample& sample, const ModelParams& p,
                                   const VariantConfig& variant, ForwardCache& cache) {
    EncodedTriple triple;
    if (variant.use_act_encoder) {
        triple.r_a = encode_act_sequence(sample.hist_acts, p.dims.act_count, p.act_enc, cache.act);
    } else {
        cache.act = ActEncoderCache{};
        triple.r_a = Tensor(1, p.dims.encoder_dim());
    }
    triple.r_u = encode_history(sample.hist_utts, p.embeddings, p.hist_enc, cache.hist);
    triple.r_c = encode_user_utterance(sample.current_user_utt, p.embeddings, p.user_enc,
                                       cache.user);

    cache.v = transform(triple, p, variant, cache.trans);

    ForwardResult out;
    out.act = predict_act(cache.v, p.act_head);
    cache.act_probs = out.act.probs;

    Tensor utt_logits(1, p.utt_head.rows());
    for (std::size_t o = 0; o < p.utt_head.rows(); ++o)
        utt_logits[o] = dot(p.utt_head.row_data(o), cache.v.data(), cache.v.size());
    out.utt_probs = softmax(utt_logits);
    cache.utt_probs = out.utt_probs;

    // stable cross-entropies straight from the logits
    Tensor act_logits(1, p.act_head.rows());
    for (std::size_t o = 0; o < p.act_head.rows(); ++o)
        act_logits[o] = dot(p.act_head.row_data(o), cache.v.data(), cache.v.size());
    if (sample.gold_act >= p.dims.act_count)
        throw std::invalid_argument("model_forward: gold act index out of range");
    double loss = variant.alpha *
                  (log_sum_exp(act_logits.data(), act_logits.size()) - act_logits[sample.gold_act]);
    if (sample.gold_utt_id >= 0) {
        if (static_cast<std::size_t>(sample.gold_utt_id) >= p.utt_head.rows())
            throw std::invalid_argument("model_forward: gold utterance id out of range");
        loss += (1.0 - variant.alpha) *
                (log_sum_exp(utt_logits.data(), utt_logits.size()) -
                 utt_logits[sample.gold_utt_id]);
    }

    if (p.dims.recon_weight > 0.0 && variant.use_autoencoder) {
        const Tensor& f = cache.trans.hidden_sig;
        Tensor diff(1, p.recon_w.rows());
        for (std::size_t o = 0; o < p.recon_w.rows(); ++o)
            diff[o] = dot(p.recon_w.row_data(o), f.data(), f.size()) - cache.trans.r_input[o];
        double sq = 0.0;
        for (std::size_t i = 0; i < diff.size(); ++i) sq += diff[i] * diff[i];
        loss += p.dims.recon_weight * 0.5 * sq;
        cache.recon_diff = std::move(diff);
    }

    out.loss = loss;
    out.eval = SampleEval{out.act.probs, out.utt_probs, sample.gold_act, sample.gold_utt_id};
    return out;
}

/// Reverse pass over everything model_forward touched; accumulates into
/// grads (zeros_like the params). Tensors unreachable under the variant are
/// left untouched, i.e. with zero gradients.
inline void model_backward(const TurnSample& sample, const ModelParams& p,
                           const VariantConfig& variant, const ForwardCache& cache,
                           ModelParams& grads) {
    const std::size_t head_dim = cache.v.cols();
    Tensor dv(1, head_dim);

    // fused softmax cross-entropy: dlogits = weight * (probs - onehot)
    for (std::size_t o = 0; o < p.act_head.rows(); ++o) {
        const double dl =
            variant.alpha * (cache.act_probs[o] - (o == sample.gold_act ? 1.0 : 0.0));
        if (dl == 0.0) continue;
        double* hg = grads.act_head.row_data(o);
        const double* hr = p.act_head.row_data(o);
        const double* v = cache.v.data();
        for (std::size_t j = 0; j < head_dim; ++j) {
            hg[j] += dl * v[j];
            dv[j] += dl * hr[j];
        }
    }
    if (sample.gold_utt_id >= 0) {
        const std::size_t gold = static_cast<std::size_t>(sample.gold_utt_id);
        for (std::size_t o = 0; o < p.utt_head.rows(); ++o) {
            const double dl =
                (1.0 - variant.alpha) * (cache.utt_probs[o] - (o == gold ? 1.0 : 0.0));
            if (dl == 0.0) continue;
            double* hg = grads.utt_head.row_data(o);
            const double* hr = p.utt_head.row_data(o);
            const double* v = cache.v.data();
            for (std::size_t j = 0; j < head_dim; ++j) {
                hg[j] += dl * v[j];
                dv[j] += dl * hr[j];
            }
        }
    }

    Tensor dr_input;
    if (p.dims.recon_weight > 0.0 && variant.use_autoencoder) {
        // recon = recon_w . f + identity residual against r_input
        const Tensor& f = cache.trans.hidden_sig;
        Tensor dsig(1, f.cols());
        dr_input = Tensor(1, cache.trans.r_input.cols());
        for (std::size_t o = 0; o < p.recon_w.rows(); ++o) {
            const double dd = p.dims.recon_weight * cache.recon_diff[o];
            double* wg = grads.recon_w.row_data(o);
            const double* wr = p.recon_w.row_data(o);
            for (std::size_t j = 0; j < f.cols(); ++j) {
                wg[j] += dd * f[j];
                dsig[j] += dd * wr[j];
            }
            dr_input[o] -= dd;
        }
        // route the sigmoid-path part through enc_w as transform_backward does
        for (std::size_t o = 0; o < p.enc_w.rows(); ++o) {
            const double dh = dsig[o] * f[o] * (1.0 - f[o]);
            if (dh == 0.0) continue;
            double* wg = grads.enc_w.row_data(o);
            const double* wr = p.enc_w.row_data(o);
            const double* x = cache.trans.r_input.data();
            for (std::size_t j = 0; j < cache.trans.r_input.cols(); ++j) {
                wg[j] += dh * x[j];
                dr_input[j] += dh * wr[j];
            }
        }
        Tensor main_path = transform_backward(cache.trans, p, variant, dv, grads);
        for (std::size_t j = 0; j < dr_input.size(); ++j) dr_input[j] += main_path[j];
    } else {
        dr_input = transform_backward(cache.trans, p, variant, dv, grads);
    }

    const std::size_t e = p.dims.encoder_dim();
    Tensor dr_a(1, e), dr_u(1, e), dr_c(1, e);
    for (std::size_t j = 0; j < e; ++j) {
        dr_a[j] = dr_input[j];
        dr_u[j] = dr_input[e + j];
        dr_c[j] = dr_input[2 * e + j];
    }

    Tensor* emb_grads = p.dims.trainable_embeddings ? &grads.embeddings : nullptr;
    if (variant.use_act_encoder)
        encode_act_sequence_backward(cache.act, p.act_enc, dr_a, grads.act_enc);
    encode_history_backward(cache.hist, p.hist_enc, dr_u, grads.hist_enc, emb_grads);
    encode_user_utterance_backward(cache.user, p.user_enc, dr_c, grads.user_enc, emb_grads);
}

/// Forward + backward in one call, as the trainer consumes it.
inline ForwardResult forward_backward(const TurnSample& sample, const ModelParams& p,
                                      const VariantConfig& variant, ModelParams& grads) {
    ForwardCache cache;
    ForwardResult result = model_forward(sample, p, variant, cache);
    model_backward(sample, p, variant, cache, grads);
    return result;
}

}  // namespace actflow
