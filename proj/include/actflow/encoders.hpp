#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "actflow/layers.hpp"
#include "actflow/tensor.hpp"

namespace actflow {

/// Ordered act label set with dense indices in [0, C).
class ActVocabulary {
public:
    std::size_t add(const std::string& label) {
        auto it = index_.find(label);
        if (it != index_.end()) return it->second;
        labels_.push_back(label);
        index_.emplace(label, labels_.size() - 1);
        return labels_.size() - 1;
    }

    std::optional<std::size_t> find(const std::string& label) const {
        auto it = index_.find(label);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& label(std::size_t i) const { return labels_.at(i); }
    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t size() const { return labels_.size(); }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Ordered token set plus the pretrained embedding matrix (|V| x k).
/// Tokens absent from the pretrained file keep an all-zero row and are
/// flagged out-of-vocabulary.
class TokenVocabulary {
public:
    std::size_t add(const std::string& token) {
        auto it = index_.find(token);
        if (it != index_.end()) return it->second;
        tokens_.push_back(token);
        index_.emplace(token, tokens_.size() - 1);
        oov_.push_back(false);
        return tokens_.size() - 1;
    }

    std::optional<std::size_t> find(const std::string& token) const {
        auto it = index_.find(token);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& token(std::size_t i) const { return tokens_.at(i); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::size_t size() const { return tokens_.size(); }

    bool oov_flag(std::size_t i) const { return i < oov_.size() && oov_[i]; }

    Tensor embeddings;       // |V| x k
    std::vector<bool> oov_;  // per-token missing-from-pretrained flag

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Token-index sequence to an n x k matrix of embedding rows.
inline Tensor embed_tokens(const std::vector<std::size_t>& tokens, const Tensor& embeddings) {
    Tensor out(tokens.size(), embeddings.cols());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t] >= embeddings.rows())
            throw std::invalid_argument("embed_tokens: token index out of range");
        const double* src = embeddings.row_data(tokens[t]);
        double* dst = out.row_data(t);
        for (std::size_t c = 0; c < embeddings.cols(); ++c) dst[c] = src[c];
    }
    return out;
}

/// Scatter-add of sequence gradients back onto embedding rows.
inline void embed_tokens_backward(const std::vector<std::size_t>& tokens,
                                  const Tensor& upstream, Tensor& embedding_grads) {
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        double* dst = embedding_grads.row_data(tokens[t]);
        const double* src = upstream.row_data(t);
        for (std::size_t c = 0; c < upstream.cols(); ++c) dst[c] += src[c];
    }
}

/// BiLSTM + attention-pooling stack shared by all three encoders.
struct SequenceEncoderParams {
    LstmWeights fwd, bwd;
    AttentionWeights attn;

    std::size_t output_dim() const { return 2 * fwd.hidden_size(); }

    template <typename F>
    void for_each_tensor(const std::string& prefix, F&& f) {
        fwd.for_each_tensor(prefix + ".fwd", f);
        bwd.for_each_tensor(prefix + ".bwd", f);
        attn.for_each_tensor(prefix + ".attn", f);
    }
};

inline SequenceEncoderParams sequence_encoder_init(std::size_t hidden, std::size_t input,
                                                   Rng& rng) {
    SequenceEncoderParams p;
    p.fwd = lstm_init(hidden, input, rng);
    p.bwd = lstm_init(hidden, input, rng);
    p.attn.w = glorot_init(1, 2 * hidden, rng);
    return p;
}

inline SequenceEncoderParams sequence_encoder_zeros_like(const SequenceEncoderParams& p) {
    SequenceEncoderParams g;
    g.fwd = lstm_zeros_like(p.fwd);
    g.bwd = lstm_zeros_like(p.bwd);
    g.attn.w = Tensor(1, p.attn.w.cols());
    return g;
}

struct SequenceEncoderCache {
    bool empty = true;
    BiLstmCache lstm;
    AttentionCache attn;
};

inline Tensor sequence_encode(const Tensor& inputs, const SequenceEncoderParams& p,
                              SequenceEncoderCache& cache) {
    cache.empty = false;
    Tensor hidden = bilstm_forward(inputs, p.fwd, p.bwd, cache.lstm);
    return attention_pool(hidden, p.attn, cache.attn);
}

/// Accumulates parameter grads; writes sequence input grads when
/// input_grads is non-null.
inline void sequence_encode_backward(const SequenceEncoderCache& cache,
                                     const SequenceEncoderParams& p, const Tensor& upstream,
                                     Tensor* input_grads, SequenceEncoderParams& grads) {
    if (cache.empty) return;
    Tensor hidden_grads(cache.attn.hidden.rows(), cache.attn.hidden.cols());
    attention_backward(cache.attn, p.attn, upstream, hidden_grads, grads.attn);
    bilstm_backward(cache.lstm, p.fwd, p.bwd, hidden_grads, input_grads, grads.fwd, grads.bwd);
}

// ---------------------------------------------------------------------------
// Act sequence encoder: one-hot acts -> BiLSTM -> attention
// ---------------------------------------------------------------------------

struct ActEncoderCache {
    SequenceEncoderCache seq;
};

/// Empty history returns the all-zero vector (first predicted turn).
inline Tensor encode_act_sequence(const std::vector<std::size_t>& acts, std::size_t act_count,
                                  const SequenceEncoderParams& p, ActEncoderCache& cache) {
    cache.seq = SequenceEncoderCache{};
    if (acts.empty()) return Tensor(1, p.output_dim());
    Tensor onehots(acts.size(), act_count);
    for (std::size_t t = 0; t < acts.size(); ++t) {
        if (acts[t] >= act_count)
            throw std::invalid_argument("encode_act_sequence: act index " +
                                        std::to_string(acts[t]) + " out of range");
        onehots(t, acts[t]) = 1.0;
    }
    return sequence_encode(onehots, p, cache.seq);
}

inline void encode_act_sequence_backward(const ActEncoderCache& cache,
                                         const SequenceEncoderParams& p,
                                         const Tensor& upstream,
                                         SequenceEncoderParams& grads) {
    sequence_encode_backward(cache.seq, p, upstream, nullptr, grads);
}

// ---------------------------------------------------------------------------
// Historical utterance encoder: per-utterance CNN features -> BiLSTM -> attention
// ---------------------------------------------------------------------------

struct HistoryEncoderParams {
    ConvFilterBank conv;
    SequenceEncoderParams seq;

    template <typename F>
    void for_each_tensor(const std::string& prefix, F&& f) {
        conv.for_each_tensor(prefix + ".conv", f);
        seq.for_each_tensor(prefix + ".seq", f);
    }
};

struct HistoryEncoderCache {
    std::vector<std::vector<std::size_t>> utterances;
    std::vector<ConvCache> convs;
    SequenceEncoderCache seq;
};

/// Empty history returns the all-zero vector.
inline Tensor encode_history(const std::vector<std::vector<std::size_t>>& utterances,
                             const Tensor& embeddings, const HistoryEncoderParams& p,
                             HistoryEncoderCache& cache) {
    cache = HistoryEncoderCache{};
    if (utterances.empty()) return Tensor(1, p.seq.output_dim());

    const std::size_t m = p.conv.feature_count();
    Tensor features(utterances.size(), m);
    cache.utterances = utterances;
    cache.convs.resize(utterances.size());
    for (std::size_t i = 0; i < utterances.size(); ++i) {
        if (utterances[i].empty())
            throw std::invalid_argument("encode_history: empty utterance in history");
        Tensor embedded = embed_tokens(utterances[i], embeddings);
        Tensor f = conv_max_pool(embedded, p.conv, cache.convs[i]);
        for (std::size_t j = 0; j < m; ++j) features(i, j) = f[j];
    }
    return sequence_encode(features, p.seq, cache.seq);
}

/// embedding_grads may be null when token embeddings are frozen.
inline void encode_history_backward(const HistoryEncoderCache& cache,
                                    const HistoryEncoderParams& p, const Tensor& upstream,
                                    HistoryEncoderParams& grads, Tensor* embedding_grads) {
    if (cache.seq.empty) return;
    const std::size_t T = cache.utterances.size();
    const std::size_t m = p.conv.feature_count();
    Tensor feature_grads(T, m);
    sequence_encode_backward(cache.seq, p.seq, upstream, &feature_grads, grads.seq);
    for (std::size_t i = 0; i < T; ++i) {
        Tensor up(1, m);
        for (std::size_t j = 0; j < m; ++j) up[j] = feature_grads(i, j);
        if (embedding_grads) {
            Tensor token_grads(cache.utterances[i].size(), embedding_grads->cols());
            conv_backward(cache.convs[i], p.conv, up, &token_grads, grads.conv);
            embed_tokens_backward(cache.utterances[i], token_grads, *embedding_grads);
        } else {
            conv_backward(cache.convs[i], p.conv, up, nullptr, grads.conv);
        }
    }
}

// ---------------------------------------------------------------------------
// Current user utterance encoder: token embeddings -> BiLSTM -> attention
// ---------------------------------------------------------------------------

struct UserEncoderCache {
    std::vector<std::size_t> tokens;
    SequenceEncoderCache seq;
};

inline Tensor encode_user_utterance(const std::vector<std::size_t>& tokens,
                                    const Tensor& embeddings, const SequenceEncoderParams& p,
                                    UserEncoderCache& cache) {
    if (tokens.empty())
        throw std::invalid_argument("encode_user_utterance: empty utterance");
    cache.tokens = tokens;
    Tensor embedded = embed_tokens(tokens, embeddings);
    return sequence_encode(embedded, p, cache.seq);
}

inline void encode_user_utterance_backward(const UserEncoderCache& cache,
                                           const SequenceEncoderParams& p,
                                           const Tensor& upstream,
                                           SequenceEncoderParams& grads,
                                           Tensor* embedding_grads) {
    if (cache.seq.empty) return;
    if (embedding_grads) {
        Tensor token_grads(cache.tokens.size(), embedding_grads->cols());
        sequence_encode_backward(cache.seq, p, upstream, &token_grads, grads);
        embed_tokens_backward(cache.tokens, token_grads, *embedding_grads);
    } else {
        sequence_encode_backward(cache.seq, p, upstream, nullptr, grads);
    }
}

}  // namespace actflow
