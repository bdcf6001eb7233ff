#pragma once

#include <string>
#include <vector>

#include "actflow/model.hpp"
#include "actflow/trainer.hpp"

namespace actflow {

/// Tiny dimensions for the whole-model finite-difference suite: small
/// enough that perturbing every scalar twice stays fast, large enough that
/// every code path (both conv windows, multi-step BiLSTMs) is exercised.
inline TrainConfig gradcheck_default_config() {
    TrainConfig cfg;
    cfg.embed_dim = 8;
    cfg.hidden = 6;
    cfg.autoenc_hidden = 5;
    cfg.autoenc_out = 7;
    cfg.conv_windows = {2, 3};
    cfg.conv_counts = {2, 1};
    cfg.seed = 29;
    return cfg;
}

struct GradCheckResult {
    std::string variant;
    double max_rel_error = 0.0;
    std::size_t parameter_count = 0;
};

namespace detail {

/// Fixed fixture: 3 acts, 10 candidates, a 12-token vocabulary and a
/// 2-turn history sample.
inline void gradcheck_fixture(const TrainConfig& cfg, CorpusVocabularies* vocab,
                              TurnSample* sample) {
    vocab->acts.add("a0");
    vocab->acts.add("a1");
    vocab->acts.add("a2");
    vocab->tokens.add(kUnkToken);
    for (int i = 0; i < 11; ++i) vocab->tokens.add("tok" + std::to_string(i));
    for (int i = 0; i < 10; ++i) vocab->candidates.add("cand utterance " + std::to_string(i));
    Rng rng(cfg.seed ^ 0x6f2aULL);
    init_random_embeddings(vocab->tokens, cfg.embed_dim, rng);

    sample->hist_acts = {0, 2};
    sample->hist_utts = {{1, 4, 2}, {7, 11}};
    sample->current_user_utt = {7, 11};
    sample->gold_act = 1;
    sample->gold_utt_id = 3;
}

}  // namespace detail

/// Checks the assembled forward/backward of one variant against the central
/// finite-difference oracle at eps = 1e-5.
inline GradCheckResult gradcheck_variant(const TrainConfig& cfg, const std::string& name,
                                         const VariantConfig& variant) {
    CorpusVocabularies vocab;
    TurnSample sample;
    detail::gradcheck_fixture(cfg, &vocab, &sample);

    ModelDims dims = dims_from(cfg, vocab);
    Rng rng(cfg.seed);
    ModelParams params = init_model_params(dims, variant, rng, vocab.tokens.embeddings);

    ModelParams analytic = zeros_like(params);
    forward_backward(sample, params, variant, analytic);
    auto loss = [&sample, &variant](const ModelParams& q) {
        ForwardCache cache;
        return model_forward(sample, q, variant, cache).loss;
    };
    ModelParams numeric = finite_diff_grad(loss, params, 1e-5);

    GradCheckResult result{name, max_grad_rel_error(analytic, numeric), 0};
    params.for_each_tensor(
        [&](const std::string&, Tensor& t) { result.parameter_count += t.size(); });
    return result;
}

/// variant_filter: one of the grid names, or "all".
inline std::vector<GradCheckResult> run_gradcheck(const TrainConfig& cfg,
                                                  const std::string& variant_filter = "all") {
    struct Entry {
        const char* name;
        VariantConfig variant;
    };
    const Entry grid[] = {
        {"full", {true, true, 0.5}},
        {"no-act", {false, true, 0.5}},
        {"no-autoencoder", {true, false, 0.5}},
        {"single-act", {true, true, 1.0}},
        {"single-utt", {true, true, 0.0}},
    };
    std::vector<GradCheckResult> results;
    bool matched = false;
    for (const Entry& e : grid) {
        if (variant_filter != "all" && variant_filter != e.name) continue;
        matched = true;
        results.push_back(gradcheck_variant(cfg, e.name, e.variant));
    }
    if (!matched)
        throw std::invalid_argument("gradcheck: unknown variant '" + variant_filter + "'");
    return results;
}

}  // namespace actflow
