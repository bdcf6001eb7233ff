#include <gtest/gtest.h>

#include <cmath>

#include "actflow/model.hpp"

using namespace actflow;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Tensor t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
    return t;
}

ModelDims tiny_dims() {
    ModelDims d;
    d.act_count = 3;
    d.vocab_size = 12;
    d.token_dim = 8;
    d.hidden = 6;
    d.conv_windows = {2, 3};
    d.conv_counts = {2, 1};
    d.autoenc_hidden = 5;
    d.autoenc_out = 7;
    d.candidate_count = 10;
    return d;
}

ModelParams tiny_params(const ModelDims& dims, const VariantConfig& variant,
                        std::uint64_t seed) {
    Rng rng(seed);
    Tensor emb = glorot_init(dims.vocab_size, dims.token_dim, rng);
    return init_model_params(dims, variant, rng, std::move(emb));
}

TurnSample tiny_sample() {
    TurnSample s;
    s.hist_acts = {0, 2};
    s.hist_utts = {{1, 4, 2}, {7, 0}};
    s.current_user_utt = {7, 0};
    s.gold_act = 1;
    s.gold_utt_id = 3;
    return s;
}

double forward_loss(const TurnSample& sample, const ModelParams& p) {
    ForwardCache cache;
    return model_forward(sample, p, p.variant, cache).loss;
}

}  // namespace

// ---------------------------------------------------------------------------
// transform
// ---------------------------------------------------------------------------

TEST(Transform, ZeroWeightsGiveZeroOutput) {
    ModelDims dims = tiny_dims();
    VariantConfig variant;
    ModelParams p = tiny_params(dims, variant, 1);
    p.enc_w.fill(0.0);
    p.dec_w.fill(0.0);
    EncodedTriple triple;
    Rng rng(2);
    triple.r_a = random_tensor(1, dims.encoder_dim(), rng);
    triple.r_u = random_tensor(1, dims.encoder_dim(), rng);
    triple.r_c = random_tensor(1, dims.encoder_dim(), rng);
    TransformCache cache;
    Tensor v = transform(triple, p, variant, cache);
    ASSERT_EQ(v.cols(), dims.autoenc_out);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], 0.0);
}

TEST(Transform, IdentitySquareConfigYieldsSigmoid) {
    // input_dim == d == s with identity matrices forces v = sigmoid(r_input)
    ModelDims dims = tiny_dims();
    dims.hidden = 1;  // concat dim 6
    dims.autoenc_hidden = 6;
    dims.autoenc_out = 6;
    VariantConfig variant;
    ModelParams p = tiny_params(dims, variant, 3);
    p.enc_w = Tensor(6, 6);
    p.dec_w = Tensor(6, 6);
    for (int i = 0; i < 6; ++i) p.enc_w(i, i) = p.dec_w(i, i) = 1.0;

    EncodedTriple triple;
    Rng rng(4);
    triple.r_a = random_tensor(1, 2, rng);
    triple.r_u = random_tensor(1, 2, rng);
    triple.r_c = random_tensor(1, 2, rng);
    TransformCache cache;
    Tensor v = transform(triple, p, variant, cache);
    for (std::size_t i = 0; i < 6; ++i)
        EXPECT_NEAR(v[i], 1.0 / (1.0 + std::exp(-cache.r_input[i])), 1e-14);
}

TEST(Transform, MatchesDirectFormulaEvaluation) {
    ModelDims dims = tiny_dims();
    VariantConfig variant;
    ModelParams p = tiny_params(dims, variant, 5);
    EncodedTriple triple;
    Rng rng(6);
    const std::size_t e = dims.encoder_dim();
    triple.r_a = random_tensor(1, e, rng);
    triple.r_u = random_tensor(1, e, rng);
    triple.r_c = random_tensor(1, e, rng);
    TransformCache cache;
    Tensor v = transform(triple, p, variant, cache);

    // direct evaluation: concat, h = W_e r, v = W_d sigmoid(h)
    std::vector<double> r(3 * e);
    for (std::size_t j = 0; j < e; ++j) {
        r[j] = triple.r_a[j];
        r[e + j] = triple.r_u[j];
        r[2 * e + j] = triple.r_c[j];
    }
    std::vector<double> f(dims.autoenc_hidden);
    for (std::size_t o = 0; o < dims.autoenc_hidden; ++o) {
        double h = 0.0;
        for (std::size_t j = 0; j < 3 * e; ++j) h += p.enc_w(o, j) * r[j];
        f[o] = 1.0 / (1.0 + std::exp(-h));
    }
    for (std::size_t o = 0; o < dims.autoenc_out; ++o) {
        double expect = 0.0;
        for (std::size_t j = 0; j < dims.autoenc_hidden; ++j) expect += p.dec_w(o, j) * f[j];
        EXPECT_NEAR(v[o], expect, 1e-12);
    }
}

TEST(Transform, ActSlotZeroedWhenActEncoderOff) {
    ModelDims dims = tiny_dims();
    VariantConfig variant;
    variant.use_act_encoder = false;
    ModelParams p = tiny_params(dims, variant, 7);
    EncodedTriple triple;
    Rng rng(8);
    const std::size_t e = dims.encoder_dim();
    triple.r_a = random_tensor(1, e, rng);
    triple.r_u = random_tensor(1, e, rng);
    triple.r_c = random_tensor(1, e, rng);
    TransformCache cache;
    transform(triple, p, variant, cache);
    for (std::size_t j = 0; j < e; ++j) {
        EXPECT_EQ(cache.r_input[j], 0.0);
        EXPECT_EQ(cache.r_input[e + j], triple.r_u[j]);
    }
}

TEST(Transform, PassThroughWhenAutoencoderOff) {
    ModelDims dims = tiny_dims();
    VariantConfig variant;
    variant.use_autoencoder = false;
    ModelParams p = tiny_params(dims, variant, 9);
    EncodedTriple triple;
    Rng rng(10);
    const std::size_t e = dims.encoder_dim();
    triple.r_a = random_tensor(1, e, rng);
    triple.r_u = random_tensor(1, e, rng);
    triple.r_c = random_tensor(1, e, rng);
    TransformCache cache;
    Tensor v = transform(triple, p, variant, cache);
    ASSERT_EQ(v.cols(), dims.concat_dim());
    for (std::size_t j = 0; j < v.size(); ++j) EXPECT_EQ(v[j], cache.r_input[j]);
    EXPECT_EQ(p.act_head.cols(), dims.concat_dim());
}

// ---------------------------------------------------------------------------
// prediction heads
// ---------------------------------------------------------------------------

TEST(PredictAct, ZeroHeadGivesUniformAndLowestIndex) {
    Tensor v = Tensor::row_vector({1.0, -2.0, 0.5});
    Tensor head(9, 3);
    ActPrediction pred = predict_act(v, head);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(pred.probs[i], 1.0 / 9.0, 1e-12);
    EXPECT_EQ(pred.predicted, 0u);
}

TEST(PredictAct, DominantLogitWins) {
    Tensor v = Tensor::row_vector({1.0});
    Tensor head(3, 1);
    head(1, 0) = 1000.0;
    ActPrediction pred = predict_act(v, head);
    EXPECT_EQ(pred.predicted, 1u);
    EXPECT_NEAR(pred.probs[1], 1.0, 1e-9);
}

TEST(PredictAct, MatchesSoftmaxOracle) {
    Rng rng(11);
    Tensor v = random_tensor(1, 4, rng);
    Tensor head = random_tensor(5, 4, rng);
    ActPrediction pred = predict_act(v, head);

    std::vector<double> logits(5);
    for (int o = 0; o < 5; ++o) {
        logits[o] = 0.0;
        for (int j = 0; j < 4; ++j) logits[o] += head(o, j) * v[j];
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    for (int o = 0; o < 5; ++o) EXPECT_NEAR(pred.probs[o], std::exp(logits[o] - mx) / sum, 1e-12);
}

TEST(PredictAct, ArgmaxInvariantToConstantLogitShift) {
    Rng rng(12);
    Tensor v = random_tensor(1, 4, rng);
    double vnorm = dot(v.data(), v.data(), 4);
    Tensor head = random_tensor(6, 4, rng);
    ActPrediction base = predict_act(v, head);
    // add u with u.v == c to every head row: every logit shifts by exactly c
    const double c = 17.5;
    Tensor shifted = head;
    for (std::size_t o = 0; o < 6; ++o)
        for (std::size_t j = 0; j < 4; ++j) shifted(o, j) += c * v[j] / vnorm;
    EXPECT_EQ(predict_act(v, shifted).predicted, base.predicted);
}

TEST(PredictUtterance, FullKIsPermutation) {
    Rng rng(13);
    Tensor v = random_tensor(1, 3, rng);
    Tensor head = random_tensor(7, 3, rng);
    auto ranked = predict_utterance(v, head, 7);
    std::vector<bool> seen(7, false);
    for (const auto& r : ranked) {
        EXPECT_FALSE(seen[r.id]);
        seen[r.id] = true;
    }
    for (std::size_t i = 1; i < ranked.size(); ++i)
        EXPECT_GE(ranked[i - 1].score, ranked[i].score);
}

TEST(PredictUtterance, TiesFavourLowerIds) {
    Tensor v = Tensor::row_vector({1.0, 1.0});
    Tensor head(6, 2);  // all logits zero
    auto ranked = predict_utterance(v, head, 4);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(ranked[i].id, i);
}

TEST(PredictUtterance, MatchesSortOracle) {
    Rng rng(14);
    Tensor v = random_tensor(1, 5, rng);
    Tensor head = random_tensor(9, 5, rng);
    auto ranked = predict_utterance(v, head, 3);

    std::vector<double> logits(9);
    for (int o = 0; o < 9; ++o) {
        logits[o] = 0.0;
        for (int j = 0; j < 5; ++j) logits[o] += head(o, j) * v[j];
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    std::vector<std::pair<double, std::size_t>> scored;
    for (int o = 0; o < 9; ++o) scored.push_back({std::exp(logits[o] - mx) / sum, o});
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(ranked[i].id, scored[i].second);
        EXPECT_NEAR(ranked[i].score, scored[i].first, 1e-12);
    }
}

TEST(PredictUtterance, KOutOfRangeRejected) {
    Tensor v = Tensor::row_vector({1.0});
    Tensor head(4, 1);
    EXPECT_THROW(predict_utterance(v, head, 0), std::invalid_argument);
    EXPECT_THROW(predict_utterance(v, head, 5), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// joint loss
// ---------------------------------------------------------------------------

TEST(JointLoss, PerfectPredictorGivesZero) {
    SampleEval s;
    s.act_probs = Tensor::row_vector({0.0, 1.0, 0.0});
    s.utt_probs = Tensor::row_vector({1.0, 0.0});
    s.gold_act = 1;
    s.gold_utt_id = 0;
    VariantConfig variant;
    EXPECT_NEAR(joint_loss({s}, variant), 0.0, 1e-12);
}

TEST(JointLoss, UniformHeadsClosedForm) {
    SampleEval s;
    s.act_probs = Tensor(1, 9);
    s.act_probs.fill(1.0 / 9.0);
    s.utt_probs = Tensor(1, 100);
    s.utt_probs.fill(1.0 / 100.0);
    s.gold_act = 4;
    s.gold_utt_id = 42;
    VariantConfig variant;  // alpha 0.5
    const double expect = 0.5 * std::log(9.0) + 0.5 * std::log(100.0);
    EXPECT_NEAR(joint_loss({s}, variant), expect, 1e-9);
    EXPECT_NEAR(expect, 3.4012, 1e-4);
}

TEST(JointLoss, AlphaOneIgnoresUtteranceProbs) {
    SampleEval s;
    s.act_probs = Tensor::row_vector({0.3, 0.7});
    s.utt_probs = Tensor::row_vector({0.5, 0.5});
    s.gold_act = 1;
    s.gold_utt_id = 0;
    VariantConfig variant;
    variant.alpha = 1.0;
    double l1 = joint_loss({s}, variant);
    s.utt_probs = Tensor::row_vector({0.01, 0.99});
    EXPECT_EQ(joint_loss({s}, variant), l1);
    EXPECT_NEAR(l1, -std::log(0.7), 1e-12);
}

TEST(JointLoss, MissingGoldUtteranceSkipsSecondTerm) {
    SampleEval s;
    s.act_probs = Tensor::row_vector({0.25, 0.75});
    s.utt_probs = Tensor::row_vector({0.5, 0.5});
    s.gold_act = 0;
    s.gold_utt_id = -1;
    VariantConfig variant;
    EXPECT_NEAR(joint_loss({s}, variant), 0.5 * -std::log(0.25), 1e-12);
}

TEST(JointLoss, InvalidGoldActRejected) {
    SampleEval s;
    s.act_probs = Tensor::row_vector({1.0, 0.0});
    s.utt_probs = Tensor::row_vector({1.0});
    s.gold_act = 5;
    s.gold_utt_id = 0;
    EXPECT_THROW(joint_loss({s}, VariantConfig{}), std::invalid_argument);
    EXPECT_THROW(joint_loss({}, VariantConfig{}), std::invalid_argument);
}

TEST(JointLoss, MeanOverBatch) {
    SampleEval a, b;
    a.act_probs = Tensor::row_vector({0.5, 0.5});
    a.utt_probs = Tensor::row_vector({1.0});
    a.gold_act = 0;
    a.gold_utt_id = 0;
    b = a;
    b.act_probs = Tensor::row_vector({0.25, 0.75});
    VariantConfig variant;
    variant.alpha = 1.0;
    double expect = 0.5 * (-std::log(0.5) - std::log(0.25));
    EXPECT_NEAR(joint_loss({a, b}, variant), expect, 1e-12);
}

// ---------------------------------------------------------------------------
// assembled forward/backward: the module's master oracle
// ---------------------------------------------------------------------------

namespace {

void check_variant_gradients(const VariantConfig& variant, std::uint64_t seed) {
    ModelDims dims = tiny_dims();
    ModelParams p = tiny_params(dims, variant, seed);
    TurnSample sample = tiny_sample();

    ModelParams analytic = zeros_like(p);
    forward_backward(sample, p, variant, analytic);

    auto loss = [&sample](const ModelParams& q) { return forward_loss(sample, q); };
    ModelParams numeric = finite_diff_grad(loss, p);
    EXPECT_LT(max_grad_rel_error(analytic, numeric), 1e-4)
        << "variant act=" << variant.use_act_encoder << " ae=" << variant.use_autoencoder
        << " alpha=" << variant.alpha;
}

}  // namespace

TEST(ForwardBackward, GradientsMatchFiniteDifferencesFullModel) {
    check_variant_gradients(VariantConfig{true, true, 0.5}, 100);
}

TEST(ForwardBackward, GradientsMatchFiniteDifferencesWithoutAct) {
    check_variant_gradients(VariantConfig{false, true, 0.5}, 101);
}

TEST(ForwardBackward, GradientsMatchFiniteDifferencesWithoutAutoencoder) {
    check_variant_gradients(VariantConfig{true, false, 0.5}, 102);
}

TEST(ForwardBackward, GradientsMatchFiniteDifferencesSingleTaskAct) {
    check_variant_gradients(VariantConfig{true, true, 1.0}, 103);
}

TEST(ForwardBackward, GradientsMatchFiniteDifferencesSingleTaskUtt) {
    check_variant_gradients(VariantConfig{true, true, 0.0}, 104);
}

TEST(ForwardBackward, GradientsMatchWithTrainableEmbeddings) {
    ModelDims dims = tiny_dims();
    dims.trainable_embeddings = true;
    VariantConfig variant;
    ModelParams p = tiny_params(dims, variant, 105);
    TurnSample sample = tiny_sample();

    ModelParams analytic = zeros_like(p);
    forward_backward(sample, p, variant, analytic);
    auto loss = [&sample](const ModelParams& q) { return forward_loss(sample, q); };
    ModelParams numeric = finite_diff_grad(loss, p);
    EXPECT_LT(max_grad_rel_error(analytic, numeric), 1e-4);
}

TEST(ForwardBackward, GradientsMatchWithReconstructionTerm) {
    ModelDims dims = tiny_dims();
    dims.recon_weight = 0.3;
    VariantConfig variant;
    ModelParams p = tiny_params(dims, variant, 106);
    TurnSample sample = tiny_sample();

    ModelParams analytic = zeros_like(p);
    forward_backward(sample, p, variant, analytic);
    auto loss = [&sample](const ModelParams& q) { return forward_loss(sample, q); };
    ModelParams numeric = finite_diff_grad(loss, p);
    EXPECT_LT(max_grad_rel_error(analytic, numeric), 1e-4);
}

TEST(ForwardBackward, GradientsMatchOnEmptyHistory) {
    // degenerate first-system-turn shape: no prior acts or utterances
    ModelDims dims = tiny_dims();
    VariantConfig variant;
    ModelParams p = tiny_params(dims, variant, 107);
    TurnSample sample;
    sample.current_user_utt = {3, 9, 1};
    sample.gold_act = 2;
    sample.gold_utt_id = 5;

    ModelParams analytic = zeros_like(p);
    forward_backward(sample, p, variant, analytic);
    auto loss = [&sample](const ModelParams& q) {
        ForwardCache cache;
        return model_forward(sample, q, q.variant, cache).loss;
    };
    ModelParams numeric = finite_diff_grad(loss, p);
    EXPECT_LT(max_grad_rel_error(analytic, numeric), 1e-4);
}

TEST(ForwardBackward, SilencedUtteranceHeadGetsExactZeroGrads) {
    ModelDims dims = tiny_dims();
    VariantConfig variant;
    variant.alpha = 1.0;
    ModelParams p = tiny_params(dims, variant, 108);
    ModelParams grads = zeros_like(p);
    forward_backward(tiny_sample(), p, variant, grads);
    for (std::size_t i = 0; i < grads.utt_head.size(); ++i) EXPECT_EQ(grads.utt_head[i], 0.0);
    // and the act head when alpha = 0
    variant.alpha = 0.0;
    ModelParams p0 = tiny_params(dims, variant, 109);
    ModelParams g0 = zeros_like(p0);
    forward_backward(tiny_sample(), p0, variant, g0);
    for (std::size_t i = 0; i < g0.act_head.size(); ++i) EXPECT_EQ(g0.act_head[i], 0.0);
}

TEST(ForwardBackward, DisabledActEncoderGetsExactZeroGrads) {
    ModelDims dims = tiny_dims();
    VariantConfig variant;
    variant.use_act_encoder = false;
    ModelParams p = tiny_params(dims, variant, 110);
    ModelParams grads = zeros_like(p);
    forward_backward(tiny_sample(), p, variant, grads);
    bool all_zero = true;
    grads.act_enc.for_each_tensor("act_enc", [&](const std::string&, Tensor& t) {
        for (std::size_t i = 0; i < t.size(); ++i) all_zero &= t[i] == 0.0;
    });
    EXPECT_TRUE(all_zero);
}

TEST(ForwardBackward, TransformOutputDimIndependentOfHistoryLength) {
    ModelDims dims = tiny_dims();
    VariantConfig variant;
    ModelParams p = tiny_params(dims, variant, 111);
    for (std::size_t len : {0u, 1u, 4u}) {
        TurnSample s;
        s.hist_acts.assign(len, 1);
        s.hist_utts.assign(len, {2, 3});
        s.current_user_utt = {5};
        s.gold_act = 0;
        s.gold_utt_id = 0;
        ForwardCache cache;
        model_forward(s, p, variant, cache);
        EXPECT_EQ(cache.v.cols(), dims.autoenc_out);
    }
}
