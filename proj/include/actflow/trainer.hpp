#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "actflow/data.hpp"
#include "actflow/metrics.hpp"
#include "actflow/model.hpp"
#include "actflow/numerics.hpp"
#include "actflow/parallel.hpp"

namespace actflow {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t minibatch_size = 32;
    double lr = 0.05;
    double clip_norm = 5.0;
    std::size_t epochs = 40;
    double alpha = 0.5;
    std::size_t hidden = 80;          // BiLSTM hidden size per direction
    std::size_t autoenc_hidden = 128;  // d
    std::size_t autoenc_out = 160;     // s
    std::size_t embed_dim = 300;       // k
    std::vector<std::size_t> conv_windows{3, 4, 5};
    std::vector<std::size_t> conv_counts{11, 11, 10};
    std::uint64_t seed = 1;
    double val_fraction = 0.10;
    bool use_act_encoder = true;
    bool use_autoencoder = true;
    bool trainable_embeddings = false;
    double recon_weight = 0.0;
    std::string topk_aggregation = "max";  // or "mean"
    bool bleu_smoothing = true;

    VariantConfig variant() const { return {use_act_encoder, use_autoencoder, alpha}; }
};

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out.push_back(',');
        out += std::to_string(v[i]);
    }
    return out;
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(static_cast<std::size_t>(std::stoull(item)));
    }
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ParseError("config: bad boolean for " + key + ": " + v);
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

/// Flat `key = value` form; round-trips exactly.
inline std::string config_to_string(const TrainConfig& c) {
    std::ostringstream out;
    out << "minibatch_size = " << c.minibatch_size << "\n";
    out << "lr = " << detail::format_double(c.lr) << "\n";
    out << "clip_norm = " << detail::format_double(c.clip_norm) << "\n";
    out << "epochs = " << c.epochs << "\n";
    out << "alpha = " << detail::format_double(c.alpha) << "\n";
    out << "hidden = " << c.hidden << "\n";
    out << "autoenc_hidden = " << c.autoenc_hidden << "\n";
    out << "autoenc_out = " << c.autoenc_out << "\n";
    out << "embed_dim = " << c.embed_dim << "\n";
    out << "conv_windows = " << detail::join_sizes(c.conv_windows) << "\n";
    out << "conv_counts = " << detail::join_sizes(c.conv_counts) << "\n";
    out << "seed = " << c.seed << "\n";
    out << "val_fraction = " << detail::format_double(c.val_fraction) << "\n";
    out << "use_act_encoder = " << (c.use_act_encoder ? "true" : "false") << "\n";
    out << "use_autoencoder = " << (c.use_autoencoder ? "true" : "false") << "\n";
    out << "trainable_embeddings = " << (c.trainable_embeddings ? "true" : "false") << "\n";
    out << "recon_weight = " << detail::format_double(c.recon_weight) << "\n";
    out << "topk_aggregation = " << c.topk_aggregation << "\n";
    out << "bleu_smoothing = " << (c.bleu_smoothing ? "true" : "false") << "\n";
    return out.str();
}

inline void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    if (key == "minibatch_size") c.minibatch_size = std::stoull(value);
    else if (key == "lr") c.lr = std::stod(value);
    else if (key == "clip_norm") c.clip_norm = std::stod(value);
    else if (key == "epochs") c.epochs = std::stoull(value);
    else if (key == "alpha") c.alpha = std::stod(value);
    else if (key == "hidden") c.hidden = std::stoull(value);
    else if (key == "autoenc_hidden") c.autoenc_hidden = std::stoull(value);
    else if (key == "autoenc_out") c.autoenc_out = std::stoull(value);
    else if (key == "embed_dim") c.embed_dim = std::stoull(value);
    else if (key == "conv_windows") c.conv_windows = detail::parse_sizes(value);
    else if (key == "conv_counts") c.conv_counts = detail::parse_sizes(value);
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "val_fraction") c.val_fraction = std::stod(value);
    else if (key == "use_act_encoder") c.use_act_encoder = parse_bool(value, key);
    else if (key == "use_autoencoder") c.use_autoencoder = parse_bool(value, key);
    else if (key == "trainable_embeddings") c.trainable_embeddings = parse_bool(value, key);
    else if (key == "recon_weight") c.recon_weight = std::stod(value);
    else if (key == "topk_aggregation") {
        if (value != "max" && value != "mean")
            throw ParseError("config: topk_aggregation must be max or mean");
        c.topk_aggregation = value;
    } else if (key == "bleu_smoothing") c.bleu_smoothing = parse_bool(value, key);
    else throw ParseError("config: unknown key '" + key + "'");
}

inline TrainConfig parse_config(const std::string& text) {
    TrainConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        apply_config_entry(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    if (c.alpha < 0.0 || c.alpha > 1.0) throw ParseError("config: alpha must be in [0,1]");
    if (c.conv_windows.size() != c.conv_counts.size())
        throw ParseError("config: conv_windows/conv_counts length mismatch");
    return c;
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

inline ModelDims dims_from(const TrainConfig& cfg, const CorpusVocabularies& vocab) {
    ModelDims d;
    d.act_count = vocab.acts.size();
    d.vocab_size = vocab.tokens.size();
    d.token_dim = cfg.embed_dim;
    d.hidden = cfg.hidden;
    d.conv_windows = cfg.conv_windows;
    d.conv_counts = cfg.conv_counts;
    d.autoenc_hidden = cfg.autoenc_hidden;
    d.autoenc_out = cfg.autoenc_out;
    d.candidate_count = vocab.candidates.size();
    d.trainable_embeddings = cfg.trainable_embeddings;
    d.recon_weight = cfg.recon_weight;
    return d;
}

// ---------------------------------------------------------------------------
// Evaluation over a sample set
// ---------------------------------------------------------------------------

struct EvalOptions {
    std::vector<std::size_t> ks{1, 3, 5, 10};
    TopKAggregation aggregation = TopKAggregation::kMax;
};

inline EvalOptions eval_options_from(const TrainConfig& cfg) {
    EvalOptions o;
    o.aggregation =
        cfg.topk_aggregation == "mean" ? TopKAggregation::kMean : TopKAggregation::kMax;
    return o;
}

inline EvalReport evaluate_model(const ModelParams& params, const std::vector<TurnSample>& samples,
                                 const CorpusVocabularies& vocab,
                                 const EvalOptions& opts = EvalOptions{}) {
    if (samples.empty()) throw std::invalid_argument("evaluate_model: no samples");
    const std::size_t c_u = params.dims.candidate_count;

    std::size_t max_k = 1;
    for (std::size_t k : opts.ks) max_k = std::max(max_k, k);
    max_k = std::min(max_k, c_u);

    std::vector<std::size_t> preds(samples.size()), golds(samples.size());
    std::vector<std::vector<std::size_t>> ranked(samples.size());
    std::vector<std::vector<std::string>> gold_tokens(samples.size());

    // per-sample forwards are pure; results land in per-index slots so the
    // worker partition cannot affect the report
    parallel_for(samples.size(), [&](std::size_t i) {
        const TurnSample& s = samples[i];
        ForwardCache cache;
        ForwardResult r = model_forward(s, params, params.variant, cache);
        preds[i] = r.act.predicted;
        golds[i] = s.gold_act;
        auto top = predict_utterance(cache.v, params.utt_head, max_k);
        std::vector<std::size_t> ids;
        ids.reserve(top.size());
        for (const auto& t : top) ids.push_back(t.id);
        ranked[i] = std::move(ids);
        gold_tokens[i] = s.gold_utt_tokens;
    });

    std::vector<std::vector<std::string>> candidate_tokens;
    candidate_tokens.reserve(c_u);
    for (std::size_t i = 0; i < c_u; ++i) candidate_tokens.push_back(vocab.candidates.tokens(i));

    EvalReport report;
    report.samples = samples.size();
    report.micro_f1 = micro_f1(preds, golds);
    report.macro_f1 = macro_f1(preds, golds, vocab.acts.size());
    report.per_class = per_class_stats(preds, golds, vocab.acts.size());
    report.class_labels = vocab.acts.labels();
    for (std::size_t k : opts.ks) {
        const std::size_t kk = std::min(k, max_k);
        report.by_k[k] = evaluate_retrieval(ranked, gold_tokens, candidate_tokens, kk,
                                            opts.aggregation);
    }
    return report;
}

/// Fraction of samples whose top-ranked candidate is the gold utterance.
inline double top1_accuracy(const ModelParams& params, const std::vector<TurnSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("top1_accuracy: no samples");
    std::size_t hits = 0;
    for (const auto& s : samples) {
        ForwardCache cache;
        model_forward(s, params, params.variant, cache);
        auto top = predict_utterance(cache.v, params.utt_head, 1);
        hits += s.gold_utt_id >= 0 && top[0].id == static_cast<std::size_t>(s.gold_utt_id);
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_micro_f1 = 0.0;
    double val_bleu4_cumu3 = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

inline void write_history(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open history file for writing: " + path);
    out << "epoch\tloss\tmicro_f1\tbleu4_cumu@3\tseconds\n";
    char buf[160];
    for (const auto& e : history.epochs) {
        std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t%.6f\t%.6f\t%.3f\n", e.epoch, e.train_loss,
                      e.val_micro_f1, e.val_bleu4_cumu3, e.seconds);
        out << buf;
    }
}

struct FitResult {
    ModelParams params;
    TrainHistory history;
};

/// Sample-level training loop: seeded shuffle per epoch, minibatch gradient
/// averaging, global-norm clipping, plain SGD. Validation samples are only
/// ever evaluated, never trained on.
inline FitResult fit(const TrainConfig& cfg, const std::vector<TurnSample>& train_samples,
                     const std::vector<TurnSample>& val_samples,
                     const CorpusVocabularies& vocab, std::ostream* progress = nullptr) {
    if (train_samples.empty()) throw std::invalid_argument("fit: empty sample set");
    if (cfg.minibatch_size == 0) throw std::invalid_argument("fit: minibatch_size must be >= 1");

    const ModelDims dims = dims_from(cfg, vocab);
    const VariantConfig variant = cfg.variant();
    Rng rng(cfg.seed);
    FitResult out{init_model_params(dims, variant, rng, vocab.tokens.embeddings), {}};

    std::vector<std::size_t> order(train_samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    EvalOptions val_opts;
    val_opts.ks = {std::min<std::size_t>(3, dims.candidate_count)};
    val_opts.aggregation = eval_options_from(cfg).aggregation;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.minibatch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.minibatch_size);
            ModelParams grads = zeros_like(out.params);
            for (std::size_t i = start; i < end; ++i) {
                ForwardResult r =
                    forward_backward(train_samples[order[i]], out.params, variant, grads);
                if (!std::isfinite(r.loss))
                    throw NumericalError("fit: non-finite loss at epoch " +
                                         std::to_string(epoch));
                loss_sum += r.loss;
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            grads.for_each_tensor([&](const std::string&, Tensor& t) {
                for (std::size_t j = 0; j < t.size(); ++j) t[j] *= inv;
            });
            sgd_step(out.params, grads, cfg.lr, cfg.clip_norm);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(train_samples.size());
        if (!val_samples.empty()) {
            EvalReport val = evaluate_model(out.params, val_samples, vocab, val_opts);
            stats.val_micro_f1 = val.micro_f1;
            stats.val_bleu4_cumu3 = val.by_k.begin()->second.bleu4_cumu;
        } else {
            stats.val_micro_f1 = std::nan("");
            stats.val_bleu4_cumu3 = std::nan("");
        }
        stats.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.history.epochs.push_back(stats);
        if (progress) {
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "epoch %zu/%zu loss %.4f val_micro_f1 %.4f (%.1fs)\n", epoch,
                          cfg.epochs, stats.train_loss, stats.val_micro_f1, stats.seconds);
            *progress << buf;
        }
    }
    return out;
}

/// Dialogue-level split: whole sessions go to either side, which keeps
/// near-duplicate histories from leaking across the boundary.
inline void split_sessions(const std::vector<DialogueSession>& sessions, double val_fraction,
                           std::uint64_t seed, std::vector<DialogueSession>* train,
                           std::vector<DialogueSession>* val) {
    std::vector<std::size_t> order(sessions.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed ^ 0x5eedf00dULL);
    rng.shuffle(order);
    const std::size_t val_count =
        static_cast<std::size_t>(val_fraction * static_cast<double>(sessions.size()));
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < val_count)
            val->push_back(sessions[order[i]]);
        else
            train->push_back(sessions[order[i]]);
    }
}

struct TrainOutput {
    ModelParams params;
    TrainHistory history;
    CorpusVocabularies vocab;
    SampleBuildReport sample_report;
};

/// Vocabularies and candidates come from the whole training corpus;
/// embeddings from the optional pretrained file, otherwise seeded Glorot
/// rows. 10% of dialogues (by default) are held out for validation.
inline TrainOutput train(const TrainConfig& cfg, const std::vector<DialogueSession>& corpus,
                         const std::string& embeddings_path = "",
                         std::ostream* progress = nullptr) {
    TrainOutput out;
    out.vocab = build_vocabularies(corpus);
    if (!embeddings_path.empty()) {
        load_pretrained_embeddings(embeddings_path, out.vocab.tokens, cfg.embed_dim);
    } else {
        Rng emb_rng(cfg.seed ^ 0xe3b0c44298fc1c14ULL);
        init_random_embeddings(out.vocab.tokens, cfg.embed_dim, emb_rng);
    }

    std::vector<DialogueSession> train_sessions, val_sessions;
    split_sessions(corpus, cfg.val_fraction, cfg.seed, &train_sessions, &val_sessions);

    auto train_samples = build_samples(train_sessions, out.vocab.acts, out.vocab.tokens,
                                       out.vocab.candidates, &out.sample_report);
    auto val_samples =
        build_samples(val_sessions, out.vocab.acts, out.vocab.tokens, out.vocab.candidates);

    FitResult r = fit(cfg, train_samples, val_samples, out.vocab, progress);
    out.params = std::move(r.params);
    out.history = std::move(r.history);
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// Contiguous chunks of a seeded session shuffle; every session lands in
/// exactly one fold.
inline std::vector<std::size_t> assign_folds(std::size_t n_sessions, std::size_t folds,
                                             std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("cross_validate: folds must be >= 2");
    if (folds > n_sessions)
        throw std::invalid_argument("cross_validate: more folds than sessions");
    std::vector<std::size_t> order(n_sessions);
    for (std::size_t i = 0; i < n_sessions; ++i) order[i] = i;
    Rng rng(seed ^ 0xf01dab1eULL);
    rng.shuffle(order);
    std::vector<std::size_t> fold_of(n_sessions);
    for (std::size_t i = 0; i < n_sessions; ++i)
        fold_of[order[i]] = i * folds / n_sessions;
    return fold_of;
}

struct CrossValReport {
    std::vector<EvalReport> folds;
    std::map<std::string, double> mean;
    std::map<std::string, double> stddev;
};

namespace detail {

inline std::map<std::string, double> report_metrics(const EvalReport& r) {
    std::map<std::string, double> m;
    m["micro_f1"] = r.micro_f1;
    m["macro_f1"] = r.macro_f1;
    for (const auto& [k, s] : r.by_k) {
        for (std::size_t n = 1; n <= 4; ++n)
            m["bleu" + std::to_string(n) + "@" + std::to_string(k)] = s.bleu[n - 1];
        m["bleu4_cumu@" + std::to_string(k)] = s.bleu4_cumu;
    }
    return m;
}

}  // namespace detail

/// Train on folds-1 and evaluate on the held-out fold; vocabularies and the
/// candidate set are rebuilt from each fold's training sessions only.
/// Validation inside each fold is drawn from that fold's training portion,
/// seeded per fold.
inline CrossValReport cross_validate(const TrainConfig& cfg,
                                     const std::vector<DialogueSession>& corpus,
                                     std::size_t folds = 5,
                                     const std::string& embeddings_path = "") {
    std::vector<std::size_t> fold_of = assign_folds(corpus.size(), folds, cfg.seed);

    CrossValReport report;
    for (std::size_t fold = 0; fold < folds; ++fold) {
        std::vector<DialogueSession> held, rest;
        for (std::size_t i = 0; i < corpus.size(); ++i)
            (fold_of[i] == fold ? held : rest).push_back(corpus[i]);

        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = cfg.seed + fold;
        TrainOutput trained = train(fold_cfg, rest, embeddings_path);
        auto eval_samples =
            build_samples(held, trained.vocab.acts, trained.vocab.tokens,
                          trained.vocab.candidates);
        report.folds.push_back(evaluate_model(trained.params, eval_samples, trained.vocab,
                                              eval_options_from(cfg)));
    }

    std::map<std::string, std::vector<double>> values;
    for (const auto& r : report.folds)
        for (const auto& [key, v] : detail::report_metrics(r)) values[key].push_back(v);
    for (const auto& [key, vs] : values) {
        double mean = 0.0;
        for (double v : vs) mean += v;
        mean /= static_cast<double>(vs.size());
        double var = 0.0;
        for (double v : vs) var += (v - mean) * (v - mean);
        var /= static_cast<double>(vs.size());
        report.mean[key] = mean;
        report.stddev[key] = std::sqrt(var);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = c & 1 ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xffffffffu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}
inline void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4))
        throw CheckpointError("corrupt-checkpoint: truncated file");
    return v;
}
inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 8))
        throw CheckpointError("corrupt-checkpoint: truncated file");
    return v;
}
inline std::string read_string(std::istream& in, std::uint64_t max_len = (1ull << 32)) {
    const std::uint64_t len = read_u64(in);
    if (len > max_len) throw CheckpointError("corrupt-checkpoint: implausible string length");
    std::string s(len, '\0');
    if (len && !in.read(s.data(), static_cast<std::streamsize>(len)))
        throw CheckpointError("corrupt-checkpoint: truncated file");
    return s;
}

}  // namespace detail

inline const char kCheckpointMagic[] = "ACTFLOW-CKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: magic, version, config text, vocabularies + candidate
/// set, then named parameter sections as little-endian float32 with a
/// CRC32 per section. Values are stored single-precision.
inline void save_checkpoint(const ModelParams& params, const TrainConfig& cfg,
                            const CorpusVocabularies& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    detail::write_u32(out, kCheckpointVersion);
    detail::write_string(out, config_to_string(cfg));

    detail::write_u64(out, vocab.acts.size());
    for (const auto& label : vocab.acts.labels()) detail::write_string(out, label);

    detail::write_u64(out, vocab.tokens.size());
    for (std::size_t i = 0; i < vocab.tokens.size(); ++i) {
        detail::write_string(out, vocab.tokens.token(i));
        const char oov = vocab.tokens.oov_flag(i) ? 1 : 0;
        out.write(&oov, 1);
    }

    detail::write_u64(out, vocab.candidates.size());
    for (const auto& utt : vocab.candidates.utterances()) detail::write_string(out, utt);

    std::vector<std::pair<std::string, const Tensor*>> sections;
    const_cast<ModelParams&>(params).for_each_tensor_persisted(
        [&](const std::string& name, Tensor& t) { sections.push_back({name, &t}); });

    detail::write_u64(out, sections.size());
    for (const auto& [name, tensor] : sections) {
        detail::write_string(out, name);
        detail::write_u64(out, tensor->rows());
        detail::write_u64(out, tensor->cols());
        std::vector<float> values(tensor->size());
        for (std::size_t i = 0; i < tensor->size(); ++i)
            values[i] = static_cast<float>((*tensor)[i]);
        const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(float)));
        detail::write_u32(out, detail::crc32(bytes, values.size() * sizeof(float)));
    }
    if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

struct Checkpoint {
    TrainConfig config;
    CorpusVocabularies vocab;
    ModelParams params;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);

    char magic[sizeof(kCheckpointMagic) - 1];
    if (!in.read(magic, sizeof(magic)) ||
        std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw CheckpointError("corrupt-checkpoint: bad magic");
    const std::uint32_t version = detail::read_u32(in);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported-version: checkpoint version " +
                              std::to_string(version));

    Checkpoint ckpt;
    ckpt.config = parse_config(detail::read_string(in));

    const std::uint64_t n_acts = detail::read_u64(in);
    for (std::uint64_t i = 0; i < n_acts; ++i) ckpt.vocab.acts.add(detail::read_string(in));

    const std::uint64_t n_tokens = detail::read_u64(in);
    std::vector<bool> oov;
    for (std::uint64_t i = 0; i < n_tokens; ++i) {
        ckpt.vocab.tokens.add(detail::read_string(in));
        char flag = 0;
        if (!in.read(&flag, 1)) throw CheckpointError("corrupt-checkpoint: truncated file");
        oov.push_back(flag != 0);
    }
    ckpt.vocab.tokens.oov_ = oov;

    const std::uint64_t n_cands = detail::read_u64(in);
    for (std::uint64_t i = 0; i < n_cands; ++i)
        ckpt.vocab.candidates.add(detail::read_string(in));

    std::map<std::string, Tensor> sections;
    const std::uint64_t n_sections = detail::read_u64(in);
    for (std::uint64_t i = 0; i < n_sections; ++i) {
        const std::string name = detail::read_string(in);
        const std::uint64_t rows = detail::read_u64(in);
        const std::uint64_t cols = detail::read_u64(in);
        if (rows * cols > (1ull << 31))
            throw CheckpointError("corrupt-checkpoint: implausible tensor size");
        std::vector<float> values(rows * cols);
        if (!in.read(reinterpret_cast<char*>(values.data()),
                     static_cast<std::streamsize>(values.size() * sizeof(float))))
            throw CheckpointError("corrupt-checkpoint: truncated file");
        const std::uint32_t expect = detail::read_u32(in);
        const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
        if (detail::crc32(bytes, values.size() * sizeof(float)) != expect)
            throw CheckpointError("corrupt-checkpoint: checksum failure in section " + name);
        Tensor t(rows, cols);
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = static_cast<double>(values[j]);
        sections.emplace(name, std::move(t));
    }

    // rebuild the parameter structure from the config, then fill by name
    const ModelDims dims = dims_from(ckpt.config, ckpt.vocab);
    Rng rng(0);
    ckpt.vocab.tokens.embeddings = Tensor(dims.vocab_size, dims.token_dim);
    ckpt.params =
        init_model_params(dims, ckpt.config.variant(), rng, ckpt.vocab.tokens.embeddings);
    std::size_t filled = 0;
    ckpt.params.for_each_tensor_persisted([&](const std::string& name, Tensor& t) {
        auto it = sections.find(name);
        if (it == sections.end())
            throw CheckpointError("corrupt-checkpoint: missing section " + name);
        if (!t.same_shape(it->second))
            throw CheckpointError("corrupt-checkpoint: shape mismatch in section " + name);
        t = it->second;
        ++filled;
    });
    if (filled != sections.size())
        throw CheckpointError("corrupt-checkpoint: unexpected extra sections");
    ckpt.vocab.tokens.embeddings = ckpt.params.embeddings;
    return ckpt;
}

}  // namespace actflow
