#pragma once

#include <filesystem>
#include <iomanip>
#include <map>
#include <string>
#include <vector>

#include "actflow/trainer.hpp"

namespace actflow {

struct AblationVariant {
    std::string name;
    bool use_act_encoder;
    bool use_autoencoder;
    double alpha;
};

/// The comparison grid: the full model and the four one-component removals.
inline std::vector<AblationVariant> ablation_grid(double alpha) {
    return {
        {"full", true, true, alpha},
        {"no-act", false, true, alpha},
        {"no-autoencoder", true, false, alpha},
        {"single-act", true, true, 1.0},
        {"single-utt", true, true, 0.0},
    };
}

struct AblationResult {
    std::string name;
    std::map<std::string, double> mean_metrics;  // over seeds
    std::vector<EvalReport> per_seed;
    double mean_top1_accuracy = 0.0;
};

/// Trains every variant on a shared dialogue-level train/test split,
/// repeating over `seeds` consecutive seeds, and reports per-variant means
/// on the held-out sessions.
inline std::vector<AblationResult> run_ablation(const TrainConfig& base,
                                                const std::vector<DialogueSession>& corpus,
                                                std::size_t seeds, double test_fraction,
                                                const std::string& embeddings_path = "",
                                                std::ostream* progress = nullptr) {
    if (seeds == 0) throw std::invalid_argument("run_ablation: seeds must be >= 1");
    std::vector<DialogueSession> train_sessions, test_sessions;
    split_sessions(corpus, test_fraction, base.seed ^ 0xab1a7eULL, &train_sessions,
                   &test_sessions);
    if (train_sessions.empty() || test_sessions.empty())
        throw std::invalid_argument("run_ablation: split left a side empty");

    std::vector<AblationResult> results;
    for (const AblationVariant& variant : ablation_grid(base.alpha)) {
        AblationResult res;
        res.name = variant.name;
        std::map<std::string, std::vector<double>> collected;
        double top1_sum = 0.0;

        for (std::size_t s = 0; s < seeds; ++s) {
            TrainConfig cfg = base;
            cfg.use_act_encoder = variant.use_act_encoder;
            cfg.use_autoencoder = variant.use_autoencoder;
            cfg.alpha = variant.alpha;
            cfg.seed = base.seed + s;
            if (progress)
                *progress << "ablate: variant=" << variant.name << " seed=" << cfg.seed
                          << "\n";
            TrainOutput trained = train(cfg, train_sessions, embeddings_path);
            auto test_samples = build_samples(test_sessions, trained.vocab.acts,
                                              trained.vocab.tokens, trained.vocab.candidates);
            EvalReport report = evaluate_model(trained.params, test_samples, trained.vocab,
                                               eval_options_from(cfg));
            res.per_seed.push_back(report);
            for (const auto& [key, v] : detail::report_metrics(report))
                collected[key].push_back(v);
            top1_sum += top1_accuracy(trained.params, test_samples);
        }
        for (const auto& [key, vs] : collected) {
            double mean = 0.0;
            for (double v : vs) mean += v;
            res.mean_metrics[key] = mean / static_cast<double>(vs.size());
        }
        res.mean_top1_accuracy = top1_sum / static_cast<double>(seeds);
        results.push_back(std::move(res));
    }
    return results;
}

/// Majority-class baseline: the most frequent training gold act predicted
/// for every test sample.
inline double majority_baseline_micro_f1(const std::vector<TurnSample>& train_samples,
                                         const std::vector<TurnSample>& test_samples,
                                         std::size_t act_count) {
    std::vector<std::size_t> counts(act_count, 0);
    for (const auto& s : train_samples) counts[s.gold_act]++;
    std::size_t majority = 0;
    for (std::size_t c = 1; c < counts.size(); ++c)
        if (counts[c] > counts[majority]) majority = c;
    std::vector<std::size_t> preds(test_samples.size(), majority), golds;
    golds.reserve(test_samples.size());
    for (const auto& s : test_samples) golds.push_back(s.gold_act);
    return micro_f1(preds, golds);
}

namespace detail {

inline const std::vector<std::string>& comparison_columns() {
    static const std::vector<std::string> cols = {
        "micro_f1", "macro_f1", "bleu1@3", "bleu2@3", "bleu3@3", "bleu4@3", "bleu4_cumu@3"};
    return cols;
}

}  // namespace detail

/// comparison.tsv plus a padded human-readable table and one flat report
/// (+ JSON) per variant, all under out_dir.
inline void write_ablation_reports(const std::vector<AblationResult>& results,
                                   const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto& cols = detail::comparison_columns();

    for (const auto& res : results) {
        std::ofstream rep(out_dir + "/" + res.name + ".report");
        char buf[64];
        for (const auto& [key, v] : res.mean_metrics) {
            std::snprintf(buf, sizeof(buf), "%.6f", v);
            rep << key << " " << buf << "\n";
        }
        nlohmann::json j;
        for (const auto& [key, v] : res.mean_metrics) j[key] = v;
        j["top1_accuracy"] = res.mean_top1_accuracy;
        j["seeds"] = res.per_seed.size();
        std::ofstream(out_dir + "/" + res.name + ".report.json") << j.dump(2) << "\n";
    }

    std::ofstream tsv(out_dir + "/comparison.tsv");
    tsv << "variant";
    for (const auto& c : cols) tsv << "\t" << c;
    tsv << "\n";
    char buf[64];
    for (const auto& res : results) {
        tsv << res.name;
        for (const auto& c : cols) {
            std::snprintf(buf, sizeof(buf), "%.6f", res.mean_metrics.count(c)
                                                        ? res.mean_metrics.at(c)
                                                        : 0.0);
            tsv << "\t" << buf;
        }
        tsv << "\n";
    }

    std::ofstream txt(out_dir + "/comparison.txt");
    txt << std::left << std::setw(16) << "variant";
    for (const auto& c : cols) txt << std::right << std::setw(14) << c;
    txt << "\n";
    for (const auto& res : results) {
        txt << std::left << std::setw(16) << res.name;
        for (const auto& c : cols) {
            std::snprintf(buf, sizeof(buf), "%.4f",
                          res.mean_metrics.count(c) ? res.mean_metrics.at(c) : 0.0);
            txt << std::right << std::setw(14) << buf;
        }
        txt << "\n";
    }
}

}  // namespace actflow
