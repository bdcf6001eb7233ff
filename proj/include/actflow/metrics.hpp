#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace actflow {

// ---------------------------------------------------------------------------
// Classification F1
// ---------------------------------------------------------------------------

struct ClassStats {
    std::size_t cls = 0;
    std::size_t tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    std::size_t support = 0;
};

inline std::vector<ClassStats> per_class_stats(const std::vector<std::size_t>& preds,
                                               const std::vector<std::size_t>& golds,
                                               std::size_t num_classes) {
    if (preds.size() != golds.size() || preds.empty())
        throw std::invalid_argument("per_class_stats: length mismatch or empty input");
    std::vector<ClassStats> stats(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) stats[c].cls = c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= num_classes || golds[i] >= num_classes)
            throw std::invalid_argument("per_class_stats: class index out of range");
        if (preds[i] == golds[i]) {
            ++stats[preds[i]].tp;
        } else {
            ++stats[preds[i]].fp;
            ++stats[golds[i]].fn;
        }
        ++stats[golds[i]].support;
    }
    for (auto& s : stats) {
        s.precision = s.tp + s.fp == 0 ? 0.0 : static_cast<double>(s.tp) / (s.tp + s.fp);
        s.recall = s.tp + s.fn == 0 ? 0.0 : static_cast<double>(s.tp) / (s.tp + s.fn);
        s.f1 = 2 * s.tp + s.fp + s.fn == 0
                   ? 0.0
                   : 2.0 * static_cast<double>(s.tp) / (2.0 * s.tp + s.fp + s.fn);
    }
    return stats;
}

/// Micro-averaged F1 from pooled counts. For single-label multi-class
/// predictions this coincides with accuracy.
inline double micro_f1(const std::vector<std::size_t>& preds,
                       const std::vector<std::size_t>& golds) {
    std::size_t num_classes = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        num_classes = std::max({num_classes, preds[i] + 1, golds[i] + 1});
    auto stats = per_class_stats(preds, golds, num_classes);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& s : stats) {
        tp += s.tp;
        fp += s.fp;
        fn += s.fn;
    }
    const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

/// Unweighted mean of per-class F1 over all declared classes; classes with
/// no predicted and no actual positives contribute zero.
inline double macro_f1(const std::vector<std::size_t>& preds,
                       const std::vector<std::size_t>& golds, std::size_t num_classes) {
    auto stats = per_class_stats(preds, golds, num_classes);
    double sum = 0.0;
    for (const auto& s : stats) sum += s.f1;
    return sum / static_cast<double>(num_classes);
}

/// Declared class set defaults to the classes present in golds or preds.
inline double macro_f1(const std::vector<std::size_t>& preds,
                       const std::vector<std::size_t>& golds) {
    if (preds.size() != golds.size() || preds.empty())
        throw std::invalid_argument("macro_f1: length mismatch or empty input");
    std::size_t num_classes = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        num_classes = std::max({num_classes, preds[i] + 1, golds[i] + 1});
    auto stats = per_class_stats(preds, golds, num_classes);
    double sum = 0.0;
    std::size_t present = 0;
    for (const auto& s : stats) {
        if (s.support == 0 && s.tp + s.fp == 0) continue;  // never gold, never predicted
        sum += s.f1;
        ++present;
    }
    return present == 0 ? 0.0 : sum / static_cast<double>(present);
}

// ---------------------------------------------------------------------------
// Sentence BLEU
// ---------------------------------------------------------------------------

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(
    const std::vector<std::string>& tokens, std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
    return counts;
}

/// clipped matches and candidate n-gram total
inline std::pair<std::size_t, std::size_t> clipped_matches(
    const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
    std::size_t n) {
    auto cand = ngram_counts(candidate, n);
    auto ref = ngram_counts(reference, n);
    std::size_t matches = 0, total = 0;
    for (const auto& [gram, count] : cand) {
        total += count;
        auto it = ref.find(gram);
        if (it != ref.end()) matches += std::min(count, it->second);
    }
    return {matches, total};
}

inline double brevity_penalty(std::size_t cand_len, std::size_t ref_len) {
    if (cand_len == 0) return 0.0;
    return std::min(1.0, std::exp(1.0 - static_cast<double>(ref_len) /
                                            static_cast<double>(cand_len)));
}

}  // namespace detail

/// BLEU@n: modified n-gram precision with clipping times the brevity
/// penalty min(1, exp(1 - len_ref/len_cand)). An empty candidate scores 0;
/// a candidate shorter than n grams has precision 0.
inline double bleu_n(const std::vector<std::string>& candidate,
                     const std::vector<std::string>& reference, std::size_t n) {
    if (n < 1) throw std::invalid_argument("bleu_n: n must be >= 1");
    if (candidate.empty()) return 0.0;
    auto [matches, total] = detail::clipped_matches(candidate, reference, n);
    if (total == 0) return 0.0;
    const double p = static_cast<double>(matches) / static_cast<double>(total);
    return detail::brevity_penalty(candidate.size(), reference.size()) * p;
}

/// Cumulative BLEU@4: BP * exp(sum_{n=1..4} log(p_n)/4). When any
/// higher-order match count is zero, +1 smoothing is applied to the
/// numerator and denominator of p_n for n >= 2 (raw mode available for
/// audit via smoothing=false, where any zero precision gives 0).
inline double bleu4_cumulative(const std::vector<std::string>& candidate,
                               const std::vector<std::string>& reference,
                               bool smoothing = true) {
    if (candidate.empty()) return 0.0;
    std::size_t matches[4], totals[4];
    bool zero_higher_order = false;
    for (std::size_t n = 1; n <= 4; ++n) {
        auto [m, t] = detail::clipped_matches(candidate, reference, n);
        matches[n - 1] = m;
        totals[n - 1] = t;
        if (n >= 2 && m == 0) zero_higher_order = true;
    }
    if (totals[0] == 0 || matches[0] == 0) return 0.0;

    double log_sum = std::log(static_cast<double>(matches[0]) / totals[0]);
    for (std::size_t n = 2; n <= 4; ++n) {
        double p;
        if (smoothing && zero_higher_order) {
            p = static_cast<double>(matches[n - 1] + 1) / static_cast<double>(totals[n - 1] + 1);
        } else {
            if (matches[n - 1] == 0) return 0.0;
            p = static_cast<double>(matches[n - 1]) / static_cast<double>(totals[n - 1]);
        }
        log_sum += std::log(p);
    }
    return detail::brevity_penalty(candidate.size(), reference.size()) *
           std::exp(log_sum / 4.0);
}

// ---------------------------------------------------------------------------
// Retrieval evaluation
// ---------------------------------------------------------------------------

struct RetrievalScores {
    double bleu[4] = {0, 0, 0, 0};
    double bleu4_cumu = 0.0;
};

enum class TopKAggregation { kMax, kMean };

/// Per sample, each BLEU metric is scored between every one of the top-k
/// candidates and the gold utterance, aggregated (max by default) over the
/// k candidates, then averaged over samples. Samples with an empty gold are
/// skipped and counted.
inline RetrievalScores evaluate_retrieval(
    const std::vector<std::vector<std::size_t>>& ranked_ids,
    const std::vector<std::vector<std::string>>& gold_tokens,
    const std::vector<std::vector<std::string>>& candidate_tokens, std::size_t k,
    TopKAggregation aggregation = TopKAggregation::kMax, std::size_t* skipped = nullptr) {
    if (ranked_ids.size() != gold_tokens.size())
        throw std::invalid_argument("evaluate_retrieval: sample count mismatch");
    if (k < 1) throw std::invalid_argument("evaluate_retrieval: k must be >= 1");

    RetrievalScores sums;
    std::size_t scored = 0, skip_count = 0;
    for (std::size_t i = 0; i < ranked_ids.size(); ++i) {
        if (gold_tokens[i].empty()) {
            ++skip_count;
            continue;
        }
        if (ranked_ids[i].size() < k)
            throw std::invalid_argument("evaluate_retrieval: ranked list shorter than k");
        RetrievalScores best;
        for (std::size_t j = 0; j < k; ++j) {
            const auto& cand = candidate_tokens.at(ranked_ids[i][j]);
            for (std::size_t n = 1; n <= 4; ++n) {
                const double score = bleu_n(cand, gold_tokens[i], n);
                if (aggregation == TopKAggregation::kMax)
                    best.bleu[n - 1] = std::max(best.bleu[n - 1], score);
                else
                    best.bleu[n - 1] += score / static_cast<double>(k);
            }
            const double cumu = bleu4_cumulative(cand, gold_tokens[i]);
            if (aggregation == TopKAggregation::kMax)
                best.bleu4_cumu = std::max(best.bleu4_cumu, cumu);
            else
                best.bleu4_cumu += cumu / static_cast<double>(k);
        }
        for (std::size_t n = 0; n < 4; ++n) sums.bleu[n] += best.bleu[n];
        sums.bleu4_cumu += best.bleu4_cumu;
        ++scored;
    }
    if (skipped) *skipped = skip_count;
    if (scored > 0) {
        for (std::size_t n = 0; n < 4; ++n) sums.bleu[n] /= static_cast<double>(scored);
        sums.bleu4_cumu /= static_cast<double>(scored);
    }
    return sums;
}

// ---------------------------------------------------------------------------
// EvalReport
// ---------------------------------------------------------------------------

struct EvalReport {
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
    std::vector<ClassStats> per_class;
    std::vector<std::string> class_labels;
    std::map<std::size_t, RetrievalScores> by_k;  // top@k blocks
    std::size_t samples = 0;

    /// Flat key-value lines; keys exactly micro_f1, macro_f1, bleu{n}@{k}
    /// and bleu4_cumu@{k}.
    std::string to_text() const {
        std::ostringstream out;
        char buf[64];
        auto emit = [&](const std::string& key, double value) {
            std::snprintf(buf, sizeof(buf), "%.6f", value);
            out << key << " " << buf << "\n";
        };
        emit("micro_f1", micro_f1);
        emit("macro_f1", macro_f1);
        for (const auto& [k, scores] : by_k) {
            for (std::size_t n = 1; n <= 4; ++n)
                emit("bleu" + std::to_string(n) + "@" + std::to_string(k), scores.bleu[n - 1]);
            emit("bleu4_cumu@" + std::to_string(k), scores.bleu4_cumu);
        }
        return out.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["micro_f1"] = micro_f1;
        j["macro_f1"] = macro_f1;
        for (const auto& [k, scores] : by_k) {
            for (std::size_t n = 1; n <= 4; ++n)
                j["bleu" + std::to_string(n) + "@" + std::to_string(k)] = scores.bleu[n - 1];
            j["bleu4_cumu@" + std::to_string(k)] = scores.bleu4_cumu;
        }
        j["samples"] = samples;
        nlohmann::json per = nlohmann::json::array();
        for (const auto& s : per_class) {
            nlohmann::json c;
            c["class"] = s.cls < class_labels.size() ? class_labels[s.cls] : std::to_string(s.cls);
            c["precision"] = s.precision;
            c["recall"] = s.recall;
            c["f1"] = s.f1;
            c["support"] = s.support;
            per.push_back(std::move(c));
        }
        j["per_class"] = std::move(per);
        return j;
    }
};

}  // namespace actflow
