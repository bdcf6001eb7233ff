#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "actflow/encoders.hpp"
#include "actflow/sample.hpp"
#include "actflow/tensor.hpp"

namespace actflow {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DialogueTurn {
    std::string speaker;  // "user" or "system"
    std::string act;
    std::string utterance;
};

struct DialogueSession {
    std::string session_id;
    std::vector<DialogueTurn> turns;
};

/// Reserved vocabulary entry for tokens unseen in the training split; it
/// keeps the all-zero embedding row, matching the zero-padding convention
/// for unknown tokens.
inline const std::string kUnkToken = "<unk>";

// ---------------------------------------------------------------------------
// Text normalization
// ---------------------------------------------------------------------------

/// Lowercase + whitespace tokenization.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

/// Candidate identity: lowercase with whitespace collapsed to single spaces.
inline std::string normalize_utterance(const std::string& text) {
    std::string out;
    for (const std::string& tok : tokenize(text)) {
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus file format: one JSON session object per line
// ---------------------------------------------------------------------------

inline DialogueSession parse_session_json(const nlohmann::json& j, std::size_t line_no) {
    auto fail = [line_no](const std::string& why) {
        throw ParseError("line " + std::to_string(line_no) + ": " + why);
    };
    if (!j.is_object()) fail("record is not an object");
    if (!j.contains("session_id") || !j["session_id"].is_string()) fail("missing session_id");
    if (!j.contains("turns") || !j["turns"].is_array()) fail("missing turns array");

    DialogueSession s;
    s.session_id = j["session_id"].get<std::string>();
    for (const auto& t : j["turns"]) {
        if (!t.is_object()) fail("turn is not an object");
        for (const char* field : {"speaker", "act", "utterance"})
            if (!t.contains(field) || !t[field].is_string())
                fail(std::string("turn missing field '") + field + "'");
        DialogueTurn turn{t["speaker"].get<std::string>(), t["act"].get<std::string>(),
                          t["utterance"].get<std::string>()};
        if (turn.speaker != "user" && turn.speaker != "system")
            fail("unknown speaker tag '" + turn.speaker + "'");
        s.turns.push_back(std::move(turn));
    }
    if (s.turns.empty()) fail("session has no turns");
    return s;
}

inline DialogueSession parse_session_line(const std::string& line, std::size_t line_no) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
        throw ParseError("line " + std::to_string(line_no) + ": invalid JSON");
    return parse_session_json(j, line_no);
}

inline std::vector<DialogueSession> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open corpus file: " + path);
    std::vector<DialogueSession> sessions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        sessions.push_back(parse_session_line(line, line_no));
    }
    return sessions;
}

inline nlohmann::json session_to_json(const DialogueSession& s) {
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : s.turns)
        turns.push_back({{"speaker", t.speaker}, {"act", t.act}, {"utterance", t.utterance}});
    return {{"session_id", s.session_id}, {"turns", turns}};
}

inline void write_corpus(const std::vector<DialogueSession>& sessions, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open corpus file for writing: " + path);
    for (const auto& s : sessions) out << session_to_json(s).dump() << "\n";
}

// ---------------------------------------------------------------------------
// Vocabularies and candidate set
// ---------------------------------------------------------------------------

/// Distinct normalized system utterances from the training split, ids dense
/// in first-occurrence order.
class CandidateSet {
public:
    std::size_t add(const std::string& normalized) {
        auto it = index_.find(normalized);
        if (it != index_.end()) return it->second;
        utterances_.push_back(normalized);
        tokens_.push_back(tokenize(normalized));
        index_.emplace(normalized, utterances_.size() - 1);
        return utterances_.size() - 1;
    }

    int find(const std::string& normalized) const {
        auto it = index_.find(normalized);
        return it == index_.end() ? -1 : static_cast<int>(it->second);
    }

    const std::string& utterance(std::size_t id) const { return utterances_.at(id); }
    const std::vector<std::string>& tokens(std::size_t id) const { return tokens_.at(id); }
    const std::vector<std::string>& utterances() const { return utterances_; }
    std::size_t size() const { return utterances_.size(); }

private:
    std::vector<std::string> utterances_;
    std::vector<std::vector<std::string>> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct CorpusVocabularies {
    ActVocabulary acts;
    TokenVocabulary tokens;
    CandidateSet candidates;
};

/// Acts, tokens and candidates are frozen from the training sessions only;
/// construction order is first occurrence, so ids are stable across runs.
inline CorpusVocabularies build_vocabularies(const std::vector<DialogueSession>& train_sessions) {
    CorpusVocabularies v;
    v.tokens.add(kUnkToken);
    for (const auto& s : train_sessions) {
        for (const auto& t : s.turns) {
            v.acts.add(t.act);
            for (const auto& tok : tokenize(t.utterance)) v.tokens.add(tok);
            if (t.speaker == "system") v.candidates.add(normalize_utterance(t.utterance));
        }
    }
    return v;
}

/// Glorot rows for every token except the reserved unknown entry, which
/// stays zero. Used when no pretrained embedding file is supplied.
inline void init_random_embeddings(TokenVocabulary& vocab, std::size_t dim, Rng& rng) {
    vocab.embeddings = glorot_init(std::max<std::size_t>(vocab.size(), 1), dim, rng);
    vocab.oov_.assign(vocab.size(), false);
    if (auto unk = vocab.find(kUnkToken)) {
        for (std::size_t c = 0; c < dim; ++c) vocab.embeddings(*unk, c) = 0.0;
        vocab.oov_[*unk] = true;
    }
}

/// Text format: one `token v1 ... vk` per line. Vocabulary tokens absent
/// from the file keep zero rows and are flagged OOV. Returns the OOV rate
/// over the vocabulary.
inline double load_pretrained_embeddings(const std::string& path, TokenVocabulary& vocab,
                                         std::size_t dim) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open embedding file: " + path);

    vocab.embeddings = Tensor(vocab.size(), dim);
    std::vector<bool> found(vocab.size(), false);

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        auto idx = vocab.find(token);
        std::vector<double> values;
        values.reserve(dim);
        double x;
        while (ss >> x) values.push_back(x);
        if (values.size() != dim)
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(dim) + " values, got " +
                             std::to_string(values.size()));
        if (!idx) continue;
        for (std::size_t c = 0; c < dim; ++c) vocab.embeddings(*idx, c) = values[c];
        found[*idx] = true;
    }

    vocab.oov_.assign(vocab.size(), false);
    std::size_t oov = 0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (!found[i]) {
            vocab.oov_[i] = true;
            ++oov;
        }
    }
    return vocab.size() == 0 ? 0.0 : static_cast<double>(oov) / static_cast<double>(vocab.size());
}

// ---------------------------------------------------------------------------
// Sample construction
// ---------------------------------------------------------------------------

struct SampleBuildReport {
    std::size_t samples = 0;
    std::size_t skipped_no_user_turn = 0;
    std::size_t skipped_unknown_act = 0;
    std::size_t golds_outside_candidates = 0;
};

/// Tokens unseen in training map to the reserved unknown entry.
inline std::vector<std::size_t> index_tokens(const std::vector<std::string>& tokens,
                                             const TokenVocabulary& vocab) {
    const std::size_t unk = vocab.find(kUnkToken).value_or(0);
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(vocab.find(t).value_or(unk));
    if (out.empty()) out.push_back(unk);  // keep encoder inputs non-empty
    return out;
}

/// Inference-time input: the whole session is history and the model is
/// asked for the system's next act and utterance. Unknown acts anywhere in
/// the session are an error here, since there is no gold side to skip to.
inline TurnSample make_prediction_input(const DialogueSession& session,
                                        const ActVocabulary& acts,
                                        const TokenVocabulary& tokens) {
    TurnSample s;
    s.session_id = session.session_id;
    bool seen_user = false;
    for (const auto& turn : session.turns) {
        auto act_idx = acts.find(turn.act);
        if (!act_idx)
            throw std::invalid_argument("session " + session.session_id + ": unknown act '" +
                                        turn.act + "'");
        std::vector<std::size_t> utt_idx = index_tokens(tokenize(turn.utterance), tokens);
        s.hist_acts.push_back(*act_idx);
        s.hist_utts.push_back(utt_idx);
        if (turn.speaker == "user") {
            seen_user = true;
            s.current_user_utt = utt_idx;
        }
    }
    if (!seen_user)
        throw std::invalid_argument("session " + session.session_id + ": no user turn");
    return s;
}

/// One sample per system turn that has at least one preceding user turn:
/// history is every prior turn, the current user utterance is the most
/// recent user turn, gold targets are the system turn's act and utterance.
inline std::vector<TurnSample> build_samples(const std::vector<DialogueSession>& sessions,
                                             const ActVocabulary& acts,
                                             const TokenVocabulary& tokens,
                                             const CandidateSet& candidates,
                                             SampleBuildReport* report = nullptr) {
    SampleBuildReport local;
    std::vector<TurnSample> samples;
    for (const auto& session : sessions) {
        std::vector<std::size_t> hist_acts;
        std::vector<std::vector<std::size_t>> hist_utts;
        std::vector<std::size_t> last_user_utt;
        bool seen_user = false;
        bool history_ok = true;  // false once an unknown act enters the history

        for (const auto& turn : session.turns) {
            auto act_idx = acts.find(turn.act);
            std::vector<std::size_t> utt_idx = index_tokens(tokenize(turn.utterance), tokens);

            if (turn.speaker == "system" && seen_user) {
                if (!act_idx || !history_ok) {
                    ++local.skipped_unknown_act;
                } else {
                    TurnSample s;
                    s.session_id = session.session_id;
                    s.hist_acts = hist_acts;
                    s.hist_utts = hist_utts;
                    s.current_user_utt = last_user_utt;
                    s.gold_act = *act_idx;
                    s.gold_utt_id = candidates.find(normalize_utterance(turn.utterance));
                    if (s.gold_utt_id < 0) ++local.golds_outside_candidates;
                    s.gold_utt_tokens = tokenize(turn.utterance);
                    samples.push_back(std::move(s));
                    ++local.samples;
                }
            } else if (turn.speaker == "system") {
                ++local.skipped_no_user_turn;
            }

            if (!act_idx)
                history_ok = false;
            else if (history_ok) {
                hist_acts.push_back(*act_idx);
                hist_utts.push_back(utt_idx);
            }
            if (turn.speaker == "user") {
                seen_user = true;
                last_user_utt = utt_idx;
            }
        }
    }
    if (report) *report = local;
    return samples;
}

}  // namespace actflow
