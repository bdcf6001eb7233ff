#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include <json.hpp>

#include "actflow/data.hpp"
#include "actflow/tensor.hpp"

namespace actflow {

/// Markov act-transition graph plus per-act utterance templates with slot
/// fillers. System utterances are drawn from the gold act's template pool,
/// so the act flow is statistically learnable from dialogue history.
struct GeneratorSpec {
    std::vector<std::string> acts;
    std::size_t start_act = 0;
    std::size_t terminal_act = 0;
    std::vector<std::vector<double>> transitions;      // A x A, row-stochastic
    std::vector<std::vector<std::string>> templates;   // per act
    std::map<std::string, std::vector<std::string>> slots;
    std::size_t min_turns = 6;
    std::size_t max_turns = 14;
};

inline void validate_generator_spec(const GeneratorSpec& spec) {
    const std::size_t a = spec.acts.size();
    if (a == 0) throw std::invalid_argument("generator spec: no acts");
    if (spec.start_act >= a || spec.terminal_act >= a)
        throw std::invalid_argument("generator spec: start/terminal act out of range");
    if (spec.transitions.size() != a)
        throw std::invalid_argument("generator spec: transition table must be " +
                                    std::to_string(a) + "x" + std::to_string(a));
    for (std::size_t r = 0; r < a; ++r) {
        if (spec.transitions[r].size() != a)
            throw std::invalid_argument("generator spec: transition row " + std::to_string(r) +
                                        " has wrong length");
        double sum = 0.0;
        for (double p : spec.transitions[r]) {
            if (p < 0.0) throw std::invalid_argument("generator spec: negative probability");
            sum += p;
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("generator spec: transition row " + std::to_string(r) +
                                        " sums to " + std::to_string(sum));
    }
    if (spec.templates.size() != a)
        throw std::invalid_argument("generator spec: template pool count mismatch");
    for (std::size_t i = 0; i < a; ++i)
        if (spec.templates[i].empty())
            throw std::invalid_argument("generator spec: act '" + spec.acts[i] +
                                        "' has no templates");
    if (spec.min_turns < 2 || spec.max_turns < spec.min_turns)
        throw std::invalid_argument("generator spec: bad turn bounds");

    // terminal act must be reachable from the start act
    std::vector<bool> seen(a, false);
    std::queue<std::size_t> frontier;
    frontier.push(spec.start_act);
    seen[spec.start_act] = true;
    while (!frontier.empty()) {
        std::size_t cur = frontier.front();
        frontier.pop();
        for (std::size_t next = 0; next < a; ++next)
            if (spec.transitions[cur][next] > 0.0 && !seen[next]) {
                seen[next] = true;
                frontier.push(next);
            }
    }
    if (!seen[spec.terminal_act])
        throw std::invalid_argument("generator spec: terminal act unreachable from start");
}

namespace detail {

inline std::string fill_template(const std::string& tpl, const GeneratorSpec& spec, Rng& rng) {
    std::string out;
    for (std::size_t i = 0; i < tpl.size();) {
        if (tpl[i] == '{') {
            std::size_t close = tpl.find('}', i);
            if (close == std::string::npos)
                throw std::invalid_argument("generator spec: unbalanced '{' in template: " + tpl);
            const std::string name = tpl.substr(i + 1, close - i - 1);
            auto it = spec.slots.find(name);
            if (it == spec.slots.end() || it->second.empty())
                throw std::invalid_argument("generator spec: unknown slot '" + name + "'");
            out += it->second[rng.index(it->second.size())];
            i = close + 1;
        } else {
            out.push_back(tpl[i++]);
        }
    }
    return out;
}

inline std::size_t sample_next_act(const GeneratorSpec& spec, std::size_t current,
                                   bool allow_terminal, Rng& rng) {
    const auto& row = spec.transitions[current];
    double total = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i)
        if (allow_terminal || i != spec.terminal_act) total += row[i];
    if (total <= 0.0) return spec.terminal_act;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (!allow_terminal && i == spec.terminal_act) continue;
        u -= row[i];
        if (u <= 0.0) return i;
    }
    return spec.terminal_act;
}

}  // namespace detail

/// Deterministic given (seed, spec). Turn 0 is the user's with the start
/// act; speakers alternate; the dialogue ends after a system turn carrying
/// the terminal act, or at max_turns.
inline std::vector<DialogueSession> synth_corpus(std::size_t n_dialogues, std::uint64_t seed,
                                                 const GeneratorSpec& spec) {
    validate_generator_spec(spec);
    Rng rng(seed);
    std::vector<DialogueSession> sessions;
    sessions.reserve(n_dialogues);

    for (std::size_t d = 0; d < n_dialogues; ++d) {
        DialogueSession session;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "syn-%06zu", d + 1);
        session.session_id = buf;

        std::size_t act = spec.start_act;
        for (std::size_t turn = 0; turn < spec.max_turns; ++turn) {
            const bool system_turn = turn % 2 == 1;
            DialogueTurn t;
            t.speaker = system_turn ? "system" : "user";
            t.act = spec.acts[act];
            const auto& pool = spec.templates[act];
            t.utterance = detail::fill_template(pool[rng.index(pool.size())], spec, rng);
            session.turns.push_back(std::move(t));

            if (system_turn && act == spec.terminal_act) break;
            if (turn + 1 == spec.max_turns) break;
            act = detail::sample_next_act(spec, act,
                                          session.turns.size() + 1 >= spec.min_turns, rng);
        }
        sessions.push_back(std::move(session));
    }
    return sessions;
}

/// Nine acts mirroring the restaurant-domain class count. Template pools
/// are deliberately shared between act pairs (ask_area/ask_food,
/// give_area/give_food, offer_main/offer_alt): surface text alone cannot
/// tell the pair members apart, while the act labels can, so encoding the
/// act sequence carries real signal beyond the utterances.
inline GeneratorSpec default_generator_spec() {
    GeneratorSpec spec;
    spec.acts = {"greet",     "ask_area",  "ask_food",     "give_area", "give_food",
                 "offer_main", "offer_alt", "confirm_more", "bye"};
    spec.start_act = 0;
    spec.terminal_act = 8;
    spec.min_turns = 6;
    spec.max_turns = 14;

    auto row = [](std::initializer_list<std::pair<std::size_t, double>> entries) {
        std::vector<double> r(9, 0.0);
        for (auto [i, p] : entries) r[i] = p;
        return r;
    };
    spec.transitions = {
        row({{1, 0.44}, {2, 0.44}, {3, 0.06}, {4, 0.06}}),   // greet
        row({{3, 0.88}, {4, 0.06}, {7, 0.06}}),              // ask_area
        row({{4, 0.88}, {3, 0.06}, {7, 0.06}}),              // ask_food
        row({{5, 0.88}, {6, 0.06}, {1, 0.06}}),              // give_area
        row({{6, 0.88}, {5, 0.06}, {2, 0.06}}),              // give_food
        row({{7, 0.60}, {1, 0.28}, {8, 0.12}}),              // offer_main
        row({{8, 0.60}, {2, 0.28}, {7, 0.12}}),              // offer_alt
        row({{1, 0.44}, {2, 0.44}, {8, 0.12}}),              // confirm_more
        row({{8, 1.0}}),                                     // bye
    };

    const std::vector<std::string> ask_pool = {
        "what part of town do you have in mind",
        "which area are you interested in",
        "do you have a preference for the location",
    };
    const std::vector<std::string> give_pool = {
        "i want something {pref}",
        "{pref} would be great",
        "give me something {pref}",
    };
    const std::vector<std::string> offer_pool = {
        "{name} is a great choice it matches what you asked",
        "how about {name} it fits your request",
        "i can recommend {name} for you",
    };
    spec.templates = {
        {"hello i am looking for a restaurant my reference is {uid}",
         "hi there i need a place to eat reference {uid}"},
        ask_pool,
        ask_pool,
        give_pool,
        give_pool,
        offer_pool,
        offer_pool,
        {"is there anything else i can help you with", "do you need anything else today",
         "can i help with anything more"},
        {"thank you goodbye", "goodbye and have a nice day", "you are welcome goodbye"},
    };

    spec.slots["pref"] = {"cheap", "fancy", "quiet", "popular"};
    spec.slots["name"] = {"golden house", "river cafe", "spice corner", "old mill"};
    std::vector<std::string> uids;
    for (int i = 1; i <= 300; ++i) uids.push_back("ref" + std::to_string(i));
    spec.slots["uid"] = std::move(uids);
    return spec;
}

// ---------------------------------------------------------------------------
// Generator spec file (JSON)
// ---------------------------------------------------------------------------

inline GeneratorSpec parse_generator_spec(const nlohmann::json& j) {
    GeneratorSpec spec;
    if (!j.is_object()) throw ParseError("generator spec: not a JSON object");
    for (const char* field : {"acts", "transitions", "templates"})
        if (!j.contains(field)) throw ParseError(std::string("generator spec: missing ") + field);

    spec.acts = j["acts"].get<std::vector<std::string>>();
    auto act_index = [&](const std::string& name) {
        for (std::size_t i = 0; i < spec.acts.size(); ++i)
            if (spec.acts[i] == name) return i;
        throw ParseError("generator spec: unknown act '" + name + "'");
    };
    spec.start_act = j.contains("start_act") ? act_index(j["start_act"].get<std::string>()) : 0;
    spec.terminal_act = j.contains("terminal_act")
                            ? act_index(j["terminal_act"].get<std::string>())
                            : spec.acts.size() - 1;
    spec.transitions = j["transitions"].get<std::vector<std::vector<double>>>();
    spec.templates.resize(spec.acts.size());
    for (auto it = j["templates"].begin(); it != j["templates"].end(); ++it)
        spec.templates[act_index(it.key())] = it.value().get<std::vector<std::string>>();
    if (j.contains("slots"))
        for (auto it = j["slots"].begin(); it != j["slots"].end(); ++it)
            spec.slots[it.key()] = it.value().get<std::vector<std::string>>();
    if (j.contains("min_turns")) spec.min_turns = j["min_turns"].get<std::size_t>();
    if (j.contains("max_turns")) spec.max_turns = j["max_turns"].get<std::size_t>();
    return spec;
}

inline GeneratorSpec load_generator_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open generator spec: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("generator spec: invalid JSON in " + path);
    return parse_generator_spec(j);
}

inline nlohmann::json generator_spec_to_json(const GeneratorSpec& spec) {
    nlohmann::json templates = nlohmann::json::object();
    for (std::size_t i = 0; i < spec.acts.size(); ++i) templates[spec.acts[i]] = spec.templates[i];
    nlohmann::json slots = nlohmann::json::object();
    for (const auto& [name, fillers] : spec.slots) slots[name] = fillers;
    return {{"acts", spec.acts},
            {"start_act", spec.acts[spec.start_act]},
            {"terminal_act", spec.acts[spec.terminal_act]},
            {"transitions", spec.transitions},
            {"templates", templates},
            {"slots", slots},
            {"min_turns", spec.min_turns},
            {"max_turns", spec.max_turns}};
}

}  // namespace actflow
