#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace actflow {

/// One training example built from a dialogue at a system turn t: everything
/// before t as history, the most recent user utterance separately, and the
/// system's act and utterance at t as gold targets.
struct TurnSample {
    std::string session_id;
    std::vector<std::size_t> hist_acts;               // a_1 .. a_{t-1}
    std::vector<std::vector<std::size_t>> hist_utts;  // u_1 .. u_{t-1}
    std::vector<std::size_t> current_user_utt;        // most recent user turn
    std::size_t gold_act = 0;
    int gold_utt_id = -1;                 // candidate-set id, -1 when absent
    std::vector<std::string> gold_utt_tokens;  // for BLEU scoring
};

}  // namespace actflow
