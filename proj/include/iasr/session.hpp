#pragma once

// Interactive transcription state: the current text Y_t plus the full turn
// history. States are immutable values; apply_update returns a new state.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iasr/edit.hpp"
#include "iasr/error.hpp"
#include "json.hpp"

namespace iasr::session {

class UpdateError : public Error {
public:
    using Error::Error;
};

enum class IntentLabel { confirmation, new_input, correction };

std::string_view to_string(IntentLabel intent);

/// Accepts "confirmation", "new_input", "new input", "new-input" and
/// "correction" (case-insensitive). Returns nullopt for anything else.
std::optional<IntentLabel> parse_intent(std::string_view text);

struct TurnRecord {
    std::string input_ref;              // identifies the turn's input I_t
    std::string raw_hypothesis;         // H_t
    std::string corrected_instruction;  // H_t'
    IntentLabel intent = IntentLabel::new_input;
    std::optional<EditInstruction> edit;
    std::string resulting_state;         // Y_t
    std::optional<std::string> error_note;  // set when a stage failed and the turn degraded

    friend bool operator==(const TurnRecord&, const TurnRecord&) = default;
};

class TranscriptionState {
public:
    TranscriptionState() = default;

    const std::string& current_text() const { return current_text_; }
    std::size_t turn_index() const { return history_.size(); }
    const std::vector<TurnRecord>& history() const { return history_; }

    /// Resulting texts of the last `n` records, oldest first. The last
    /// element equals current_text() when there is any history.
    std::vector<std::string> recent_states(std::size_t n) const;

    friend bool operator==(const TranscriptionState&, const TranscriptionState&) = default;

private:
    friend TranscriptionState apply_update(const TranscriptionState&, TurnRecord);

    std::string current_text_;
    std::vector<TurnRecord> history_;
};

/// Empty state: t = 0, Y = "", no history.
TranscriptionState new_session();

/// Checks `record` against `state` and the per-intent update rule:
///   confirmation -> resulting_state == previous text
///   new_input    -> resulting_state == corrected_instruction
///   correction   -> edit present and resulting_state == modify(previous, edit)
/// Throws UpdateError on any violation.
void validate(const TranscriptionState& state, const TurnRecord& record);

/// Validates and appends `record`, returning the successor state.
TranscriptionState apply_update(const TranscriptionState& state, TurnRecord record);

/// Folds `records` from new_session().
TranscriptionState replay(const std::vector<TurnRecord>& records);

nlohmann::json to_json(const EditInstruction& edit);
EditInstruction edit_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TurnRecord& record);
TurnRecord turn_record_from_json(const nlohmann::json& j);
/// {"text", "turn"}; the history is left out.
nlohmann::json state_summary(const TranscriptionState& state);

}  // namespace iasr::session
